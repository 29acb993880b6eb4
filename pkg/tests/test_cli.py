import json
import sys


from coverassert.cli import main
from coverassert.rundir import round_dirs, sha256_file


def run(*argv):
    return main([str(a) for a in argv])


def test_usage_errors(capsys):
    assert run() == 3
    assert run("frobnicate") == 3
    assert "usage" in capsys.readouterr().err
    assert run("parse", "--in", "x.jsonl") == 3
    assert run("--version") == 0
    assert "coverassert" in capsys.readouterr().out


def test_parse_exit_codes(tmp_path):
    good = tmp_path / "g.jsonl"
    good.write_text('{"id": "a", "sva": "assert property (a |-> b);"}\n')
    assert run("parse", "--in", good, "--out", tmp_path / "p.json") == 0
    rec = json.loads((tmp_path / "p.json").read_text())
    assert rec[0]["signals"] == ["a", "b"] and rec[0]["syntax_ok"]
    bad = tmp_path / "b.sv"
    bad.write_text("assert property (a |-> b);\nassert property (c |->);\n")
    assert run("parse", "--in", bad, "--out", tmp_path / "q.json") == 1
    assert [r["assertion_id"] for r in json.loads((tmp_path / "q.json").read_text())] == ["a1", "a2"]
    assert run("parse", "--in", tmp_path / "missing.jsonl", "--out", tmp_path / "r.json") == 3


def test_stage_by_stage(tmp_path, toy):
    t = tmp_path
    assert run("parse", "--in", toy / "seed.jsonl", "--out", t / "parsed.json") == 0
    assert run("semantics", "--in", t / "parsed.json", "--backend", "stub", "--out", t / "sem.json") == 0
    assert run("features", "--in", t / "parsed.json", "--out", t / "struct.json") == 0
    assert run("cluster", "--sem", t / "sem.json", "--struct", t / "struct.json",
               "--config", toy / "config.toml", "--out", t / "groups.json") == 0
    assert run("spec", "--in", toy / "spec.md", "--glossary", toy / "signals.txt", "--out", t / "subspecs.json") == 0
    assert run("map", "--groups", t / "groups.json", "--subspecs", t / "subspecs.json", "--sem", t / "sem.json",
               "--out", t / "mapping.json") == 0
    struct = json.loads((t / "struct.json").read_text())
    n = len(struct["matrix"]["ids"])
    assert n == 4 and len(struct["matrix"]["values"]) == n * n
    groups = json.loads((t / "groups.json").read_text())
    assert sorted(m for g in groups for m in g["member_ids"]) == ["a1", "a2", "a3", "a4"]
    mapping = json.loads((t / "mapping.json").read_text())
    assert set(mapping) == {"group_mappings", "point_alignments", "coverage_table"}
    assert (t / "subspecs.json").read_text() == (toy / "subspecs.json").read_text()


def iterate(toy, out, *extra):
    return run("iterate", "--spec", toy / "spec.md", "--glossary", toy / "signals.txt",
               "--assertions", toy / "seed.jsonl", "--config", toy / "config.toml", "--out", out, *extra)


def test_iterate_missing_spec_creates_nothing(tmp_path, toy):
    out = tmp_path / "run"
    assert run("iterate", "--spec", tmp_path / "nope.md", "--assertions", toy / "seed.jsonl",
               "--generator", "synthetic:perfect", "--out", out) == 3
    assert not out.exists()
    assert run("iterate", "--assertions", toy / "seed.jsonl", "--generator", "synthetic:perfect",
               "--out", out) == 3
    assert not out.exists()
    assert iterate(toy, out) == 3
    assert iterate(toy, out, "--generator", "synthetic:bogus") == 3
    assert not out.exists()


def test_iterate_and_report(tmp_path, toy, capsys):
    out = tmp_path / "run"
    assert iterate(toy, out, "--generator", "synthetic:perfect") == 0
    assert [d.name for d in round_dirs(out)] == ["round0", "round1"]
    for d in round_dirs(out):
        names = sorted(p.name for p in d.iterdir())
        assert names == sorted(["parsed.json", "sem.json", "struct.json", "groups.json", "mapping.json",
                                "feedback.json", "metrics.json"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["final_state"]["converged"] is True
    assert set(manifest["inputs"]) == {"spec", "assertions", "glossary", "config"}
    assert manifest["inputs"]["spec"]["sha256"] == sha256_file(toy / "spec.md")
    capsys.readouterr()

    before = {p: sha256_file(p) for p in out.rglob("*.json")}
    assert run("report", "--run", out, "--format", "table") == 0
    table = capsys.readouterr().out
    assert "N/S/P" in table and "4/4/0" in table and "BFC(%)" in table
    assert run("report", "--run", out, "--format", "json") == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["round"] for r in rows] == [0, 1] and rows[-1]["converged"]
    assert {p: sha256_file(p) for p in out.rglob("*.json")} == before

    # non-empty run dir needs --force
    assert iterate(toy, out, "--generator", "synthetic:perfect") == 3
    assert iterate(toy, out, "--generator", "synthetic:perfect", "--force") == 0


def test_iterate_generator_failure(tmp_path, toy):
    cmd = f"{sys.executable} -c 'import sys; sys.exit(5)'"
    assert iterate(toy, tmp_path / "run", "--generator-cmd", cmd) == 2


def test_iterate_with_subspec_fixture(tmp_path, toy):
    out = tmp_path / "run"
    assert run("iterate", "--subspecs", toy / "subspecs.json", "--assertions", toy / "seed.jsonl",
               "--generator", "synthetic:empty", "--out", out) == 0
    assert len(round_dirs(out)) == 6


def test_bad_config(tmp_path, toy):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[clustering]\nnot_a_key = 1\n")
    code = run("iterate", "--spec", toy / "spec.md", "--assertions", toy / "seed.jsonl", "--config", cfg,
               "--generator", "synthetic:perfect", "--out", tmp_path / "run2")
    assert code == 3 and not (tmp_path / "run2").exists()


def test_report_on_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run("report", "--run", tmp_path / "empty") == 1
    assert run("report", "--run", tmp_path / "absent") == 3
