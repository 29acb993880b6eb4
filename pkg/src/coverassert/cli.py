"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation or parse failure, 2 backend or
generator failure, 3 bad arguments or missing inputs.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .clustering import AssertionGroup, cluster_assertions
from .config import Config, load_config
from .coverage_feedback import ExternalCommandGenerator, run_loop
from .errors import (ArgumentError, BackendError, CoverAssertError, GeneratorError, SchemaError,
                     ValidationError)
from .gateway import Gateway
from .generators import MODES, SyntheticGenerator
from .mapping import align_all, coverage_table, map_groups
from .rundir import (load_report_rows, read_json, render_json, render_table, write_json,
                     write_manifest, write_round, write_subspecs)
from .semantic import SemanticRecord, semantic_batch
from .spec_pipeline import build_subspecs, load_fixture, subspecs_to_json
from .structural import StructuralDistanceMatrix, StructuralVector, distance_matrix, structural_batch
from .sva_ast import ParsedAssertion, parse_many, read_assertions
from .textutil import read_glossary

log = logging.getLogger("coverassert")

EXIT_OK, EXIT_INVALID, EXIT_BACKEND, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _need(path: Optional[str], what: str) -> Path:
    if path is None:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {path}")
    return p


def _config(args) -> Config:
    cfg = load_config(_need(args.config, "config file") if args.config else None)
    if getattr(args, "backend", None):
        cfg = cfg.replace(gateway=dataclasses.replace(cfg.gateway, backend=args.backend))
    if args.seed is not None:
        cfg = cfg.replace(clustering=dataclasses.replace(cfg.clustering, seed=args.seed))
    return cfg


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_parse(args) -> int:
    parsed = parse_many(read_assertions(_need(args.inp, "input file")))
    write_json(args.out, [p.to_dict() for p in parsed])
    bad = [p for p in parsed if not p.syntax_ok]
    _say(f"parsed {len(parsed)} assertions: {len(parsed) - len(bad)} ok, {len(bad)} with syntax errors")
    for p in bad:
        _say(f"  {p.assertion_id}: {p.diagnostic}")
    return EXIT_INVALID if bad else EXIT_OK


def _load_parsed(path) -> list[ParsedAssertion]:
    return [ParsedAssertion.from_dict(d) for d in read_json(_need(path, "parsed file"))]


def cmd_semantics(args) -> int:
    cfg = _config(args)
    parsed = _load_parsed(args.inp)
    gateway = Gateway(cfg.gateway)
    ok = [p for p in parsed if p.syntax_ok]
    records = semantic_batch(ok, gateway)
    write_json(args.out, [r.to_dict() for r in records])
    _say(f"embedded {len(records)} intents (d_sem={cfg.gateway.d_sem}, backend={gateway.backend_tag}); "
         f"skipped {len(parsed) - len(ok)} unparsed")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _config(args)
    parsed = [p for p in _load_parsed(args.inp) if p.syntax_ok]
    if not parsed:
        raise ValidationError("empty batch", "no syntactically valid assertions")
    vectors = structural_batch(parsed)
    matrix = distance_matrix(vectors, cfg.clustering.struct_path_weight, cfg.clustering.struct_lca_weight)
    write_json(args.out, {"vectors": [v.to_dict() for v in vectors], "matrix": matrix.to_dict()})
    _say(f"structural vectors for {len(vectors)} assertions, pad length {len(vectors[0].path_vector)}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _config(args)
    sems = [SemanticRecord.from_dict(d) for d in read_json(_need(args.sem, "semantic file"))]
    st = read_json(_need(args.struct, "structural file"))
    vectors = [StructuralVector.from_dict(v) for v in st["vectors"]]
    matrix = StructuralDistanceMatrix.from_dict(st["matrix"])
    result = cluster_assertions(sems, vectors, matrix, cfg.clustering)
    write_json(args.out, [g.to_dict() for g in result.groups])
    _say(f"{len(sems)} assertions -> {len(set(result.semantic_labels))} semantic clusters -> "
         f"{len(result.groups)} groups")
    return EXIT_OK


def _subspecs_from(args, cfg: Config, gateway: Gateway):
    if getattr(args, "subspecs", None):
        return load_fixture(_need(args.subspecs, "subspec file"))
    spec = _need(args.spec if hasattr(args, "spec") else args.inp, "spec file")
    glossary = read_glossary(_need(args.glossary, "glossary") if args.glossary else None)
    return build_subspecs(spec.read_text(encoding="utf-8"), gateway, glossary)


def cmd_spec(args) -> int:
    cfg = _config(args)
    spec = _need(args.inp, "spec file")
    glossary = read_glossary(_need(args.glossary, "glossary") if args.glossary else None)
    subs = build_subspecs(spec.read_text(encoding="utf-8"), Gateway(cfg.gateway), glossary)
    write_json(args.out, subspecs_to_json(subs))
    _say(f"{len(subs)} sub-specs, {sum(len(s.points) for s in subs)} functional points")
    return EXIT_OK


def cmd_map(args) -> int:
    cfg = _config(args)
    groups = [AssertionGroup.from_dict(d) for d in read_json(_need(args.groups, "groups file"))]
    subs = load_fixture(_need(args.subspecs, "subspec file"))
    sems = {r.assertion_id: r for r in (SemanticRecord.from_dict(d) for d in read_json(_need(args.sem, "semantic file")))}
    mappings = map_groups(groups, subs, sems)
    aligns = align_all(groups, mappings, subs, sems, cfg.mapping)
    table = coverage_table(subs, aligns)
    write_json(args.out, {"group_mappings": [m.to_dict() for m in mappings],
                          "point_alignments": [a.to_dict() for a in aligns],
                          "coverage_table": [c.to_dict() for c in table]})
    for row in table:
        _say(f"  {row.subspec_id}: {row.covered}/{row.total} = {row.ratio:.4f}")
    return EXIT_OK


def _generator(args, cfg: Config):
    if args.generator_cmd and args.generator:
        raise UsageError("give either --generator-cmd or --generator, not both")
    if args.generator_cmd:
        return ExternalCommandGenerator(args.generator_cmd, cfg.loop.generator_timeout_s), args.generator_cmd
    if args.generator:
        mode = args.generator.split(":", 1)[1] if args.generator.startswith("synthetic:") else args.generator
        if mode not in MODES:
            raise UsageError(f"unknown generator {args.generator!r}; use synthetic:<{'|'.join(MODES)}>")
        return SyntheticGenerator(mode), f"synthetic:{mode}"
    raise UsageError("iterate needs --generator-cmd or --generator")


def cmd_iterate(args) -> int:
    cfg = _config(args)
    inputs = {
        "spec": _need(args.spec, "spec file") if not args.subspecs else None,
        "subspecs": _need(args.subspecs, "subspec file") if args.subspecs else None,
        "assertions": _need(args.assertions, "assertions file"),
        "glossary": _need(args.glossary, "glossary") if args.glossary else None,
        "config": _need(args.config, "config file") if args.config else None,
    }
    if args.coverage_dir:
        _need(args.coverage_dir, "coverage directory")
    generator, gen_desc = _generator(args, cfg)
    seeds = read_assertions(inputs["assertions"])
    run_dir = Path(args.out)
    if run_dir.exists() and any(run_dir.iterdir()):
        if not args.force:
            raise UsageError(f"run directory {run_dir} is not empty (use --force to replace it)")
        shutil.rmtree(run_dir)
    gateway = Gateway(cfg.gateway)
    subs = _subspecs_from(args, cfg, gateway)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_subspecs(run_dir, subs)
    result = run_loop(cfg, subs, seeds, generator, gateway, args.coverage_dir,
                      on_round=lambda rec: write_round(run_dir, rec))
    write_manifest(run_dir, cfg, inputs, gen_desc, result)
    st = result.state
    _say(f"{'converged' if st.converged else 'not converged'} after {st.round} feedback round(s); "
         f"coverage " + ", ".join(f"{k}={v:.4f}" for k, v in sorted(st.coverage_by_subspec.items())))
    _say(render_table(load_report_rows(run_dir)).rstrip())
    return EXIT_OK


def cmd_report(args) -> int:
    run = _need(args.run, "run directory")
    rows = load_report_rows(run)
    if not rows:
        raise ValidationError("empty run", f"{run} has no round directories")
    text = render_table(rows) if args.format == "table" else render_json(rows)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config with [clustering] [mapping] [loop] [gateway]")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--seed", type=int, default=None, help="overrides clustering.seed")

    ap = _Parser(prog="coverassert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"coverassert {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", parents=[common], help="parse assertions (.jsonl or .sv)")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("semantics", parents=[common], help="intent text + embeddings")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--backend", choices=["stub", "http"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_semantics)

    p = sub.add_parser("features", parents=[common], help="structural vectors + distance matrix")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cluster", parents=[common], help="fused semantic/structural grouping")
    p.add_argument("--sem", required=True)
    p.add_argument("--struct", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("spec", parents=[common], help="split a spec into sub-specs and points")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--backend", choices=["stub", "http"])
    p.add_argument("--glossary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spec)

    p = sub.add_parser("map", parents=[common], help="map groups to sub-specs and points")
    p.add_argument("--groups", required=True)
    p.add_argument("--subspecs", required=True)
    p.add_argument("--sem", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("iterate", parents=[common], help="run the coverage feedback loop")
    p.add_argument("--spec")
    p.add_argument("--subspecs", help="pre-extracted subspecs.json instead of --spec")
    p.add_argument("--assertions", required=True)
    p.add_argument("--glossary")
    p.add_argument("--generator-cmd", help="external generator: feedback JSON on stdin, [{id, sva}] on stdout")
    p.add_argument("--generator", help="built-in scripted generator, e.g. synthetic:perfect")
    p.add_argument("--coverage-dir", help="directory of round<k>.json coverage reports")
    p.add_argument("--backend", choices=["stub", "http"])
    p.add_argument("--force", action="store_true", help="replace a non-empty run directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("report", parents=[common], help="render per-round metrics of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)
    if args.command == "iterate" and not (args.spec or args.subspecs):
        ap.print_usage(sys.stderr)
        _say("error: iterate needs --spec or --subspecs")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ArgumentError) as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except (BackendError, GeneratorError) as exc:
        _say(f"backend error: {exc}")
        return EXIT_BACKEND
    except (ValidationError, SchemaError, CoverAssertError, ValueError, KeyError) as exc:
        _say(f"invalid input: {exc}")
        return EXIT_INVALID
    except OSError as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
