"""Run-directory layout and per-round report rendering.

Layout::

    run_dir/
      manifest.json        config snapshot, input hashes, final state
      subspecs.json
      round<k>/parsed.json sem.json struct.json groups.json
               mapping.json feedback.json metrics.json
"""
from __future__ import annotations

import hashlib
import json
import re
import time
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from . import __version__
from .config import Config
from .coverage_feedback import LoopResult, RoundRecord, RunMetrics
from .spec_pipeline import SubSpec, subspecs_to_json


def write_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_round(run_dir: Path, rec: RoundRecord) -> None:
    d = run_dir / f"round{rec.round}"
    write_json(d / "parsed.json", [p.to_dict() for p in rec.parsed])
    write_json(d / "sem.json", [s.to_dict() for s in rec.semantics])
    write_json(d / "struct.json", {
        "vectors": [v.to_dict() for v in rec.vectors],
        "matrix": rec.distances.to_dict() if rec.distances is not None else {"ids": [], "values": []},
    })
    write_json(d / "groups.json", [g.to_dict() for g in rec.groups])
    write_json(d / "mapping.json", {
        "group_mappings": [m.to_dict() for m in rec.group_mappings],
        "point_alignments": [a.to_dict() for a in rec.alignments],
        "coverage_table": [c.to_dict() for c in rec.coverage],
    })
    write_json(d / "feedback.json", rec.feedback.to_dict() if rec.feedback is not None else None)
    write_json(d / "metrics.json", {"metrics": rec.metrics.to_dict(), "state": rec.state.to_dict(),
                                    "dropped": rec.dropped})


def write_manifest(run_dir: Path, config: Config, inputs: Mapping[str, Optional[str | Path]],
                   generator: str, result: Optional[LoopResult]) -> None:
    manifest = {
        "tool": "coverassert",
        "version": __version__,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": config.to_dict(),
        "generator": generator,
        "inputs": {name: {"path": str(p), "sha256": sha256_file(p)} for name, p in sorted(inputs.items()) if p},
    }
    if result is not None:
        manifest["rounds"] = len(result.rounds)
        manifest["final_state"] = result.state.to_dict()
    write_json(run_dir / "manifest.json", manifest)


def write_subspecs(run_dir: Path, subspecs: Sequence[SubSpec]) -> None:
    write_json(run_dir / "subspecs.json", subspecs_to_json(subspecs))


# ---------------------------------------------------------------------------
# report


def round_dirs(run_dir: str | Path) -> list[Path]:
    run_dir = Path(run_dir)
    found = [p for p in run_dir.iterdir() if p.is_dir() and re.fullmatch(r"round\d+", p.name)]
    return sorted(found, key=lambda p: int(p.name[5:]))


def load_report_rows(run_dir: str | Path) -> list[dict]:
    rows = []
    for d in round_dirs(run_dir):
        data = read_json(d / "metrics.json")
        state = data["state"]
        rows.append({
            "round": state["round"],
            "metrics": data["metrics"],
            "coverage_by_subspec": state["coverage_by_subspec"],
            "converged": state["converged"],
        })
    return rows


def _pct(x: Optional[float]) -> str:
    return "-" if x is None else f"{100.0 * x:.2f}"


def format_nsp(n_total: int, n_syntax: int, n_fpv: int) -> str:
    return f"{n_total}/{n_syntax}/{n_fpv}"


def render_table(rows: Iterable[Mapping]) -> str:
    """One line per round: N/S/P, BFC%, SFC%, TFC%, point coverage and per-Sub-SPEC ratios."""
    rows = list(rows)
    subs = sorted({s for r in rows for s in r.get("coverage_by_subspec", {})})
    header = ["Round", "N/S/P", "BFC(%)", "SFC(%)", "TFC(%)", "FP cov"] + subs + ["Converged"]
    body = []
    for r in rows:
        m = RunMetrics.from_dict(r["metrics"]) if isinstance(r["metrics"], Mapping) else r["metrics"]
        fp = m.point_coverage
        cov = r.get("coverage_by_subspec", {})
        body.append([
            str(r["round"]), format_nsp(m.n_total, m.n_syntax, m.n_fpv),
            _pct(m.bfc), _pct(m.sfc), _pct(m.tfc), "-" if fp is None else f"{fp:.4f}",
            *[f"{cov[s]:.4f}" if s in cov else "-" for s in subs],
            "yes" if r.get("converged") else "no",
        ])
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in body]
    return "\n".join(lines) + "\n"


def render_json(rows: Sequence[Mapping]) -> str:
    return json.dumps(list(rows), indent=2, sort_keys=True) + "\n"
