"""Coverage-driven feedback loop.

Each round: features for the new assertions, re-clustering of every live
assertion, group/point mapping, per-Sub-SPEC coverage. Rounds stop when all
Sub-SPECs reach ``theta`` or the round budget runs out; otherwise the
uncovered points go to the generator and its answers join the pool.
"""
from __future__ import annotations

import json
import logging
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import jsonschema

from .clustering import AssertionGroup, cluster_assertions
from .config import Config
from .errors import AlreadyConverged, GeneratorError, RangeError, SchemaError
from .gateway import Gateway
from .mapping import (GroupMapping, PointAlignment, SubSpecCoverage, align_all, coverage_table,
                      map_groups)
from .semantic import SemanticRecord, semantic_batch
from .spec_pipeline import SubSpec
from .structural import (StructuralDistanceMatrix, StructuralVector, build_structural_vector,
                         distance_matrix, pad_batch)
from .sva_ast import ParsedAssertion, parse_assertion
from .textutil import load_template, normalize_ws, render

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# external verdicts


@dataclass(frozen=True)
class CoiCoverage:
    assertion_id: str
    bfc: float
    sfc: float
    tfc: float


@dataclass(frozen=True)
class FpvVerdict:
    assertion_id: str
    fpv_passed: bool


COVERAGE_SCHEMA = {
    "type": "object",
    "properties": {
        "coi": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["assertion_id", "bfc", "sfc", "tfc"],
                "properties": {"assertion_id": {"type": "string"}, "bfc": {"type": "number"},
                               "sfc": {"type": "number"}, "tfc": {"type": "number"}},
            },
        },
        "fpv": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["assertion_id", "passed"],
                "properties": {"assertion_id": {"type": "string"}, "passed": {"type": "boolean"}},
            },
        },
    },
}


def ingest_coverage(path: str | Path, known_ids: Optional[Iterable[str]] = None
                    ) -> tuple[list[CoiCoverage], list[FpvVerdict]]:
    """Read a coverage report; records for unknown assertion ids are logged and dropped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read coverage report {path}: {exc}") from exc
    try:
        data = json.loads(text) if text.strip() else {}
        jsonschema.validate(data, COVERAGE_SCHEMA)
    except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise SchemaError(f"{path}: {getattr(exc, 'message', exc)}") from exc
    known = set(known_ids) if known_ids is not None else None
    cois, fpvs = [], []
    for rec in data.get("coi", []):
        for key in ("bfc", "sfc", "tfc"):
            if not 0.0 <= rec[key] <= 1.0:
                raise RangeError(f"{path}: {rec['assertion_id']}.{key}={rec[key]} outside [0, 1]")
        if known is not None and rec["assertion_id"] not in known:
            log.warning("coverage record for unknown assertion %s dropped", rec["assertion_id"])
            continue
        cois.append(CoiCoverage(rec["assertion_id"], float(rec["bfc"]), float(rec["sfc"]), float(rec["tfc"])))
    for rec in data.get("fpv", []):
        if known is not None and rec["assertion_id"] not in known:
            log.warning("fpv verdict for unknown assertion %s dropped", rec["assertion_id"])
            continue
        fpvs.append(FpvVerdict(rec["assertion_id"], bool(rec["passed"])))
    return cois, fpvs


def save_coverage(path: str | Path, cois: Sequence[CoiCoverage], fpvs: Sequence[FpvVerdict]) -> None:
    data = {"coi": [{"assertion_id": c.assertion_id, "bfc": c.bfc, "sfc": c.sfc, "tfc": c.tfc} for c in cois],
            "fpv": [{"assertion_id": v.assertion_id, "passed": v.fpv_passed} for v in fpvs]}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class RunMetrics:
    n_total: int
    n_syntax: int
    n_fpv: int
    bfc: Optional[float] = None
    sfc: Optional[float] = None
    tfc: Optional[float] = None
    points_covered: int = 0
    points_total: int = 0

    @property
    def nsp(self) -> str:
        return f"{self.n_total}/{self.n_syntax}/{self.n_fpv}"

    @property
    def point_coverage(self) -> Optional[float]:
        return self.points_covered / self.points_total if self.points_total else None

    def to_dict(self) -> dict:
        return {"n_total": self.n_total, "n_syntax": self.n_syntax, "n_fpv": self.n_fpv,
                "bfc": self.bfc, "sfc": self.sfc, "tfc": self.tfc,
                "points_covered": self.points_covered, "points_total": self.points_total}

    @classmethod
    def from_dict(cls, d: dict) -> "RunMetrics":
        return cls(d["n_total"], d["n_syntax"], d["n_fpv"], d.get("bfc"), d.get("sfc"), d.get("tfc"),
                   d.get("points_covered", 0), d.get("points_total", 0))


def compute_metrics(assertions: Sequence[ParsedAssertion], verdicts: Iterable[FpvVerdict] = (),
                    coverages: Iterable[CoiCoverage] = (),
                    coverage_rows: Sequence[SubSpecCoverage] = ()) -> RunMetrics:
    """N/S/P funnel plus mean COI coverage over assertions that have records."""
    ok = {a.assertion_id for a in assertions if a.syntax_ok}
    passed = {v.assertion_id for v in verdicts if v.fpv_passed}
    known = {a.assertion_id for a in assertions}
    covs = [c for c in coverages if c.assertion_id in known]

    def mean(attr: str) -> Optional[float]:
        return sum(getattr(c, attr) for c in covs) / len(covs) if covs else None

    return RunMetrics(
        n_total=len(assertions),
        n_syntax=len(ok),
        n_fpv=len(passed & ok),
        bfc=mean("bfc"), sfc=mean("sfc"), tfc=mean("tfc"),
        points_covered=sum(r.covered for r in coverage_rows),
        points_total=sum(r.total for r in coverage_rows),
    )


# ---------------------------------------------------------------------------
# loop state and feedback


@dataclass(frozen=True)
class IterationState:
    round: int
    alive_assertions: frozenset[str]
    coverage_by_subspec: Mapping[str, float]
    uncovered_points: tuple[str, ...]
    theta: float = 0.85
    max_rounds: int = 5

    @property
    def converged(self) -> bool:
        return all(r >= self.theta for r in self.coverage_by_subspec.values())

    def to_dict(self) -> dict:
        return {"round": self.round, "alive_assertions": sorted(self.alive_assertions),
                "coverage_by_subspec": dict(sorted(self.coverage_by_subspec.items())),
                "uncovered_points": list(self.uncovered_points), "converged": self.converged,
                "theta": self.theta, "max_rounds": self.max_rounds}


@dataclass(frozen=True)
class FeedbackItem:
    subspec_id: str
    title: str
    coverage_ratio: float
    subspec_excerpt: str
    uncovered_points: tuple[dict, ...]  # {point_id, statement, signals}
    covered_points: tuple[str, ...]
    signals: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"subspec_id": self.subspec_id, "title": self.title, "coverage_ratio": self.coverage_ratio,
                "subspec_excerpt": self.subspec_excerpt,
                "uncovered_points": [dict(p) for p in self.uncovered_points],
                "covered_points": list(self.covered_points), "signals": list(self.signals)}


@dataclass(frozen=True)
class FeedbackPayload:
    round: int
    items: tuple[FeedbackItem, ...]

    def to_dict(self) -> dict:
        return {"round": self.round, "items": [i.to_dict() for i in self.items]}

    @property
    def point_ids(self) -> list[str]:
        return [p["point_id"] for item in self.items for p in item.uncovered_points]


EXCERPT_CHARS = 1200


def build_feedback(state: IterationState, subspecs: Sequence[SubSpec],
                   coverage_rows: Sequence[SubSpecCoverage]) -> FeedbackPayload:
    """Every Sub-SPEC below theta, worst coverage first (ties by subspec id)."""
    if state.converged:
        raise AlreadyConverged(f"round {state.round}: every sub-spec is at or above {state.theta}")
    subs = {s.subspec_id: s for s in subspecs}
    items = []
    for row in sorted(coverage_rows, key=lambda r: (r.ratio, r.subspec_id)):
        if row.ratio >= state.theta:
            continue
        sub = subs[row.subspec_id]
        missing = set(row.uncovered_points)
        uncovered = tuple({"point_id": p.point_id, "statement": p.statement, "signals": list(p.signals)}
                          for p in sub.points if p.point_id in missing)
        covered = tuple(p.statement for p in sub.points if p.point_id not in missing)
        sigs = tuple(sorted({s for p in sub.points if p.point_id in missing for s in p.signals}))
        body = sub.body if len(sub.body) <= EXCERPT_CHARS else sub.body[:EXCERPT_CHARS].rstrip() + " ..."
        items.append(FeedbackItem(sub.subspec_id, sub.title, row.ratio, body, uncovered, covered, sigs))
    return FeedbackPayload(state.round, tuple(items))


def render_feedback_prompt(payload: FeedbackPayload, template: Optional[str] = None) -> str:
    template = template if template is not None else load_template("feedback")
    blocks = []
    for item in payload.items:
        lines = [f"## {item.subspec_id} {item.title} (coverage {item.coverage_ratio:.2f})",
                 item.subspec_excerpt, "", "Uncovered points:"]
        lines += [f"- [{p['point_id']}] {p['statement']} (signals: {', '.join(p['signals'])})"
                  for p in item.uncovered_points]
        if item.covered_points:
            lines += ["", "Already covered:"] + [f"- {s}" for s in item.covered_points]
        blocks.append("\n".join(lines))
    return render(template, ROUND=str(payload.round), ITEMS="\n\n".join(blocks))


# ---------------------------------------------------------------------------
# generators

Generator = Callable[[FeedbackPayload], Sequence[Mapping[str, str]]]


class ExternalCommandGenerator:
    """Runs a command with the feedback JSON on stdin; expects ``[{id, sva}]`` on stdout."""

    def __init__(self, command: str, timeout_s: float = 600.0):
        self.argv = shlex.split(command)
        if not self.argv:
            raise GeneratorError("generator command is empty")
        self.timeout_s = timeout_s

    def __call__(self, payload: FeedbackPayload) -> list[dict]:
        doc = payload.to_dict()
        doc["prompt"] = render_feedback_prompt(payload)
        try:
            proc = subprocess.run(self.argv, input=json.dumps(doc), capture_output=True,
                                  text=True, timeout=self.timeout_s, check=False)
        except subprocess.TimeoutExpired as exc:
            raise GeneratorError(f"generator timed out after {self.timeout_s:g}s") from exc
        except OSError as exc:
            raise GeneratorError(f"cannot start generator: {exc}") from exc
        if proc.returncode != 0:
            raise GeneratorError(f"generator exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
        try:
            out = json.loads(proc.stdout or "[]")
        except json.JSONDecodeError as exc:
            raise GeneratorError(f"generator output is not JSON: {exc}") from exc
        return out


def _check_generated(items, round_index: int) -> list[tuple[str, str]]:
    if not isinstance(items, list):
        raise GeneratorError("generator must return a list of {id, sva}", round_index)
    out = []
    for k, item in enumerate(items):
        if not isinstance(item, Mapping) or not isinstance(item.get("id"), str) \
                or not isinstance(item.get("sva"), str) or not item["id"]:
            raise GeneratorError(f"item {k} is not an {{id, sva}} object with string fields", round_index)
        out.append((item["id"], item["sva"]))
    return out


# ---------------------------------------------------------------------------
# the loop


@dataclass
class RoundRecord:
    round: int
    parsed: list[ParsedAssertion]
    semantics: list[SemanticRecord]
    vectors: list[StructuralVector]
    distances: Optional[StructuralDistanceMatrix]
    groups: list[AssertionGroup]
    group_mappings: list[GroupMapping]
    alignments: list[PointAlignment]
    coverage: list[SubSpecCoverage]
    state: IterationState
    metrics: RunMetrics
    feedback: Optional[FeedbackPayload] = None
    dropped: list[dict] = field(default_factory=list)


@dataclass
class LoopResult:
    state: IterationState
    rounds: list[RoundRecord]
    assertions: list[ParsedAssertion]


class _Pool:
    """Every assertion seen so far plus cached per-assertion features."""

    def __init__(self) -> None:
        self.parsed: list[ParsedAssertion] = []
        self.ids: set[str] = set()
        self.texts: set[str] = set()
        self.sem: dict[str, SemanticRecord] = {}
        self.raw_struct: dict[str, tuple[list[int], float]] = {}

    @property
    def alive(self) -> list[str]:
        return sorted(self.sem)

    def admit(self, items: Sequence[tuple[str, str]], round_index: int) -> tuple[list[ParsedAssertion], list[dict]]:
        fresh: list[ParsedAssertion] = []
        dropped: list[dict] = []
        for aid, sva in items:
            if aid in self.ids:
                raise GeneratorError(f"assertion id {aid!r} is already in use", round_index)
            key = normalize_ws(sva)
            if key in self.texts:
                log.warning("round %d: duplicate assertion %s dropped", round_index, aid)
                dropped.append({"id": aid, "reason": "duplicate"})
                continue
            self.ids.add(aid)
            self.texts.add(key)
            pa = parse_assertion(aid, sva)
            if not pa.syntax_ok:
                log.warning("round %d: %s failed to parse (%s)", round_index, aid, pa.diagnostic)
            fresh.append(pa)
        self.parsed.extend(fresh)
        return fresh, dropped


def _load_round_coverage(coverage_dir: Optional[Path], k: int, known: Iterable[str]):
    if coverage_dir is None:
        return [], []
    path = coverage_dir / f"round{k}.json"
    if not path.exists():
        return [], []
    return ingest_coverage(path, known)


def run_loop(config: Config, subspecs: Sequence[SubSpec], initial: Sequence[tuple[str, str]],
             generator: Generator, gateway: Gateway, coverage_dir: Optional[str | Path] = None,
             on_round: Optional[Callable[[RoundRecord], None]] = None) -> LoopResult:
    """Iterate until every Sub-SPEC reaches theta or ``max_rounds`` feedback rounds are spent.

    Coverage is sticky: a point stays covered once an accepted alignment from
    a still-live assertion has hit it, so ratios never decrease.
    """
    theta, max_rounds = config.loop.theta, config.loop.max_rounds
    fcfg = config.clustering
    cov_dir = Path(coverage_dir) if coverage_dir is not None else None
    pool = _Pool()
    credited: dict[str, set[str]] = {}  # point_id -> assertion ids ever accepted for it
    cois: dict[str, CoiCoverage] = {}
    fpvs: dict[str, FpvVerdict] = {}
    rounds: list[RoundRecord] = []
    round_index = 0
    pending = list(initial)

    while True:
        fresh, dropped = pool.admit(pending, round_index)
        ok_new = [pa for pa in fresh if pa.syntax_ok]
        for rec in semantic_batch(ok_new, gateway):
            pool.sem[rec.assertion_id] = rec
        for pa in ok_new:
            pool.raw_struct[pa.assertion_id] = build_structural_vector(pa)

        alive = pool.alive
        sems = [pool.sem[a] for a in alive]
        vectors: list[StructuralVector] = []
        dmat = None
        groups: list[AssertionGroup] = []
        gmaps: list[GroupMapping] = []
        aligns: list[PointAlignment] = []
        if alive:
            vectors = pad_batch([(a, *pool.raw_struct[a]) for a in alive])
            dmat = distance_matrix(vectors, fcfg.struct_path_weight, fcfg.struct_lca_weight)
            result = cluster_assertions(sems, vectors, dmat, fcfg)
            groups = list(result.groups)
            if subspecs:
                gmaps = map_groups(groups, subspecs, pool.sem)
                aligns = align_all(groups, gmaps, subspecs, pool.sem, config.mapping)
        for al in aligns:
            if al.accepted:
                credited.setdefault(al.point_id, set()).add(al.assertion_id)
        sticky = [PointAlignment(a, pid, 1.0, 1.0, 1.0, True)
                  for pid, aids in credited.items() for a in aids if a in pool.sem]
        cov_rows = coverage_table(subspecs, sticky)

        new_cois, new_fpvs = _load_round_coverage(cov_dir, round_index, pool.ids)
        cois.update((c.assertion_id, c) for c in new_cois)
        fpvs.update((v.assertion_id, v) for v in new_fpvs)
        metrics = compute_metrics(pool.parsed, fpvs.values(), cois.values(), cov_rows)

        state = IterationState(
            round=round_index,
            alive_assertions=frozenset(alive),
            coverage_by_subspec={r.subspec_id: r.ratio for r in cov_rows},
            uncovered_points=tuple(p for r in cov_rows for p in r.uncovered_points),
            theta=theta,
            max_rounds=max_rounds,
        )
        record = RoundRecord(round_index, fresh, sems, vectors, dmat, groups, gmaps, aligns,
                             cov_rows, state, metrics, None, dropped)
        log.info("round %d: N/S/P %s, point coverage %s, converged=%s", round_index, metrics.nsp,
                 {r.subspec_id: round(r.ratio, 4) for r in cov_rows}, state.converged)
        if state.converged or round_index >= max_rounds:
            rounds.append(record)
            if on_round:
                on_round(record)
            return LoopResult(state, rounds, list(pool.parsed))

        payload = build_feedback(state, subspecs, cov_rows)
        record.feedback = payload
        rounds.append(record)
        if on_round:
            on_round(record)
        try:
            reply = generator(payload)
        except GeneratorError as exc:
            if exc.round_index is None:
                raise GeneratorError(str(exc), round_index) from exc
            raise
        pending = _check_generated(reply, round_index)
        round_index += 1
