"""Group-to-Sub-SPEC matching, assertion-to-point alignment and coverage."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .clustering import AssertionGroup
from .config import MappingConfig
from .errors import ArgumentError
from .semantic import SemanticRecord, cosine_similarity
from .spec_pipeline import SubSpec


@dataclass(frozen=True)
class GroupMapping:
    group_id: int
    subspec_id: str
    score: float

    def to_dict(self) -> dict:
        return {"group_id": self.group_id, "subspec_id": self.subspec_id, "score": self.score}


@dataclass(frozen=True)
class PointAlignment:
    assertion_id: str
    point_id: str
    signal_jaccard: float
    semantic_sim: float
    combined: float
    accepted: bool

    def to_dict(self) -> dict:
        return {"assertion_id": self.assertion_id, "point_id": self.point_id,
                "signal_jaccard": self.signal_jaccard, "semantic_sim": self.semantic_sim,
                "combined": self.combined, "accepted": self.accepted}


@dataclass(frozen=True)
class SubSpecCoverage:
    subspec_id: str
    covered: int
    total: int
    ratio: float
    covered_points: tuple[str, ...]
    uncovered_points: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"subspec_id": self.subspec_id, "covered": self.covered, "total": self.total,
                "ratio": self.ratio, "covered_points": list(self.covered_points),
                "uncovered_points": list(self.uncovered_points)}


def jaccard(a: Sequence[str], b: Sequence[str]) -> float:
    sa, sb = set(a), set(b)
    union = sa | sb
    return len(sa & sb) / len(union) if union else 0.0


def _safe_cos(u: Sequence[float], v: Sequence[float]) -> float:
    if not any(u) or not any(v):
        return 0.0
    return cosine_similarity(u, v)


def map_groups(groups: Sequence[AssertionGroup], subspecs: Sequence[SubSpec],
               sems: Mapping[str, SemanticRecord]) -> list[GroupMapping]:
    """Map each group to the Sub-SPEC maximizing cosine(mean embedding) + signal Jaccard.

    Signals come from ``SemanticRecord.signals``; ties go to the smallest subspec_id.
    """
    if not groups or not subspecs:
        raise ArgumentError("map_groups needs at least one group and one sub-spec")
    out = []
    for g in groups:
        embs = [sems[a].embedding for a in g.member_ids]
        dim = len(embs[0])
        mean = [math.fsum(e[i] for e in embs) / len(embs) for i in range(dim)]
        sig_union = sorted({s for a in g.member_ids for s in sems[a].signals})
        best = None
        for sub in subspecs:
            score = _safe_cos(mean, sub.embedding) + jaccard(sig_union, sub.signals_mentioned)
            key = (-score, sub.subspec_id)
            if best is None or key < best[0]:
                best = (key, sub.subspec_id, score)
        out.append(GroupMapping(g.group_id, best[1], best[2]))
    return out


def align_points(record: SemanticRecord, subspec: SubSpec, cfg: MappingConfig) -> list[PointAlignment]:
    """Score one assertion against every point of its group's Sub-SPEC."""
    out = []
    wsum = cfg.w_sig + cfg.w_sem
    for p in subspec.points:
        jac = jaccard(record.signals, p.signals)
        sim = _safe_cos(record.embedding, p.embedding)
        combined = (cfg.w_sig * jac + cfg.w_sem * ((sim + 1.0) / 2.0)) / wsum
        out.append(PointAlignment(record.assertion_id, p.point_id, jac, sim, combined, combined >= cfg.tau_map))
    return out


def align_all(groups: Sequence[AssertionGroup], mappings: Sequence[GroupMapping], subspecs: Sequence[SubSpec],
              sems: Mapping[str, SemanticRecord], cfg: MappingConfig) -> list[PointAlignment]:
    """Alignments for every grouped assertion, ordered by assertion id then point order."""
    sub_by_id = {s.subspec_id: s for s in subspecs}
    target = {m.group_id: m.subspec_id for m in mappings}
    out: list[PointAlignment] = []
    pairs = sorted((a, target[g.group_id]) for g in groups for a in g.member_ids)
    for aid, sid in pairs:
        out.extend(align_points(sems[aid], sub_by_id[sid], cfg))
    return out


def coverage_table(subspecs: Sequence[SubSpec], alignments: Sequence[PointAlignment]) -> list[SubSpecCoverage]:
    hit = {a.point_id for a in alignments if a.accepted}
    rows = []
    for s in subspecs:
        covered = tuple(p.point_id for p in s.points if p.point_id in hit)
        uncovered = tuple(p.point_id for p in s.points if p.point_id not in hit)
        total = len(s.points)
        ratio = len(covered) / total if total else 1.0
        rows.append(SubSpecCoverage(s.subspec_id, len(covered), total, ratio, covered, uncovered))
    return rows
