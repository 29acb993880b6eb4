"""Two-stage grouping of assertions.

Stage one links assertions whose embeddings are close (cosine >= tau_sem)
*and* whose structural distance passes the gate (<= delta_struct); the
connected components are the semantic labels. Stage two one-hot encodes
those labels, appends PCA-reduced structural rows and links fused rows by
cosine >= tau_fuse. Both stages are single linkage, i.e. connected
components of a threshold graph, so results do not depend on input order.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import FusionConfig
from .errors import ArgumentError, DegenerateData, DimensionMismatch, ZeroVector
from .semantic import SemanticRecord, l2_norm
from .structural import StructuralDistanceMatrix, StructuralVector

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, rows orthonormal
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist(), "k": self.k}


@dataclass(frozen=True)
class AssertionGroup:
    group_id: int
    member_ids: tuple[str, ...]
    semantic_label: int
    fused_centroid: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"group_id": self.group_id, "member_ids": list(self.member_ids),
                "semantic_label": self.semantic_label, "fused_centroid": list(self.fused_centroid)}

    @classmethod
    def from_dict(cls, d: dict) -> "AssertionGroup":
        return cls(int(d["group_id"]), tuple(d["member_ids"]), int(d["semantic_label"]),
                   tuple(float(x) for x in d["fused_centroid"]))


# ---------------------------------------------------------------------------
# PCA


def _orient(vec: np.ndarray) -> np.ndarray:
    # largest-|entry| made positive; argmax returns the earliest index on ties
    idx = int(np.argmax(np.abs(vec)))
    return -vec if vec[idx] < 0 else vec


def fit_pca(rows, variance_target: float = 0.95, max_k: int = 8) -> PcaModel:
    """PCA by eigendecomposition of the sample covariance (divisor n - 1).

    k is the smallest count whose cumulative explained variance reaches
    *variance_target*, capped at ``min(max_k, rank)``. If all rows are
    identical, DegenerateData is raised with a fallback model attached.
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
        raise ArgumentError(f"fit_pca needs an n x d matrix with n >= 2, d >= 1; got shape {X.shape}")
    n, d = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    if not np.any(Xc):
        e1 = np.zeros((1, d))
        e1[0, 0] = 1.0
        raise DegenerateData("all rows identical", PcaModel(mean, e1, np.zeros(1)))
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    rank = max(1, int(np.linalg.matrix_rank(Xc)))
    cum = np.cumsum(evals) / evals.sum()
    k = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
    k = max(1, min(k, max_k, rank))
    comps = np.array([_orient(evecs[:, j]) for j in range(k)])
    return PcaModel(mean, comps, evals[:k].copy())


def project(model: PcaModel, row) -> np.ndarray:
    row = np.asarray(row, dtype=float)
    if row.shape[-1] != model.mean.shape[0]:
        raise DimensionMismatch(f"row has {row.shape[-1]} values, model expects {model.mean.shape[0]}")
    return model.components @ (row - model.mean) if row.ndim == 1 else (row - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# linkage


def _unit_rows(rows: Sequence[Sequence[float]]) -> list[list[float]]:
    out = []
    for r in rows:
        norm = l2_norm(r)
        if norm == 0.0:
            raise ZeroVector("cannot link a zero vector by cosine")
        out.append([x / norm for x in r])
    return out


def _cos(u: Sequence[float], v: Sequence[float]) -> float:
    # fsum is exactly rounded, so the value does not depend on pair order
    return math.fsum(a * b for a, b in zip(u, v))


def _components(n: int, edges: Sequence[tuple[int, int]]) -> list[int]:
    """Labels of connected components, numbered by smallest member index."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    labels: dict[int, int] = {}
    out = []
    for i in range(n):
        out.append(labels.setdefault(find(i), len(labels)))
    return out


def default_delta(values: np.ndarray) -> float:
    iu = np.triu_indices(values.shape[0], k=1)
    nz = values[iu][values[iu] > 0]
    return float(np.median(nz)) if nz.size else 0.0


def semantic_cluster(records: Sequence[SemanticRecord], dist_matrix: StructuralDistanceMatrix,
                     cfg: FusionConfig) -> list[int]:
    """Labels from single linkage over pairs passing both the cosine and structural gates."""
    if not records:
        raise ArgumentError("semantic_cluster needs at least one record")
    pos = {aid: i for i, aid in enumerate(dist_matrix.ids)}
    missing = [r.assertion_id for r in records if r.assertion_id not in pos]
    if missing:
        raise ArgumentError(f"distance matrix lacks ids: {missing}")
    idx = [pos[r.assertion_id] for r in records]
    D = dist_matrix.values
    delta = cfg.delta_struct if cfg.delta_struct is not None else default_delta(D)
    unit = _unit_rows([r.embedding for r in records])
    n = len(records)
    edges = [
        (i, j)
        for i in range(n) for j in range(i + 1, n)
        if D[idx[i], idx[j]] <= delta and _cos(unit[i], unit[j]) >= cfg.tau_sem
    ]
    return _components(n, edges)


def fuse(labels: Sequence[int], reduced, alpha: float) -> np.ndarray:
    labels = list(labels)
    R = np.asarray(reduced, dtype=float)
    if R.ndim == 1:
        R = R.reshape(len(labels), -1) if R.size == 0 else R[:, None]
    if R.shape[0] != len(labels):
        raise DimensionMismatch(f"{len(labels)} labels vs {R.shape[0]} reduced rows")
    if not labels:
        raise ArgumentError("fuse needs at least one label")
    L = len(set(labels))
    if sorted(set(labels)) != list(range(L)):
        raise ArgumentError("labels must be dense integers 0..L-1")
    onehot = np.zeros((len(labels), L))
    onehot[np.arange(len(labels)), labels] = alpha
    return np.hstack([onehot, R])


def effective_alpha(reduced, cfg: FusionConfig) -> float:
    """One-hot weight; scaled by the RMS row norm of *reduced* when ``alpha_relative``."""
    R = np.asarray(reduced, dtype=float)
    if not cfg.alpha_relative or R.size == 0:
        return cfg.alpha
    rms = math.sqrt(math.fsum(float(x) * float(x) for x in R.ravel()) / R.shape[0])
    return cfg.alpha * rms if rms > 0 else cfg.alpha


def _link_groups(fused: np.ndarray, tau: float) -> list[int]:
    unit = _unit_rows(fused.tolist())
    n = len(unit)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if _cos(unit[i], unit[j]) >= tau]
    return _components(n, edges)


def final_grouping(fused, ids: Sequence[str], cfg: FusionConfig,
                   semantic_labels: Optional[Sequence[int]] = None) -> list[AssertionGroup]:
    """Groups from single linkage on fused rows at cosine threshold tau_fuse.

    A group's ``semantic_label`` is the most common stage-one label among
    its members (smallest label on ties).
    """
    F = np.asarray(fused, dtype=float)
    if F.shape[0] != len(ids):
        raise DimensionMismatch(f"{len(ids)} ids vs {F.shape[0]} fused rows")
    if F.shape[0] == 0:
        return []
    comp = _link_groups(F, cfg.tau_fuse)
    members: dict[int, list[int]] = {}
    for i, c in enumerate(comp):
        members.setdefault(c, []).append(i)
    blocks = sorted((sorted(ids[i] for i in rows), rows) for rows in members.values())
    groups = []
    for gid, (member_ids, rows) in enumerate(blocks):
        if semantic_labels is not None:
            counts = Counter(semantic_labels[i] for i in rows)
            label = min(counts, key=lambda lab: (-counts[lab], lab))
        else:
            label = 0
        centroid = tuple(float(x) for x in F[rows].mean(axis=0))
        groups.append(AssertionGroup(gid, tuple(member_ids), int(label), centroid))
    return groups


@dataclass(frozen=True)
class ClusteringResult:
    ids: tuple[str, ...]
    semantic_labels: tuple[int, ...]
    pca: Optional[PcaModel]
    reduced: np.ndarray
    fused: np.ndarray
    groups: tuple[AssertionGroup, ...]


def cluster_assertions(records: Sequence[SemanticRecord], vectors: Sequence[StructuralVector],
                       dist_matrix: StructuralDistanceMatrix, cfg: FusionConfig) -> ClusteringResult:
    """Full grouping pipeline over the assertions present in *records*."""
    if not records:
        raise ArgumentError("nothing to cluster")
    by_id = {v.assertion_id: v for v in vectors}
    ids = tuple(r.assertion_id for r in records)
    labels = semantic_cluster(records, dist_matrix, cfg)
    n = len(records)
    if n == 1:
        model, reduced = None, np.zeros((1, 0))
    else:
        rows = np.array([by_id[a].as_row() for a in ids])
        try:
            model = fit_pca(rows, cfg.pca_variance_target, cfg.pca_max_k)
        except DegenerateData as exc:
            log.warning("structural rows are identical; using the degenerate PCA fallback")
            model = exc.model
        reduced = project(model, rows)
    fused = fuse(labels, reduced, effective_alpha(reduced, cfg))
    if n == 1:
        groups = [AssertionGroup(0, ids, labels[0], tuple(float(x) for x in fused[0]))]
    else:
        groups = final_grouping(fused, ids, cfg, labels)
    return ClusteringResult(ids, tuple(labels), model, reduced, fused, tuple(groups))
