"""AST-structural features: LCA distances, padded signal-path vectors and
the structural distance between assertions."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyBatch, LengthMismatch, NodeNotFound, NotALeaf, SyntaxRequired
from .sva_ast import Ast, NodeKind, ParsedAssertion

PAD = 0


@dataclass(frozen=True)
class StructuralVector:
    assertion_id: str
    path_vector: tuple[int, ...]
    avg_lca_distance: float
    raw_length: int

    def to_dict(self) -> dict:
        return {
            "assertion_id": self.assertion_id,
            "path_vector": list(self.path_vector),
            "avg_lca_distance": self.avg_lca_distance,
            "raw_length": self.raw_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralVector":
        return cls(d["assertion_id"], tuple(int(x) for x in d["path_vector"]),
                   float(d["avg_lca_distance"]), int(d["raw_length"]))

    def as_row(self) -> list[float]:
        """Row fed to PCA: path codes followed by the average LCA distance."""
        return [float(x) for x in self.path_vector] + [self.avg_lca_distance]


@dataclass(frozen=True)
class StructuralDistanceMatrix:
    ids: tuple[str, ...]
    values: np.ndarray

    def index(self, assertion_id: str) -> int:
        return self.ids.index(assertion_id)

    def to_dict(self) -> dict:
        return {"ids": list(self.ids), "values": [float(x) for x in self.values.ravel()]}

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralDistanceMatrix":
        n = len(d["ids"])
        return cls(tuple(d["ids"]), np.asarray(d["values"], dtype=float).reshape(n, n))


def _leaf(ast: Ast, node_id: int) -> None:
    if not 0 <= node_id < len(ast):
        raise NodeNotFound(node_id)
    if ast[node_id].kind != NodeKind.SIGNAL_REF:
        raise NotALeaf(f"node {node_id} is {ast[node_id].kind.name.lower()}, not signal_ref")


def lca_distance(ast: Ast, leaf_a: int, leaf_b: int) -> int:
    """Edge count of the path between two signal leaves through their LCA."""
    _leaf(ast, leaf_a)
    _leaf(ast, leaf_b)
    depth, parent = ast.depths, ast.parents
    a, b = leaf_a, leaf_b
    da, db = depth[a], depth[b]
    dist = 0
    while da > db:
        a = parent[a]
        da -= 1
        dist += 1
    while db > da:
        b = parent[b]
        db -= 1
        dist += 1
    while a != b:
        a, b = parent[a], parent[b]
        dist += 2
    return dist


def avg_pairwise_lca(ast: Ast) -> float:
    leaves = ast.signal_leaves()
    if len(leaves) < 2:
        return 0.0
    pairs = list(itertools.combinations(leaves, 2))
    return sum(lca_distance(ast, a, b) for a, b in pairs) / len(pairs)


def signal_path(ast: Ast, leaf: int) -> list[int]:
    """Node-kind codes from the root down to *leaf* (inclusive)."""
    _leaf(ast, leaf)
    codes = []
    node: int | None = leaf
    while node is not None:
        codes.append(int(ast[node].kind))
        node = ast.parents[node]
    return codes[::-1]


def build_structural_vector(pa: ParsedAssertion) -> tuple[list[int], float]:
    """Concatenated paths of each signal's leftmost leaf, by ascending name."""
    if not pa.syntax_ok:
        raise SyntaxRequired(f"assertion {pa.assertion_id} did not parse")
    ast = pa.ast
    first: dict[str, int] = {}
    for leaf in ast.signal_leaves():
        first.setdefault(ast[leaf].value, leaf)
    path: list[int] = []
    for name in sorted(first):
        path.extend(signal_path(ast, first[name]))
    return path, avg_pairwise_lca(ast)


def pad_batch(vectors: Sequence[tuple[str, Sequence[int], float]]) -> list[StructuralVector]:
    if not vectors:
        raise EmptyBatch("cannot pad an empty batch")
    width = max(len(v) for _, v, _ in vectors)
    return [
        StructuralVector(aid, tuple(v) + (PAD,) * (width - len(v)), float(avg), len(v))
        for aid, v, avg in vectors
    ]


def structural_distance(a: StructuralVector, b: StructuralVector,
                        path_weight: float = 1.0, lca_weight: float = 1.0) -> float:
    n = len(a.path_vector)
    if n != len(b.path_vector):
        raise LengthMismatch(f"pad lengths differ: {n} vs {len(b.path_vector)}")
    path_term = 0.0
    if n:
        sq = sum((x - y) ** 2 for x, y in zip(a.path_vector, b.path_vector))
        path_term = math.sqrt(sq) / math.sqrt(n)
    return path_weight * path_term + lca_weight * abs(a.avg_lca_distance - b.avg_lca_distance)


def distance_matrix(vectors: Sequence[StructuralVector],
                    path_weight: float = 1.0, lca_weight: float = 1.0) -> StructuralDistanceMatrix:
    n = len(vectors)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = structural_distance(vectors[i], vectors[j], path_weight, lca_weight)
            values[i, j] = values[j, i] = d
    return StructuralDistanceMatrix(tuple(v.assertion_id for v in vectors), values)


def structural_batch(parsed: Sequence[ParsedAssertion]) -> list[StructuralVector]:
    """Vectors for every syntactically valid assertion, padded together."""
    raw = [(pa.assertion_id, *build_structural_vector(pa)) for pa in parsed if pa.syntax_ok]
    return pad_batch(raw)
