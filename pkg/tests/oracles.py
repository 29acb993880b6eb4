"""Independent reference implementations used only by the tests.

Nothing here imports the code paths it checks.
"""
from __future__ import annotations

import math
import random
from collections import deque

import numpy as np


# -- trees -------------------------------------------------------------------

def ancestors(parent: list, node: int) -> list[int]:
    """Node followed by every ancestor up to the root."""
    chain = [node]
    while parent[chain[-1]] is not None:
        chain.append(parent[chain[-1]])
    return chain


def lca_distance_bruteforce(parent: list, a: int, b: int) -> int:
    """Path length via the deepest common element of the two ancestor sets."""
    anc_a, anc_b = ancestors(parent, a), ancestors(parent, b)
    common = set(anc_a) & set(anc_b)
    # the LCA is the common ancestor closest to a
    lca = next(x for x in anc_a if x in common)
    return anc_a.index(lca) + anc_b.index(lca)


def path_codes_bruteforce(parent: list, kinds: list[int], leaf: int) -> list[int]:
    return [kinds[x] for x in reversed(ancestors(parent, leaf))]


def random_tree(rng: random.Random, max_nodes: int = 50):
    """Random rooted tree as (parent list, kind codes, children lists), pre-order ids."""
    from coverassert.sva_ast import NodeKind  # only for the code table

    n = rng.randint(1, max_nodes)
    children: list[list[int]] = [[] for _ in range(n)]
    parent: list = [None] * n
    # attach each node to an earlier one; then renumber in pre-order
    for v in range(1, n):
        p = rng.randrange(v)
        children[p].append(v)
        parent[v] = p
    order = []
    stack = [0]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(children[v]))
    new = {old: i for i, old in enumerate(order)}
    kids = [[new[c] for c in children[old]] for old in order]
    par = [None if parent[old] is None else new[parent[old]] for old in order]
    inner = [k for k in NodeKind if k not in (NodeKind.SIGNAL_REF, NodeKind.LITERAL)]
    kinds = []
    for i in range(n):
        if kids[i]:
            kinds.append(int(rng.choice(inner)))
        else:
            kinds.append(int(NodeKind.SIGNAL_REF) if rng.random() < 0.8 else int(NodeKind.LITERAL))
    return par, kinds, kids


# -- linear algebra ----------------------------------------------------------

def jacobi_eigen(A, tol: float = 1e-14, max_sweeps: int = 200):
    """Cyclic Jacobi eigenvalue iteration for a symmetric matrix (pure Python)."""
    n = len(A)
    a = [list(map(float, row)) for row in A]
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        scale = math.sqrt(sum(a[i][i] ** 2 for i in range(n))) or 1.0
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p][q]) < 1e-300:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p] = c * vkp - s * vkq
                    v[k][q] = s * vkp + c * vkq
    evals = [a[i][i] for i in range(n)]
    order = sorted(range(n), key=lambda i: -evals[i])
    return [evals[i] for i in order], [[v[k][i] for k in range(n)] for i in order]


def sample_covariance(rows) -> list[list[float]]:
    n, d = len(rows), len(rows[0])
    mean = [sum(r[j] for r in rows) / n for j in range(d)]
    return [[sum((r[i] - mean[i]) * (r[j] - mean[j]) for r in rows) / (n - 1) for j in range(d)] for i in range(d)]


def matmul(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0]))] for i in range(len(A))]


# -- graphs ------------------------------------------------------------------

def components_bfs(n: int, linked) -> list[frozenset[int]]:
    """Connected components by breadth-first search over a pair predicate."""
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp = {s}
        q = deque([s])
        while q:
            u = q.popleft()
            for w in range(n):
                if not seen[w] and w != u and linked(u, w):
                    seen[w] = True
                    comp.add(w)
                    q.append(w)
        comps.append(frozenset(comp))
    return comps


def cos(u, v) -> float:
    return float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))


# -- scoring -----------------------------------------------------------------

def combined_score(sig_a, sig_b, emb_a, emb_b, w_sig=0.5, w_sem=0.5) -> float:
    union = set(sig_a) | set(sig_b)
    jac = len(set(sig_a) & set(sig_b)) / len(union) if union else 0.0
    sim = cos(emb_a, emb_b)
    return (w_sig * jac + w_sem * (sim + 1) / 2) / (w_sig + w_sem)


def structural_distance_oracle(pa, pb, la, lb) -> float:
    a, b = np.asarray(pa, float), np.asarray(pb, float)
    n = len(a)
    path = float(np.linalg.norm(a - b) / np.sqrt(n)) if n else 0.0
    return path + abs(la - lb)


# -- stub hash projection ----------------------------------------------------

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211


def fnv1a(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) % 2 ** 64
    return h


def splitmix_values(seed: int, count: int) -> list[int]:
    out = []
    x = seed
    for _ in range(count):
        x = (x + 0x9E3779B97F4A7C15) % 2 ** 64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2 ** 64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2 ** 64
        out.append(z ^ (z >> 31))
    return out


def stub_vector(text: str, dim: int) -> list[float]:
    import re
    toks = sorted(set(re.findall(r"[a-z0-9_]+", text.lower()))) or [text.lower()]
    acc = [0.0] * dim
    for t in toks:
        for i, z in enumerate(splitmix_values(fnv1a(t.encode()), dim)):
            acc[i] += (z >> 11) / 2 ** 53 * 2 - 1
    return acc
