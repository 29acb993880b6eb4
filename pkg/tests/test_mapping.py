import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import planted
from oracles import combined_score, cos
from coverassert.clustering import AssertionGroup
from coverassert.config import MappingConfig
from coverassert.mapping import PointAlignment, align_all, align_points, coverage_table, jaccard, map_groups
from coverassert.semantic import SemanticRecord
from coverassert.spec_pipeline import FunctionalPoint, SubSpec


def oracle_argmax(groups, subspecs, sems):
    table = {}
    for g in groups:
        mean = np.mean([sems[a].embedding for a in g.member_ids], axis=0)
        sigs = {s for a in g.member_ids for s in sems[a].signals}
        scored = []
        for sub in subspecs:
            union = sigs | set(sub.signals_mentioned)
            jac = len(sigs & set(sub.signals_mentioned)) / len(union)
            scored.append((-(cos(mean, sub.embedding) + jac), sub.subspec_id))
        table[g.group_id] = min(scored)[1]
    return table


def test_planted_assignment_recovered():
    groups, subspecs, sems, want = planted.build()
    got = {m.group_id: m.subspec_id for m in map_groups(groups, subspecs, sems)}
    assert got == want == oracle_argmax(groups, subspecs, sems)


def test_planted_scores_match_oracle():
    groups, subspecs, sems, _ = planted.build()
    cfg = MappingConfig()
    maps = map_groups(groups, subspecs, sems)
    aligns = align_all(groups, maps, subspecs, sems, cfg)
    assert [a.assertion_id for a in aligns] == sorted(a.assertion_id for a in aligns)
    pts = {p.point_id: p for s in subspecs for p in s.points}
    for al in aligns:
        rec, p = sems[al.assertion_id], pts[al.point_id]
        want = combined_score(rec.signals, p.signals, rec.embedding, p.embedding)
        assert abs(al.combined - want) <= 1e-12
        assert al.accepted == (al.combined >= cfg.tau_map)


def test_invariant_under_scaling_and_order():
    groups, subspecs, sems, want = planted.build()
    scaled = {k: SemanticRecord(r.assertion_id, r.intent_text, tuple(3.7 * x for x in r.embedding), r.backend_tag,
                                r.signals) for k, r in sems.items()}
    got = {m.group_id: m.subspec_id for m in map_groups(groups, subspecs[::-1], scaled)}
    assert got == want


def test_singleton_and_tie_rule():
    rec = SemanticRecord("a", "x", (1.0, 0.0), "t", ("p",))
    g = [AssertionGroup(0, ("a",), 0, ())]
    far = SubSpec("S9", "t", "b", ("zz",), (-1.0, 0.0))
    assert map_groups(g, [far], {"a": rec})[0].subspec_id == "S9"
    twin_a = SubSpec("S2", "t", "b", ("q",), (0.0, 1.0))
    twin_b = SubSpec("S1", "t", "b", ("q",), (0.0, 1.0))
    assert map_groups(g, [twin_a, twin_b], {"a": rec})[0].subspec_id == "S1"


def point(pid, sigs, emb):
    return FunctionalPoint(pid, "S1", "x.", tuple(sigs), tuple(emb))


def test_align_examples():
    rec = SemanticRecord("a", "x", (1.0, 0.0), "t", ("p", "q"))
    sub = SubSpec("S1", "t", "b", (), (1.0, 0.0), (point("S1.p1", ["p", "q"], [1.0, 0.0]),
                                                    point("S1.p2", ["z"], [0.0, 1.0])))
    same, other = align_points(rec, sub, MappingConfig())
    assert same.combined == 1.0 and same.accepted
    assert other.combined == 0.25 and not other.accepted
    assert jaccard([], []) == 0.0


def make_sub(n_points):
    return SubSpec("S1", "t", "b", (), (1.0,), tuple(point(f"S1.p{i}", ["s"], [1.0]) for i in range(n_points)))


def hits(k):
    return [PointAlignment("a", f"S1.p{i}", 1, 1, 1, True) for i in range(k)]


def test_threshold_arithmetic():
    row = coverage_table([make_sub(20)], hits(17))[0]
    assert (row.covered, row.total, row.ratio) == (17, 20, 0.85) and row.ratio >= 0.85
    row = coverage_table([make_sub(20)], hits(16))[0]
    assert row.ratio == 0.80 and row.ratio < 0.85
    assert coverage_table([make_sub(0)], [])[0].ratio == 1.0
    # rejected alignments do not cover
    rej = [PointAlignment("a", "S1.p0", 0, 0, 0.1, False)]
    assert coverage_table([make_sub(2)], rej)[0].covered == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.booleans()), max_size=30), st.integers(0, 30))
def test_coverage_monotone_in_alignments(items, cut):
    aligns = [PointAlignment("a", f"S1.p{i}", 0, 0, 0, ok) for i, ok in items]
    sub = make_sub(10)
    smaller = coverage_table([sub], aligns[:cut])[0].ratio
    assert smaller <= coverage_table([sub], aligns)[0].ratio


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("abcdef"), max_size=4), st.lists(st.sampled_from("abcdef"), max_size=4),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.floats(0, 1), st.floats(0.01, 1))
def test_combined_in_unit_interval(sa, sb, ea, eb, ws, wm):
    if not any(ea) or not any(eb):
        return
    rec = SemanticRecord("a", "x", tuple(ea), "t", tuple(sa))
    sub = SubSpec("S1", "t", "b", (), (1.0,), (point("S1.p1", sb, eb),))
    cfg = MappingConfig(w_sig=ws, w_sem=wm)
    (al,) = align_points(rec, sub, cfg)
    assert -1e-12 <= al.combined <= 1 + 1e-12
    assert al.accepted == (al.combined >= cfg.tau_map)
