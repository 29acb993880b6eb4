import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import stub_vector
from coverassert.config import GatewayConfig
from coverassert.errors import ArgumentError, DimensionMismatch, EmptyResponse, ZeroVector
from coverassert.gateway import Gateway
from coverassert.semantic import (
    SemanticRecord, cosine_matrix, cosine_similarity, embed_intent, extract_intent, normalize, semantic_batch, semantic_record,
)
from coverassert.sva_ast import ParsedAssertion, parse_assertion


def test_intent_example(gateway):
    pa = parse_assertion("a1", "assert property (@(posedge clk) req |-> ##1 gnt);")
    assert extract_intent(pa, gateway) == "SIGNALS[clk,gnt,req] IMPLIES DELAY1"


def test_intent_for_broken_assertion(gateway):
    pa = parse_assertion("a1", "assert property (req |-> );")
    assert not pa.syntax_ok
    assert extract_intent(pa, gateway).startswith("SIGNALS[")


def test_intent_empty_text(gateway):
    with pytest.raises(ArgumentError):
        extract_intent(ParsedAssertion("x", "", None), gateway)


class Chatty:
    tag = "chatty"
    chat_model = embedding_model = "m"

    def __init__(self, replies):
        self.replies = list(replies)

    def chat(self, prompt):
        return self.replies.pop(0) if self.replies else ""

    def embed(self, text):
        return [1.0] * 8


def test_intent_retries_bad_replies():
    pa = parse_assertion("a", "assert property (a);")
    gw = Gateway(GatewayConfig(d_sem=8), backend=Chatty(["", "x" * 1001, "fine"]))
    assert extract_intent(pa, gw) == "fine"
    gw = Gateway(GatewayConfig(d_sem=8, max_retries=1), backend=Chatty(["", ""]))
    with pytest.raises(EmptyResponse):
        extract_intent(pa, gw)


def test_embed_abc_is_normalized_hash_projection(gateway):
    v = embed_intent("abc", gateway)
    raw = np.array(stub_vector("abc", 64))
    assert np.allclose(v, raw / np.linalg.norm(raw), atol=1e-15)
    assert abs(math.sqrt(sum(x * x for x in v)) - 1) <= 1e-6
    assert embed_intent("abc", gateway) == v


def test_embed_errors(gateway):
    with pytest.raises(ArgumentError):
        embed_intent("", gateway)


def test_cosine_examples():
    assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 2], [-1, -2]) == pytest.approx(-1.0)
    with pytest.raises(DimensionMismatch):
        cosine_similarity([1, 2], [1, 2, 3])
    with pytest.raises(ZeroVector):
        cosine_similarity([0, 0], [1, 2])
    # squared entries underflow but the vector is not zero
    assert cosine_similarity([0.0, 1.0], [0.0, 6.8e-187]) == 1.0
    assert cosine_similarity([1e-170, 0.0], [1e-170, 1e-170]) == pytest.approx(2 ** -0.5)
    assert normalize([3e-200, 4e-200]) == pytest.approx((0.6, 0.8))
    assert np.allclose(cosine_matrix(np.array([[0.0, 1e-200], [1.0, 1.0]])), [[1, 2 ** -0.5], [2 ** -0.5, 1]])


vecs = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: math.sqrt(sum(x * x for x in v)) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(vecs, vecs, st.floats(0.01, 100))
def test_cosine_symmetric_and_scale_invariant(u, v, s):
    c = cosine_similarity(u, v)
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(cosine_similarity(v, u), abs=1e-12)
    assert c == pytest.approx(cosine_similarity([s * x for x in u], v), abs=1e-9)


def test_cosine_matrix_matches_pairwise():
    rows = np.random.default_rng(0).normal(size=(5, 4))
    M = cosine_matrix(rows)
    for i in range(5):
        for j in range(5):
            assert M[i, j] == pytest.approx(cosine_similarity(rows[i], rows[j]), abs=1e-12)


def test_batch_is_deterministic_and_ordered():
    parsed = [parse_assertion(f"a{i}", s) for i, s in enumerate([
        "assert property (a && b);", "assert property (@(posedge clk) x |=> y);", "assert property (q);"])]
    one = semantic_batch(parsed, Gateway(GatewayConfig()))
    two = semantic_batch(parsed, Gateway(GatewayConfig(max_in_flight=1)))
    assert one == two
    assert [r.assertion_id for r in one] == ["a0", "a1", "a2"]
    for r in one:
        assert len(r.embedding) == 64 and r.backend_tag == "stub"
        assert abs(np.linalg.norm(r.embedding) - 1) <= 1e-6
        assert SemanticRecord.from_dict(r.to_dict()) == r


def test_record_carries_signals(gateway):
    rec = semantic_record(parse_assertion("a", "assert property (b && a);"), gateway)
    assert rec.signals == ("a", "b")
