"""Intent descriptions and unit-norm semantic embeddings for assertions."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, DimensionMismatch, EmptyResponse, ZeroVector
from .gateway import Gateway
from .sva_ast import ParsedAssertion, extract_signals
from .textutil import WORD_RE, load_template, render

MAX_INTENT_CHARS = 1000


@dataclass(frozen=True)
class SemanticRecord:
    assertion_id: str
    intent_text: str
    embedding: tuple[float, ...]
    backend_tag: str
    signals: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "assertion_id": self.assertion_id,
            "intent_text": self.intent_text,
            "embedding": list(self.embedding),
            "backend_tag": self.backend_tag,
            "signals": list(self.signals),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SemanticRecord":
        return cls(d["assertion_id"], d["intent_text"], tuple(float(x) for x in d["embedding"]),
                   d["backend_tag"], tuple(d.get("signals", ())))


def l2_norm(vec: Sequence[float]) -> float:
    """Exactly-summed L2 norm; rescales first when the squares underflow."""
    norm = math.sqrt(math.fsum(x * x for x in vec))
    if norm == 0.0:
        big = max((abs(x) for x in vec), default=0.0)
        if big > 0.0:
            norm = big * math.sqrt(math.fsum((x / big) ** 2 for x in vec))
    return norm


def normalize(vec: Sequence[float]) -> tuple[float, ...]:
    norm = l2_norm(vec)
    if norm == 0.0 or not math.isfinite(norm):
        raise ZeroVector("cannot normalize a zero or non-finite vector")
    return tuple(x / norm for x in vec)


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise DimensionMismatch(f"{len(u)} vs {len(v)}")
    nu, nv = l2_norm(u), l2_norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine of a zero vector")
    if nu * nv >= sys.float_info.min:
        c = math.fsum(a * b for a, b in zip(u, v)) / (nu * nv)
    else:  # products would underflow
        c = math.fsum((a / nu) * (b / nv) for a, b in zip(u, v))
    return max(-1.0, min(1.0, c))


def cosine_matrix(rows: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of the rows of a nonzero matrix."""
    rows = np.asarray(rows, dtype=float)
    scale = np.max(np.abs(rows), axis=1) if rows.size else np.zeros(len(rows))
    if np.any(scale == 0):
        raise ZeroVector("cosine of a zero row")
    rows = rows / scale[:, None]
    unit = rows / np.linalg.norm(rows, axis=1)[:, None]
    return np.clip(unit @ unit.T, -1.0, 1.0)


def _signals_for_prompt(pa: ParsedAssertion) -> tuple[str, ...]:
    if pa.syntax_ok:
        return extract_signals(pa.ast)
    return tuple(sorted(set(WORD_RE.findall(pa.raw_text))))


def extract_intent(pa: ParsedAssertion, gateway: Gateway, template: Optional[str] = None) -> str:
    if not pa.raw_text or not pa.raw_text.strip():
        raise ArgumentError(f"assertion {pa.assertion_id!r} has empty text")
    template = template if template is not None else load_template("intent")
    prompt = render(template, SVA=pa.raw_text.strip(), SIGNALS=", ".join(_signals_for_prompt(pa)))
    reply = ""
    for attempt in range(gateway.cfg.max_retries + 1):
        reply = gateway.chat(prompt).strip()
        if reply and len(reply) <= MAX_INTENT_CHARS:
            return reply
        # a changed prompt bypasses the cached bad answer
        prompt = prompt + f"\n\nYour previous answer was unusable (attempt {attempt + 1}). " \
                          f"Reply with 1-3 sentences, at most {MAX_INTENT_CHARS} characters."
    raise EmptyResponse(f"no usable intent for {pa.assertion_id} (last reply {len(reply)} chars)")


def embed_intent(intent: str, gateway: Gateway) -> tuple[float, ...]:
    if not intent:
        raise ArgumentError("intent must be non-empty")
    vec = gateway.embed(intent)
    if len(vec) != gateway.cfg.d_sem:
        raise DimensionMismatch(f"expected {gateway.cfg.d_sem} values, got {len(vec)}")
    return normalize(vec)


def embed_text(text: str, gateway: Gateway) -> tuple[float, ...]:
    return embed_intent(text, gateway)


def semantic_record(pa: ParsedAssertion, gateway: Gateway, template: Optional[str] = None) -> SemanticRecord:
    intent = extract_intent(pa, gateway, template)
    return SemanticRecord(pa.assertion_id, intent, embed_intent(intent, gateway),
                          gateway.backend_tag, pa.signals)


def semantic_batch(parsed: Sequence[ParsedAssertion], gateway: Gateway,
                   template: Optional[str] = None) -> list[SemanticRecord]:
    template = template if template is not None else load_template("intent")
    return gateway.map(lambda pa: semantic_record(pa, gateway, template), list(parsed))
