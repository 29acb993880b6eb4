"""Chat and embedding access behind one interface.

Two backends: ``StubBackend`` (deterministic, offline, used by tests and
replayable runs) and ``HttpBackend`` (JSON over HTTP). The ``Gateway``
wraps either with retry/backoff and a persistent response cache.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TypeVar

import httpx

from .config import GatewayConfig
from .errors import (ArgumentError, AuthError, BackendError, DimensionMismatch,
                     TransientBackendError)
from .sva_ast import KEYWORDS, NodeKind, parse_assertion
from .textutil import WORD_RE, sentences, signal_tokens

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# stub definitions


def fnv1a_64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def splitmix64(seed: int) -> Iterable[int]:
    state = seed & _MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def token_vector(token: str, dim: int) -> list[float]:
    """Pseudo-random vector in [-1, 1]^dim seeded by the token's FNV-1a hash."""
    stream = splitmix64(fnv1a_64(token.encode("utf-8")))
    # top 53 bits -> uniform double in [0, 1) -> [-1, 1)
    return [(next(stream) >> 11) * 2.0 ** -53 * 2.0 - 1.0 for _ in range(dim)]


def stub_tokens(text: str) -> list[str]:
    toks = sorted(set(re.findall(r"[a-z0-9_]+", text.lower())))
    return toks or [text.lower()]


def stub_embedding(text: str, dim: int) -> list[float]:
    """Un-normalized sum of token vectors over the sorted token set of *text*."""
    acc = [0.0] * dim
    for tok in stub_tokens(text):
        for i, x in enumerate(token_vector(tok, dim)):
            acc[i] += x
    return acc


_OP_NAMES = {
    "|->": "IMPLIES", "|=>": "IMPLIES_NEXT",
    "&&": "AND", "||": "OR", "&": "BITAND", "|": "BITOR", "^": "XOR",
    "==": "EQ", "!=": "NE", "===": "CASE_EQ", "!==": "CASE_NE",
    "<": "LT", "<=": "LE", ">": "GT", ">=": "GE",
    "!": "NOT", "~": "INV",
}


def stub_intent(sva: str) -> str:
    """``SIGNALS[<sorted signals>] <operator kinds of the property body in pre-order>``."""
    pa = parse_assertion("stub", sva)
    if not pa.syntax_ok:
        names = sorted({w for w in WORD_RE.findall(sva) if w not in KEYWORDS})
        return f"SIGNALS[{','.join(names)}] UNPARSED"
    ast = pa.ast
    prop = ast[ast[ast.root].children[0]]
    ops: list[str] = []
    stack = [prop.children[-1]]
    while stack:
        node = ast[stack.pop()]
        stack.extend(reversed(node.children))
        if node.kind in (NodeKind.IMPLICATION, NodeKind.BOOLEAN_OP, NodeKind.COMPARISON, NodeKind.UNARY_OP):
            ops.append(_OP_NAMES.get(node.value, node.value.upper()))
        elif node.kind == NodeKind.DELAY:
            ops.append("DELAY" + node.value.replace(":", "TO"))
        elif node.kind == NodeKind.REPETITION:
            ops.append("REPEAT" + node.value.replace(":", "TO"))
        elif node.kind == NodeKind.SYSTEM_FUNC:
            ops.append(node.value.lstrip("$").upper())
    head = f"SIGNALS[{','.join(pa.signals)}]"
    return " ".join([head, *ops])


_HEADING = re.compile(r"^#{1,2}[ \t]+(.+?)[ \t#]*$", re.MULTILINE)


def _section(prompt: str, tag: str) -> Optional[str]:
    m = re.search(rf"<<<{tag}\n(.*?)\n?{tag}>>>", prompt, re.DOTALL)
    return m.group(1) if m else None


def _glossary(prompt: str) -> list[str]:
    block = _section(prompt, "GLOSSARY") or ""
    return [ln.strip() for ln in block.splitlines() if ln.strip()]


def stub_split(spec: str, glossary: Sequence[str] = ()) -> list[dict]:
    """One section per ``#``/``##`` heading; text before the first heading is dropped."""
    heads = list(_HEADING.finditer(spec))
    if not heads:
        body = spec.strip()
        return [{"title": "Specification", "body": body, "signals": signal_tokens(body, glossary)}] if body else []
    out = []
    for k, m in enumerate(heads):
        end = heads[k + 1].start() if k + 1 < len(heads) else len(spec)
        body = spec[m.end():end].strip()
        if body:
            out.append({"title": m.group(1).strip(), "body": body, "signals": signal_tokens(body, glossary)})
    return out


def stub_points(body: str, glossary: Sequence[str] = ()) -> list[dict]:
    """One point per sentence that names at least one signal."""
    out = []
    for sent in sentences(body):
        sigs = signal_tokens(sent, glossary)
        if sigs:
            out.append({"statement": sent, "signals": sigs})
    return out


def stub_chat(prompt: str) -> str:
    sva = _section(prompt, "SVA")
    if sva is not None:
        return stub_intent(sva.strip())
    spec = _section(prompt, "SPEC")
    if spec is not None:
        return json.dumps(stub_split(spec, _glossary(prompt)))
    body = _section(prompt, "BODY")
    if body is not None:
        return json.dumps(stub_points(body, _glossary(prompt)))
    return "STUB " + hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# backends


class StubBackend:
    tag = "stub"

    def __init__(self, d_sem: int = 64):
        self.d_sem = d_sem
        self.network_requests = 0

    @property
    def chat_model(self) -> str:
        return "stub-chat-v1"

    @property
    def embedding_model(self) -> str:
        return f"stub-embed-v1-{self.d_sem}"

    def chat(self, prompt: str) -> str:
        return stub_chat(prompt)

    def embed(self, text: str) -> list[float]:
        return stub_embedding(text, self.d_sem)


class HttpBackend:
    """POST {model, messages} -> {content}; POST {model, input} -> {embedding}.

    Chat goes to ``<endpoint>/chat``, embeddings to ``<endpoint>/embed``.
    """

    tag = "http"

    def __init__(self, cfg: GatewayConfig, transport: Optional[httpx.BaseTransport] = None):
        if not cfg.endpoint:
            raise ArgumentError("http backend needs gateway.endpoint")
        self.cfg = cfg
        self.chat_model = cfg.chat_model
        self.embedding_model = cfg.embedding_model
        self.network_requests = 0
        headers = {}
        token = os.environ.get(cfg.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=cfg.endpoint.rstrip("/"), headers=headers,
                                    timeout=cfg.timeout_ms / 1000.0, transport=transport)

    def _post(self, path: str, payload: dict) -> dict:
        self.network_requests += 1
        try:
            resp = self._client.post(path, json=payload)
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"timeout calling {path}") from exc
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport error calling {path}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"{path}: HTTP {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"{path}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"{path}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"{path}: response is not JSON") from exc

    def chat(self, prompt: str) -> str:
        data = self._post("/chat", {"model": self.chat_model,
                                    "messages": [{"role": "user", "content": prompt}]})
        content = data.get("content") if isinstance(data, dict) else None
        if not isinstance(content, str):
            raise BackendError("chat response lacks a 'content' string")
        return content

    def embed(self, text: str) -> list[float]:
        data = self._post("/embed", {"model": self.embedding_model, "input": text})
        vec = data.get("embedding") if isinstance(data, dict) else None
        if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
            raise BackendError("embedding response lacks a numeric 'embedding' list")
        return [float(x) for x in vec]


def make_backend(cfg: GatewayConfig):
    if cfg.backend == "stub":
        return StubBackend(cfg.d_sem)
    return HttpBackend(cfg)


# ---------------------------------------------------------------------------
# cache


class ResponseCache:
    """Append-only JSON Lines file of ``{key, value, created_at}`` records.

    Unreadable lines are skipped on load; the rest of the file stays valid.
    Without a path the cache lives in memory only.
    """

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path else None
        self._data: dict[str, object] = {}
        self._lock = threading.Lock()
        self.skipped_records = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                try:
                    rec = json.loads(line)
                    self._data[rec["key"]] = rec["value"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    self.skipped_records += 1

    @staticmethod
    def make_key(backend_tag: str, model: str, payload: dict) -> str:
        blob = json.dumps({"backend": backend_tag, "model": model, "payload": payload},
                          sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def get(self, key: str):
        return self._data.get(key)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def __len__(self) -> int:
        return len(self._data)

    def put(self, key: str, value) -> None:
        with self._lock:
            self._data[key] = value
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                line = json.dumps({"key": key, "value": value, "created_at": time.time()})
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")


# ---------------------------------------------------------------------------
# gateway


class Gateway:
    def __init__(self, cfg: GatewayConfig | None = None, backend=None,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg or GatewayConfig()
        self.backend = backend if backend is not None else make_backend(self.cfg)
        self.cache = ResponseCache(self.cfg.cache_path)
        self.backend_calls = 0
        self.retries = 0
        self._sleep = sleep
        self._count_lock = threading.Lock()

    @property
    def backend_tag(self) -> str:
        return self.backend.tag

    @property
    def network_requests(self) -> int:
        return getattr(self.backend, "network_requests", 0)

    def _with_retry(self, fn: Callable[[], R]) -> R:
        delay = self.cfg.backoff_initial_ms / 1000.0
        for attempt in range(self.cfg.max_retries + 1):
            try:
                with self._count_lock:
                    self.backend_calls += 1
                return fn()
            except TransientBackendError as exc:
                if attempt == self.cfg.max_retries:
                    raise BackendError(f"giving up after {attempt + 1} attempts: {exc}") from exc
                log.warning("transient backend failure (%s); retry %d in %.2fs", exc, attempt + 1, delay)
                with self._count_lock:
                    self.retries += 1
                self._sleep(delay)
                delay *= self.cfg.backoff_multiplier
        raise AssertionError("unreachable")

    def chat(self, prompt: str) -> str:
        if not prompt:
            raise ArgumentError("prompt must be non-empty")
        key = ResponseCache.make_key(self.backend.tag, self.backend.chat_model,
                                     {"messages": [{"role": "user", "content": prompt}]})
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        text = self._with_retry(lambda: self.backend.chat(prompt))
        self.cache.put(key, text)
        return text

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ArgumentError("text must be non-empty")
        key = ResponseCache.make_key(self.backend.tag, self.backend.embedding_model, {"input": text})
        hit = self.cache.get(key)
        if hit is not None:
            vec = hit
        else:
            vec = self._with_retry(lambda: self.backend.embed(text))
        if len(vec) != self.cfg.d_sem:
            raise DimensionMismatch(f"backend returned {len(vec)} values, expected d_sem={self.cfg.d_sem}")
        if hit is None:
            self.cache.put(key, vec)
        return list(vec)

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        """Apply *fn* with at most ``max_in_flight`` concurrent calls, keeping input order."""
        if self.cfg.max_in_flight <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.cfg.max_in_flight) as pool:
            return list(pool.map(fn, items))
