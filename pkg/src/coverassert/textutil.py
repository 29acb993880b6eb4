"""Prompt templates and small text helpers shared by the pipeline stages."""
from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

_PLACEHOLDER = re.compile(r"\{\{([A-Z_]+)\}\}")
WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*")
_CODE_SPAN = re.compile(r"`(" + WORD_RE.pattern + r")(?:\[[^`\]]*\])?`")
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")
_MULTI_SENTENCE = re.compile(r"[.!?][\"')\]]*\s+\S")


def load_template(name: str, prompt_dir: Optional[str | Path] = None) -> str:
    if prompt_dir is not None:
        return (Path(prompt_dir) / f"{name}.txt").read_text(encoding="utf-8")
    return resources.files("coverassert").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def render(template: str, **values: str) -> str:
    def sub(m: re.Match) -> str:
        key = m.group(1)
        if key not in values:
            raise KeyError(f"template placeholder {{{{{key}}}}} has no value")
        return str(values[key])
    return _PLACEHOLDER.sub(sub, template)


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def sentences(text: str) -> list[str]:
    flat = normalize_ws(text)
    return [s for s in _SENTENCE_BREAK.split(flat) if s]


def is_single_sentence(text: str) -> bool:
    return _MULTI_SENTENCE.search(text.strip()) is None


def word_tokens(text: str) -> set[str]:
    """Lowercased identifier-like tokens (hierarchical names kept whole)."""
    return {w.lower() for w in WORD_RE.findall(text)}


def signal_tokens(text: str, glossary: Iterable[str] = ()) -> list[str]:
    """Signals named in *text*: markdown code spans plus whole-word glossary hits."""
    found = {m.group(1) for m in _CODE_SPAN.finditer(text)}
    for name in glossary:
        pat = r"(?<![A-Za-z0-9_.])" + re.escape(name) + r"(?![A-Za-z0-9_])"
        if re.search(pat, text, flags=re.IGNORECASE):
            found.add(name)
    return sorted(found)


def read_glossary(path: Optional[str | Path]) -> list[str]:
    if path is None:
        return []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return sorted({ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")})
