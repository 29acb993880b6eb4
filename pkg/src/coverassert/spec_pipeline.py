"""Split a specification into Sub-SPECs and extract their functional points."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import jsonschema

from .errors import ArgumentError, SchemaError, ValidationError
from .gateway import Gateway
from .semantic import embed_text
from .textutil import is_single_sentence, load_template, normalize_ws, render, word_tokens

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FunctionalPoint:
    point_id: str
    subspec_id: str
    statement: str
    signals: tuple[str, ...]
    embedding: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"point_id": self.point_id, "subspec_id": self.subspec_id, "statement": self.statement,
                "signals": list(self.signals), "embedding": list(self.embedding)}


@dataclass(frozen=True)
class SubSpec:
    subspec_id: str
    title: str
    body: str
    signals_mentioned: tuple[str, ...]
    embedding: tuple[float, ...]
    points: tuple[FunctionalPoint, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"subspec_id": self.subspec_id, "title": self.title, "body": self.body,
                "signals_mentioned": list(self.signals_mentioned), "embedding": list(self.embedding),
                "points": [p.to_dict() for p in self.points]}


# ---------------------------------------------------------------------------
# backend replies


def _json_array(reply: str) -> list:
    text = reply.strip()
    if text.startswith("```"):
        text = text.strip("`")
        text = text[text.find("\n") + 1:] if "\n" in text else text
    start, end = text.find("["), text.rfind("]")
    if start < 0 or end < start:
        raise ValidationError("not json", "reply holds no JSON array")
    try:
        data = json.loads(text[start:end + 1])
    except json.JSONDecodeError as exc:
        raise ValidationError("not json", str(exc)) from exc
    if not isinstance(data, list):
        raise ValidationError("not json", "reply is not a JSON array")
    return data


def validate_sections(spec_text: str, sections: Sequence[dict]) -> None:
    """Bodies must be verbatim (whitespace-normalized), in order and non-overlapping."""
    flat = normalize_ws(spec_text)
    prev_start, prev_end = -1, 0
    for k, sec in enumerate(sections):
        if not isinstance(sec, dict) or not isinstance(sec.get("body"), str) or not isinstance(sec.get("title"), str):
            raise ValidationError("schema", f"section {k} needs string 'title' and 'body'")
        sigs = sec.get("signals", [])
        if not isinstance(sigs, list) or not all(isinstance(s, str) for s in sigs):
            raise ValidationError("schema", f"section {k} 'signals' must be a list of names")
        body = normalize_ws(sec["body"])
        if not body:
            raise ValidationError("empty body", f"section {k}")
        hits = []
        at = flat.find(body)
        while at >= 0:
            hits.append(at)
            at = flat.find(body, at + 1)
        if not hits:
            raise ValidationError("not verbatim", f"section {k} body is not in the specification")
        if any(h >= prev_end for h in hits):
            start = min(h for h in hits if h >= prev_end)
            prev_start, prev_end = start, start + len(body)
            continue
        if any(h < prev_end and h + len(body) > prev_start for h in hits):
            raise ValidationError("overlap", f"section {k} overlaps section {k - 1}")
        raise ValidationError("order", f"section {k} precedes section {k - 1}")


def _ask(gateway: Gateway, prompt: str, check) -> list:
    last: Optional[ValidationError] = None
    attempt_prompt = prompt
    for attempt in range(gateway.cfg.max_retries + 1):
        reply = gateway.chat(attempt_prompt)
        try:
            data = _json_array(reply)
            check(data)
            return data
        except ValidationError as exc:
            last = exc
            log.warning("backend reply rejected (%s); asking for a repair", exc)
            attempt_prompt = (prompt + f"\n\nYour previous answer was rejected: {exc}. "
                              f"Return a corrected JSON array only. (repair {attempt + 1})")
    assert last is not None
    raise last


def split_spec(spec_text: str, gateway: Gateway, glossary: Sequence[str] = (),
               template: Optional[str] = None) -> list[SubSpec]:
    if not spec_text or not spec_text.strip():
        raise ArgumentError("specification text is empty")
    template = template if template is not None else load_template("split")
    prompt = render(template, SPEC=spec_text, GLOSSARY="\n".join(glossary))
    sections = _ask(gateway, prompt, lambda data: validate_sections(spec_text, data))
    out = []
    for k, sec in enumerate(sections, start=1):
        title, body = sec["title"].strip(), sec["body"].strip()
        emb = embed_text(f"{title}\n{body}", gateway)
        out.append(SubSpec(f"S{k}", title, body, tuple(sorted(set(sec.get("signals", [])))), emb))
    return out


def _point_checker(sub: SubSpec, glossary: Sequence[str]):
    allowed = word_tokens(sub.body) | {g.lower() for g in glossary}

    def check(data: list) -> None:
        for k, item in enumerate(data):
            if not isinstance(item, dict) or not isinstance(item.get("statement"), str):
                raise ValidationError("schema", f"point {k} needs a string 'statement'")
            sigs = item.get("signals", [])
            if not isinstance(sigs, list) or not all(isinstance(s, str) for s in sigs):
                raise ValidationError("schema", f"point {k} 'signals' must be a list of names")
            if not item["statement"].strip():
                raise ValidationError("empty statement", f"point {k}")
            if not is_single_sentence(item["statement"]):
                raise ValidationError("not atomic", f"point {k} has more than one sentence")
            unknown = [s for s in sigs if s.lower() not in allowed]
            if unknown:
                raise ValidationError("unknown signal", f"point {k}: {', '.join(unknown)}")
    return check


def extract_points(sub: SubSpec, gateway: Gateway, glossary: Sequence[str] = (),
                   template: Optional[str] = None) -> list[FunctionalPoint]:
    if not sub.body.strip():
        raise ArgumentError(f"sub-spec {sub.subspec_id} has an empty body")
    template = template if template is not None else load_template("points")
    prompt = render(template, TITLE=sub.title, BODY=sub.body, GLOSSARY="\n".join(glossary))
    items = _ask(gateway, prompt, _point_checker(sub, glossary))
    if not items:
        log.warning("sub-spec %s yielded no functional points", sub.subspec_id)
    points = []
    for k, item in enumerate(items, start=1):
        stmt = normalize_ws(item["statement"])
        points.append(FunctionalPoint(f"{sub.subspec_id}.p{k}", sub.subspec_id, stmt,
                                      tuple(sorted(set(item.get("signals", [])))), embed_text(stmt, gateway)))
    return points


def build_subspecs(spec_text: str, gateway: Gateway, glossary: Sequence[str] = ()) -> list[SubSpec]:
    """split_spec followed by extract_points on every Sub-SPEC, in document order."""
    subs = split_spec(spec_text, gateway, glossary)
    template = load_template("points")
    point_lists = gateway.map(lambda s: extract_points(s, gateway, glossary, template), subs)
    return [replace(s, points=tuple(pts)) for s, pts in zip(subs, point_lists)]


# ---------------------------------------------------------------------------
# fixture files

_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_NAMES = {"type": "array", "items": {"type": "string"}}
SUBSPEC_SCHEMA = {
    "type": "object",
    "required": ["subspecs"],
    "properties": {
        "subspecs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["subspec_id", "title", "body", "signals_mentioned", "embedding", "points"],
                "properties": {
                    "subspec_id": {"type": "string", "minLength": 1},
                    "title": {"type": "string"},
                    "body": {"type": "string"},
                    "signals_mentioned": _NAMES,
                    "embedding": _VEC,
                    "points": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["point_id", "subspec_id", "statement", "signals", "embedding"],
                            "properties": {
                                "point_id": {"type": "string", "minLength": 1},
                                "subspec_id": {"type": "string"},
                                "statement": {"type": "string", "minLength": 1},
                                "signals": _NAMES,
                                "embedding": _VEC,
                            },
                        },
                    },
                },
            },
        },
    },
}


def subspecs_to_json(subspecs: Sequence[SubSpec]) -> dict:
    return {"subspecs": [s.to_dict() for s in subspecs]}


def save_fixture(subspecs: Sequence[SubSpec], path: str | Path) -> None:
    Path(path).write_text(json.dumps(subspecs_to_json(subspecs), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _unit(vec: Sequence[float], what: str) -> tuple[float, ...]:
    norm = math.sqrt(math.fsum(x * x for x in vec))
    if abs(norm - 1.0) > 1e-6:
        raise SchemaError(f"{what}: embedding norm {norm:.6g} is not 1")
    return tuple(float(x) for x in vec)


def subspecs_from_json(data) -> list[SubSpec]:
    try:
        jsonschema.validate(data, SUBSPEC_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"subspec file: {exc.message} at /{'/'.join(map(str, exc.absolute_path))}") from exc
    out: list[SubSpec] = []
    seen_subs: set[str] = set()
    dims: set[int] = set()
    for s in data["subspecs"]:
        sid = s["subspec_id"]
        if sid in seen_subs:
            raise SchemaError(f"duplicate subspec_id {sid}")
        seen_subs.add(sid)
        dims.add(len(s["embedding"]))
        pts = []
        seen_pts: set[str] = set()
        for p in s["points"]:
            if p["point_id"] in seen_pts:
                raise SchemaError(f"duplicate point_id {p['point_id']} in {sid}")
            if p["subspec_id"] != sid:
                raise SchemaError(f"point {p['point_id']} claims subspec {p['subspec_id']}, found under {sid}")
            if not is_single_sentence(p["statement"]):
                raise SchemaError(f"point {p['point_id']} is not a single sentence")
            seen_pts.add(p["point_id"])
            dims.add(len(p["embedding"]))
            pts.append(FunctionalPoint(p["point_id"], sid, p["statement"], tuple(sorted(set(p["signals"]))),
                                       _unit(p["embedding"], p["point_id"])))
        out.append(SubSpec(sid, s["title"], s["body"], tuple(sorted(set(s["signals_mentioned"]))),
                           _unit(s["embedding"], sid), tuple(pts)))
    if len(dims) > 1:
        raise SchemaError(f"mixed embedding dimensions {sorted(dims)}")
    return out


def load_fixture(path: str | Path) -> list[SubSpec]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read subspec file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not JSON ({exc})") from exc
    return subspecs_from_json(data)
