"""Scripted assertion generators for offline runs and tests.

They read only the feedback payload, like an external tool would. Usable
in-process (``SyntheticGenerator("perfect")``) or as an external command::

    python -m coverassert.generators --mode perfect < feedback.json
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Mapping, Sequence

MODES = ("perfect", "one-per-round", "imperfect", "empty")


def synthetic_sva(signals: Sequence[str], variant: int = 0) -> str:
    """An assertion whose signal set is exactly *signals*."""
    sigs = sorted(signals)
    if not sigs:
        raise ValueError("need at least one signal")
    if len(sigs) == 1:
        s = sigs[0]
        body = f"{s} |=> $stable({s})" if variant % 2 == 0 else f"$rose({s}) |-> ##1 {s}"
    else:
        head, rest = sigs[0], sigs[1:]
        tail = " && ".join(rest) if len(rest) > 1 else rest[0]
        delay = f"##{1 + variant % 3}"
        body = f"{head} |-> {delay} ({tail})"
    return f"assert property ({body});"


def _uncovered(payload: Mapping) -> list[dict]:
    return [p for item in payload.get("items", []) for p in item.get("uncovered_points", [])]


def _item_id(round_index: int, point_id: str, suffix: str = "") -> str:
    return f"g{round_index + 1}_{point_id}{suffix}"


def generate(payload: Mapping, mode: str) -> list[dict]:
    rnd = int(payload.get("round", 0))
    points = [p for p in _uncovered(payload) if p.get("signals")]
    if mode == "empty":
        return []
    if mode == "perfect":
        return [{"id": _item_id(rnd, p["point_id"]), "sva": synthetic_sva(p["signals"], rnd)} for p in points]
    if mode == "one-per-round":
        return [{"id": _item_id(rnd, p["point_id"]), "sva": synthetic_sva(p["signals"], rnd)} for p in points[:1]]
    if mode == "imperfect":
        # every other point, plus one malformed answer and one repeat
        out = [{"id": _item_id(rnd, p["point_id"]), "sva": synthetic_sva(p["signals"], rnd)}
               for p in points[::2]]
        if points:
            out.append({"id": _item_id(rnd, "bad"), "sva": "assert property (@(posedge clk) |-> ack);"})
        if out and len(out) > 1:
            out.append({"id": _item_id(rnd, "dup"), "sva": "  " + out[0]["sva"].replace(" ", "  ")})
        return out
    raise ValueError(f"unknown generator mode {mode!r}; choose from {', '.join(MODES)}")


class SyntheticGenerator:
    def __init__(self, mode: str = "perfect"):
        if mode not in MODES:
            raise ValueError(f"unknown generator mode {mode!r}")
        self.mode = mode
        self.calls = 0

    def __call__(self, payload) -> list[dict]:
        self.calls += 1
        doc = payload.to_dict() if hasattr(payload, "to_dict") else payload
        return generate(doc, self.mode)


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description="scripted assertion generator (feedback JSON on stdin)")
    ap.add_argument("--mode", choices=MODES, default="perfect")
    args = ap.parse_args(argv)
    payload = json.load(sys.stdin)
    json.dump(generate(payload, args.mode), sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
