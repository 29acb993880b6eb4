"""Run the feedback loop on the bundled toy design and print the per-round table.

    python scripts/run_toy_loop.py --generator imperfect --out runs/toy
"""
import argparse
import sys
import tempfile
from pathlib import Path

from coverassert.cli import main
from coverassert.data import toy_design
from coverassert.generators import MODES


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--generator", choices=MODES, default="imperfect")
    ap.add_argument("--out", type=Path, help="run directory (default: a temp dir)")
    ap.add_argument("--seed", type=int, default=0)
    return ap.parse_args(argv)


def run(generator: str, out: Path, seed: int = 0) -> int:
    toy = Path(toy_design())
    code = main([
        "iterate", "--spec", str(toy / "spec.md"), "--glossary", str(toy / "signals.txt"),
        "--assertions", str(toy / "seed.jsonl"), "--config", str(toy / "config.toml"),
        "--generator", f"synthetic:{generator}", "--out", str(out), "--seed", str(seed), "--force",
    ])
    if code:
        return code
    # iterate logs its summary to stderr; the report goes to stdout
    return main(["report", "--run", str(out), "--format", "table"])


if __name__ == "__main__":
    args = parse_args()
    if args.out is None:
        with tempfile.TemporaryDirectory() as tmp:
            sys.exit(run(args.generator, Path(tmp) / "run", args.seed))
    sys.exit(run(args.generator, args.out, args.seed))
