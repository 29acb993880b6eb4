"""Run every synthetic generator mode on the toy design and tabulate point coverage per round."""
import argparse

from coverassert.config import Config, LoopConfig
from coverassert.coverage_feedback import run_loop
from coverassert.data import toy_design
from coverassert.gateway import Gateway
from coverassert.generators import MODES, SyntheticGenerator
from coverassert.spec_pipeline import load_fixture
from coverassert.sva_ast import read_assertions


def sweep(theta: float, max_rounds: int) -> dict[str, list]:
    toy = toy_design()
    subspecs = load_fixture(toy / "subspecs.json")
    seed = read_assertions(toy / "seed.jsonl")
    cfg = Config().replace(loop=LoopConfig(theta=theta, max_rounds=max_rounds))
    out = {}
    for mode in MODES:
        res = run_loop(cfg, subspecs, seed, SyntheticGenerator(mode), Gateway(cfg.gateway))
        out[mode] = [(r.round, r.metrics.nsp, r.metrics.point_coverage, r.state.converged) for r in res.rounds]
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta", type=float, default=0.85)
    ap.add_argument("--max-rounds", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'mode':<14} {'round':>5} {'N/S/P':>9} {'points':>7}  converged")
    for mode, rows in sweep(args.theta, args.max_rounds).items():
        for rnd, nsp, cov, done in rows:
            cov_s = "-" if cov is None else f"{cov:.3f}"
            print(f"{mode:<14} {rnd:>5} {nsp:>9} {cov_s:>7}  {'yes' if done else ''}")


if __name__ == "__main__":
    main()
