"""Compare the two layer-selection rules of the greedy loop across seeds."""
import argparse

import numpy as np

from ajpq.search import SearchConfig, run_search

from _common import load_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixtures", default="runs/fixture")
    ap.add_argument("--sc", type=float, default=0.20)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[7, 8, 9])
    args = ap.parse_args()

    net, _, probe = load_fixture(args.fixtures)
    for rule in ("large", "deep"):
        rows = []
        for seed in args.seeds:
            best, _ = run_search(net, SearchConfig(sc=args.sc, rule=rule, episodes=args.episodes, seed=seed), probe)
            rows.append((best.r_comp, best.metrics["top1"]))
            print(f"{rule:>5} seed={seed} r_comp={best.r_comp:.4f} top1={best.metrics['top1']:.2f}")
        r, t = np.array(rows).T
        print(f"{rule:>5} mean r_comp={r.mean():.4f} top1={t.mean():.2f} +- {t.std(ddof=1) if len(t) > 1 else 0:.2f}")


if __name__ == "__main__":
    main()
