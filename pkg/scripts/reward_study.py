"""Reward traces of the three reward variants at one budget, written as CSV for plotting."""
import argparse
import csv
from pathlib import Path

from ajpq.search import SearchConfig, run_search

from _common import load_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixtures", default="runs/fixture")
    ap.add_argument("--sc", type=float, default=0.18)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out", default="runs/reward_study.csv")
    args = ap.parse_args()

    net, _, probe = load_fixture(args.fixtures)
    traces = {}
    for kind in ("ajpq", "amc", "haq"):
        _, traces[kind] = run_search(net, SearchConfig(sc=args.sc, reward=kind, episodes=args.episodes,
                                                       seed=args.seed), probe)
        over = sum(not r.feasible for r in traces[kind])
        print(f"{kind:>4}: min reward {min(r.reward for r in traces[kind]):.3f}, "
              f"{over}/{args.episodes} episodes over budget")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode"] + [f"{k}_{c}" for k in traces for c in ("reward", "r_comp", "top1")])
        for e in range(args.episodes):
            row = [e]
            for k in traces:
                r = traces[k][e]
                row += [r.reward, r.r_comp, r.metrics["top1"]]
            w.writerow(row)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
