"""Fixed-precision vs channel-wise search on the mini-net at a few budgets.

    python scripts/compression_table.py --fixtures runs/fixture --budgets 0.25 0.20
"""
import argparse
import time

from ajpq.search import SearchConfig, run_search

from _common import load_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--fixtures", default="runs/fixture")
    ap.add_argument("--budgets", type=float, nargs="+", default=[0.25, 0.20])
    ap.add_argument("--modes", nargs="+", default=["fixed", "layer", "channel"])
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    net, _, probe = load_fixture(args.fixtures)
    base = probe(net)
    print(f"float baseline: top1={base['top1']:.2f} top5={base['top5']:.2f}")
    print(f"{'sc':>5} {'mode':>8} {'reward':>8} {'r_comp':>7} {'r_flops':>7} {'top1':>6} {'d_top1':>7} {'secs':>6}")
    for sc in args.budgets:
        for mode in args.modes:
            t0 = time.perf_counter()
            best, _ = run_search(net, SearchConfig(sc=sc, mode=mode, episodes=args.episodes, seed=args.seed), probe)
            top1 = best.metrics["top1"]
            print(f"{sc:5.2f} {mode:>8} {best.reward:8.3f} {best.r_comp:7.4f} {best.r_flops:7.4f} "
                  f"{top1:6.2f} {top1 - base['top1']:+7.2f} {time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    main()
