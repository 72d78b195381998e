"""Command-line entry point: ``ajpq {search,apply,eval,report,fixtures}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .agent import AgentConfig
from .evaluator import ClassificationProbe, evaluate, load_dataset
from .fixtures import FixtureError, FixtureSpec, make_fixtures
from .framing import FormatError
from .ir import ShapeError, load_model, save_model, total_cost
from .quantizer import apply_plan, load_plan, save_plan
from .search import JointSearch, SearchConfig, ratios, read_trace, read_trace_plans, write_trace

log = logging.getLogger("ajpq")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2, 3

# flag dest -> SearchConfig field
SEARCH_FLAGS = {"sc": "sc", "episodes": "episodes", "mode": "mode", "rule": "rule",
                "bit_max": "bit_max", "seed": "seed", "batch": "batch", "reward": "reward",
                "metric": "metric"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_search_config(args: argparse.Namespace) -> SearchConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        values.update(doc)
    for dest, name in SEARCH_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    known = {f.name for f in dataclasses.fields(SearchConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    agent = dict(values.pop("agent", None) or {})
    if "hidden" in agent:
        agent["hidden"] = tuple(agent["hidden"])
    try:
        values["agent"] = AgentConfig(**agent)
        return SearchConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _require(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


def cmd_search(args) -> int:
    cfg = build_search_config(args)
    net = load_model(_require(args.model, "model"))
    data = load_dataset(_require(args.data, "data"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    search = JointSearch(net, cfg, ClassificationProbe(data, cfg.batch))
    log.info("base %s: %.2f, budget %.0f bits", cfg.metric, search.base_metric, search.budget)

    def progress(rec):
        log.info("episode %d reward %.4f r_comp %.4f %s %.2f", rec.episode, rec.reward,
                 rec.r_comp, cfg.metric, rec.metric)

    best, trace = search.run(progress)
    save_plan(best.plan, out / "best_plan.json", episode=best.episode, reward=best.reward,
              r_comp=best.r_comp, r_flops=best.r_flops, metric=best.metric, seed=cfg.seed)
    save_model(apply_plan(net, best.plan), out / "compressed.model")
    write_trace(trace, out / "trace.jsonl", out / "trace_plans.jsonl")
    search.agent.save(out / "agent.ckpt")
    print(f"reward={best.reward:.4f} r_comp={best.r_comp:.4f} r_flops={best.r_flops:.4f} "
          f"top1={best.metrics['top1']:.2f} top5={best.metrics['top5']:.2f} "
          f"base_top1={search.base_metrics['top1']:.2f} base_top5={search.base_metrics['top5']:.2f} "
          f"metric={cfg.metric} episodes={len(trace)} best_episode={best.episode}")
    if not best.feasible:
        print(f"best plan exceeds budget sc={cfg.sc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_apply(args) -> int:
    net = load_model(_require(args.model, "model"))
    plan = load_plan(_require(args.plan, "plan"))
    plan.check(net)
    save_model(apply_plan(net, plan), args.out)
    ledger = total_cost(net, plan)
    r_comp, r_flops = ratios(ledger)
    print(f"size_bits={ledger.rest_size} base_size_bits={ledger.base_size} "
          f"r_comp={r_comp:.4f} r_flops={r_flops:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_model(_require(args.model, "model"))
    data = load_dataset(_require(args.data, "data"))
    batch = args.batch or 60
    line = []
    if args.plan:
        plan = load_plan(_require(args.plan, "plan"))
        plan.check(net)
        r_comp, r_flops = ratios(total_cost(net, plan))
        net = apply_plan(net, plan)
        line += [f"r_comp={r_comp:.4f}", f"r_flops={r_flops:.4f}"]
    rep = evaluate(net, data, batch)
    line = [f"top1={rep.top1:.2f}", f"top5={rep.top5:.2f}", f"samples={rep.samples_evaluated}"] + line
    if args.baseline:
        base = evaluate(load_model(_require(args.baseline, "baseline")), data, batch)
        line += [f"d_top1={rep.top1 - base.top1:+.2f}", f"d_top5={rep.top5 - base.top5:+.2f}"]
    print(" ".join(line))
    return EXIT_OK


def cmd_report(args) -> int:
    trace_path = _require(args.trace, "trace")
    plans_path = Path(args.plans) if args.plans else trace_path.with_name(trace_path.stem + "_plans.jsonl")
    rows = read_trace(trace_path)
    plans = read_trace_plans(_require(str(plans_path), "plans"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    episodes = [r["episode"] for r in rows]
    missing = [e for e in episodes if e not in plans]
    if missing:
        raise FormatError(f"{plans_path}: no plan for episodes {missing[:5]}")
    with open(out / "rewards.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "reward", "r_comp", "r_flops", "metric", "feasible"])
        for r in rows:
            w.writerow([r["episode"], repr(r["reward"]), repr(r["r_comp"]), repr(r["r_flops"]),
                        repr(r["metric"]), int(r["feasible"])])
    with open(out / "heatmap.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "channel"] + [f"ep{e}" for e in episodes])
        first = plans[episodes[0]] if episodes else None
        n_layers = len(first.bits) if first else 0
        for l in range(n_layers):
            for c in range(len(first.bits[l])):
                w.writerow([l, c] + [int(plans[e].bits[l][c]) for e in episodes])
    print(f"wrote {len(rows)} reward rows to {out / 'rewards.csv'} and heatmap to {out / 'heatmap.csv'}")
    return EXIT_OK


def cmd_fixtures(args) -> int:
    paths = make_fixtures(FixtureSpec(seed=args.seed), args.out)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ajpq", description="Joint channel pruning and mixed-precision quantization search.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("search", help="run the RL search and write its artifacts")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, help="validation dataset file")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--config", help="JSON file with SearchConfig fields")
    s.add_argument("--sc", type=float)
    s.add_argument("--episodes", type=int)
    s.add_argument("--mode", choices=["channel", "layer", "fixed"])
    s.add_argument("--rule", choices=["large", "deep"])
    s.add_argument("--bit-max", dest="bit_max", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--reward", choices=["ajpq", "amc", "haq"])
    s.add_argument("--metric", choices=["top1", "top5"])
    s.set_defaults(func=cmd_search)

    a = sub.add_parser("apply", help="apply a plan and write the compressed model")
    a.add_argument("--model", required=True)
    a.add_argument("--plan", required=True)
    a.add_argument("--out", required=True, help="compressed model path")
    a.set_defaults(func=cmd_apply)

    e = sub.add_parser("eval", help="evaluate a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--plan", help="apply this plan before evaluating and report its ratios")
    e.add_argument("--baseline", help="reference model for accuracy deltas")
    e.add_argument("--batch", type=int)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="turn a trace into reward and bit-heatmap CSV files")
    r.add_argument("--trace", required=True)
    r.add_argument("--plans", help="plan sidecar (default: <trace stem>_plans.jsonl)")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_report)

    f = sub.add_parser("fixtures", help="desk-scale fixture generation")
    fsub = f.add_subparsers(dest="fixture_command", required=True, parser_class=_Parser)
    m = fsub.add_parser("make", help="write train/val datasets and a trained mini-net")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (FileNotFoundError, FormatError, ShapeError, OSError) as exc:
        print(f"ajpq: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, FixtureError, ValueError) as exc:
        print(f"ajpq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
