"""Episode loop: layer controller proposes sparsity, channel controller fits the budget."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .agent import AgentConfig, DDPGAgent, Transition
from .controllers import LayerRule, StateNormalizer, decide_layer, featurize, greedy_budget_enforce
from .importance import ImportanceTable
from .ir import FLOAT_BITS, CostLedger, LayerKind, NetworkIR, TaskKind, total_cost
from .quantizer import QuantMode, QuantPlan, apply_plan

Probe = Callable[[NetworkIR], Mapping[str, float]]

OVER_BUDGET_REWARD = -10.0


class RewardKind(str, enum.Enum):
    AJPQ = "ajpq"
    AMC = "amc"
    HAQ = "haq"


@dataclass
class SearchConfig:
    sc: float = 0.2
    bit_max: int = 8
    episodes: int = 100
    mode: QuantMode = QuantMode.CHANNEL
    rule: LayerRule = LayerRule.LARGE
    seed: int = 0
    reward: RewardKind = RewardKind.AJPQ
    # top-5 saturates on few-class tasks; "top5" remains selectable
    metric: str = "top1"
    batch: int = 60
    a_min_conv: float = 0.6
    a_min_fc: float = 0.7
    a_max: float = 1.0
    # the last layer's outputs are the task outputs (class logits)
    prune_output_layer: bool = False
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        self.mode = QuantMode(self.mode)
        self.rule = LayerRule(self.rule)
        self.reward = RewardKind(self.reward)
        if not 0.0 < self.sc <= 1.0:
            raise ValueError(f"sc={self.sc} must lie in (0, 1]")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 1 <= self.bit_max <= 8:
            raise ValueError(f"bit_max={self.bit_max} must lie in [1, 8]")
        if not 0.0 < self.a_min_conv <= self.a_max <= 1.0 or not 0.0 < self.a_min_fc <= self.a_max:
            raise ValueError("need 0 < a_min <= a_max <= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


def ajpq_reward(metric_new: float, metric_base: float, size_new: float, size_base: float,
                sc: float, task: TaskKind = TaskKind.CLASSIFICATION) -> float:
    if size_new > sc * size_base:
        return OVER_BUDGET_REWARD
    if TaskKind(task) is TaskKind.DETECTION:
        return metric_new - metric_base
    return 0.1 * (metric_new - metric_base)


def amc_reward(metric_new: float, metric_base: float, size_new: float, size_base: float,
               sc: float, task: TaskKind = TaskKind.CLASSIFICATION) -> float:
    return 0.01 * metric_new


def haq_reward(metric_new: float, metric_base: float, size_new: float, size_base: float,
               sc: float, task: TaskKind = TaskKind.CLASSIFICATION) -> float:
    return 0.1 * (metric_new - metric_base)


REWARDS = {RewardKind.AJPQ: ajpq_reward, RewardKind.AMC: amc_reward, RewardKind.HAQ: haq_reward}


def reward(metric_new, metric_base, size_new, size_base, sc, task=TaskKind.CLASSIFICATION,
           kind: RewardKind = RewardKind.AJPQ) -> float:
    return REWARDS[RewardKind(kind)](metric_new, metric_base, size_new, size_base, sc, task)


def ratios(ledger: CostLedger) -> tuple[float, float]:
    """(r_comp, r_FLOPs) of a plan relative to the float baseline."""
    return ledger.rest_size / ledger.base_size, ledger.rest_flops / ledger.base_flops


@dataclass
class EpisodeRecord:
    episode: int
    plan: QuantPlan
    reward: float
    r_comp: float
    r_flops: float
    metric: float
    metrics: dict[str, float]
    size_bits: int
    base_size_bits: int
    feasible: bool
    actions: list[float]

    def summary(self) -> dict:
        return {"episode": self.episode, "reward": self.reward, "r_comp": self.r_comp,
                "r_flops": self.r_flops, "metric": self.metric, "metrics": self.metrics,
                "size_bits": self.size_bits, "base_size_bits": self.base_size_bits,
                "feasible": self.feasible, "actions": self.actions,
                "plan_digest": self.plan.digest()}


class JointSearch:
    """Runs episodes of the joint pruning/quantization search on one network."""

    def __init__(self, net: NetworkIR, cfg: SearchConfig, probe: Probe,
                 agent: DDPGAgent | None = None):
        self.net, self.cfg, self.probe = net, cfg, probe
        self.rng = np.random.default_rng(cfg.seed)
        self.agent = agent or DDPGAgent(cfg.agent, self.rng)
        self.normalizer = StateNormalizer()
        self.importance = ImportanceTable.from_network(net)
        self.base_metrics = dict(probe(net))
        self.base_metric = float(self.base_metrics[cfg.metric])
        self.base_ledger = total_cost(net, [np.full(c, FLOAT_BITS) for c in net.channel_counts])
        self.budget = cfg.sc * self.base_ledger.base_size

    def _a_min(self, l: int) -> float:
        if l == self.net.n - 1 and not self.cfg.prune_output_layer:
            return self.cfg.a_max
        kind = self.net.layers[l].kind
        return self.cfg.a_min_fc if kind is LayerKind.FC else self.cfg.a_min_conv

    def run_episode(self, episode: int = 0, actions: Sequence[float] | None = None,
                    store: bool = True) -> EpisodeRecord:
        net, cfg = self.net, self.cfg
        # undecided layers stay at source precision
        bits = [np.full(c, FLOAT_BITS, dtype=np.int64) for c in net.channel_counts]
        ledger = total_cost(net, bits)
        a_prev = 0.0
        states, taken, decisions = [], [], []
        for l in range(net.n):
            state = featurize(net, ledger, l, a_prev, self.normalizer)
            if actions is None:
                a = self.agent.act(state.normalized, True, self._a_min(l), cfg.a_max)
            else:
                a = float(actions[l])
            d = decide_layer(self.importance.scores[l], a, cfg.bit_max)
            bits[l] = d.bits
            ledger = total_cost(net, bits)
            states.append(state.normalized)
            taken.append(a)
            decisions.append(d)
            a_prev = a

        greedy = greedy_budget_enforce(net, decisions, self.budget, cfg.rule, cfg.mode)
        plan = QuantPlan(tuple(d.bits for d in greedy.decisions), cfg.bit_max, cfg.mode)
        ledger = total_cost(net, plan)
        metrics = {k: float(v) for k, v in self.probe(apply_plan(net, plan)).items()}
        metric = metrics[cfg.metric]
        r = reward(metric, self.base_metric, ledger.rest_size, ledger.base_size, cfg.sc,
                   net.task, cfg.reward)
        if store:
            last = net.n - 1
            for l in range(net.n):
                s_next = states[l + 1] if l < last else states[l]
                self.agent.remember(Transition(states[l], taken[l], r if l == last else 0.0,
                                               s_next, l == last))
        r_comp, r_flops = ratios(ledger)
        return EpisodeRecord(episode, plan, r, r_comp, r_flops, metric, metrics,
                             ledger.rest_size, ledger.base_size,
                             ledger.rest_size <= self.budget, taken)

    def run(self, on_episode: Callable[[EpisodeRecord], None] | None = None):
        trace: list[EpisodeRecord] = []
        best = None
        for e in range(self.cfg.episodes):
            rec = self.run_episode(e)
            trace.append(rec)
            if best is None or rec.reward > best.reward:
                best = rec
            self.agent.decay_noise()
            if len(self.agent.buffer) >= self.agent.cfg.batch_size:
                self.agent.update()
            if on_episode is not None:
                on_episode(rec)
        return best, trace


def run_search(net: NetworkIR, cfg: SearchConfig, probe: Probe):
    return JointSearch(net, cfg, probe).run()


def write_trace(trace: Sequence[EpisodeRecord], path: str | Path,
                plans_path: str | Path | None = None) -> None:
    path = Path(path)
    plans_path = Path(plans_path) if plans_path else path.with_name(path.stem + "_plans.jsonl")
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec.summary(), sort_keys=True) + "\n")
    with open(plans_path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps({"episode": rec.episode, "plan_digest": rec.plan.digest(),
                                 "plan": rec.plan.to_dict()}, sort_keys=True) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{n}: malformed trace line") from exc
    return rows


def read_trace_plans(path: str | Path) -> dict[int, QuantPlan]:
    return {row["episode"]: QuantPlan.from_dict(row["plan"]) for row in read_trace(path)}
