"""Layer/channel controllers: state features, preserved channels and greedy bit cuts."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .importance import top_channels
from .ir import CostLedger, LayerSpec, NetworkIR, layer_size_bits
from .quantizer import QuantMode

FEATURES = ("idx", "t", "c_o", "c_i", "w", "h", "stride", "k",
            "reduced_flops", "rest_flops", "reduced_size", "rest_size", "a_prev")


class LayerRule(str, enum.Enum):
    LARGE = "large"
    DEEP = "deep"


class StateNormalizer:
    """Per-feature min-max scaling over every raw state seen so far."""

    def __init__(self, dim: int = len(FEATURES)):
        self.lo = np.full(dim, np.inf)
        self.hi = np.full(dim, -np.inf)

    def observe(self, raw: np.ndarray) -> None:
        np.minimum(self.lo, raw, out=self.lo)
        np.maximum(self.hi, raw, out=self.hi)

    def transform(self, raw: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        out = np.zeros_like(raw, dtype=np.float64)
        ok = span > 0
        out[ok] = (raw[ok] - self.lo[ok]) / span[ok]
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class SearchState:
    raw: np.ndarray
    normalized: np.ndarray

    def __getitem__(self, name: str) -> float:
        return float(self.raw[FEATURES.index(name)])


def featurize(net: NetworkIR, ledger: CostLedger, l: int, a_prev: float,
              normalizer: StateNormalizer | None = None) -> SearchState:
    spec = net.layers[l]
    raw = np.array([
        l, spec.kind.type_code, spec.out_channels, spec.in_channels,
        spec.width, spec.height, spec.stride, spec.kernel_size,
        ledger.reduced_flops, ledger.rest_flops, ledger.reduced_size, ledger.rest_size,
        a_prev,
    ], dtype=np.float64)
    if normalizer is None:
        normalizer = StateNormalizer()
    normalizer.observe(raw)
    return SearchState(raw, normalizer.transform(raw))


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def channels_to_keep(n_channels: int, a: float) -> int:
    """Preserved channel count ``min(I, max(1, ceil(I * a)))``, evaluated exactly."""
    if not 0.0 < a <= 1.0:
        raise ValueError(f"sparsity action {a} outside (0, 1]")
    return min(n_channels, max(1, _ceil(Fraction(a) * n_channels)))


def min_bitwidths(scores, keep, bit_max: int) -> np.ndarray:
    """Importance-proportional lower bound for each preserved channel (0 elsewhere)."""
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.asarray(keep, dtype=np.int64)
    if keep.size == 0:
        raise ValueError("at least one channel must be preserved")
    out = np.zeros(len(scores), dtype=np.int64)
    peak = max(scores[keep])
    if peak <= 0.0:
        out[keep] = 1
        return out
    peak = Fraction(peak)
    for i in keep:
        mb = _ceil(bit_max * Fraction(scores[i]) / peak)
        out[i] = min(max(mb, 1), bit_max)
    return out


@dataclass
class LayerDecision:
    c_nz: int
    keep: np.ndarray
    minbit: np.ndarray
    bits: np.ndarray
    scores: np.ndarray = field(repr=False)

    def copy(self) -> "LayerDecision":
        return LayerDecision(self.c_nz, self.keep.copy(), self.minbit.copy(),
                             self.bits.copy(), self.scores)


def decide_layer(scores, a: float, bit_max: int) -> LayerDecision:
    scores = np.asarray(scores, dtype=np.float64)
    c_nz = channels_to_keep(len(scores), a)
    keep = top_channels(scores, c_nz)
    bits = np.zeros(len(scores), dtype=np.int64)
    bits[keep] = bit_max
    return LayerDecision(c_nz, keep, min_bitwidths(scores, keep, bit_max), bits, scores)


@dataclass
class GreedyResult:
    decisions: list[LayerDecision]
    feasible: bool
    sizes: list[int]  # total size before the loop and after every decrement
    steps: list[tuple[int, int]] = field(default_factory=list)  # (layer, channel or -1 for whole layer)

    @property
    def iterations(self) -> int:
        return len(self.sizes) - 1


def _cut_order(d: LayerDecision) -> list[int]:
    # least important first; among equal scores the higher index goes first
    return sorted(d.keep.tolist(), key=lambda i: (d.scores[i], -i))


def layer_floor(d: LayerDecision) -> int:
    """Shared floor for layer-wise plans: rounded-up mean of preserved minbits."""
    return int(np.ceil(d.minbit[d.keep].mean()))


def greedy_budget_enforce(net: NetworkIR, decisions: Sequence[LayerDecision], budget: float,
                          rule: LayerRule = LayerRule.LARGE,
                          mode: QuantMode = QuantMode.CHANNEL) -> GreedyResult:
    """Cut bits from trivial channels until the plan fits ``budget`` bits.

    Each step re-selects the layer by ``rule`` among layers that still have
    a reducible channel, then lowers that layer's least important channel
    above its minbit by one bit (``mode=LAYER`` lowers the whole layer).
    """
    rule, mode = LayerRule(rule), QuantMode(mode)
    decisions = [d.copy() for d in decisions]
    layers: list[LayerSpec] = list(net.layers)
    sizes = [layer_size_bits(spec, d.bits) for spec, d in zip(layers, decisions)]
    total = sum(sizes)
    trace = [total]
    steps: list[tuple[int, int]] = []
    if mode is QuantMode.FIXED:
        return GreedyResult(decisions, total <= budget, trace, steps)

    orders = [_cut_order(d) for d in decisions]
    cursor = [0] * len(decisions)
    floors = [layer_floor(d) for d in decisions]

    def reducible(l: int) -> bool:
        d = decisions[l]
        if mode is QuantMode.LAYER:
            return int(d.bits[d.keep[0]]) > floors[l]
        order = orders[l]
        while cursor[l] < len(order) and d.bits[order[cursor[l]]] <= d.minbit[order[cursor[l]]]:
            cursor[l] += 1
        return cursor[l] < len(order)

    while total > budget:
        candidates = [l for l in range(len(decisions)) if reducible(l)]
        if not candidates:
            break
        if rule is LayerRule.LARGE:
            l = max(candidates, key=lambda j: (sizes[j], -j))
        else:
            l = candidates[-1]
        d = decisions[l]
        if mode is QuantMode.LAYER:
            d.bits[d.keep] -= 1
            cut = layers[l].weights_per_channel * len(d.keep)
            steps.append((l, -1))
        else:
            c = orders[l][cursor[l]]
            d.bits[c] -= 1
            cut = layers[l].weights_per_channel
            steps.append((l, c))
        sizes[l] -= cut
        total -= cut
        trace.append(total)
    return GreedyResult(decisions, total <= budget, trace, steps)
