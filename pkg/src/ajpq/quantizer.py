"""Quantization plans and per-channel fake quantization."""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .framing import FormatError
from .ir import FLOAT_BITS, NetworkIR, ShapeError


class QuantMode(str, enum.Enum):
    CHANNEL = "channel"
    LAYER = "layer"
    FIXED = "fixed"


@dataclass(frozen=True)
class QuantPlan:
    """Per-layer, per-channel bitwidths; 0 means the channel is pruned."""

    bits: tuple[np.ndarray, ...]
    bit_max: int = 8
    mode: QuantMode = QuantMode.CHANNEL

    def __post_init__(self):
        object.__setattr__(self, "mode", QuantMode(self.mode))
        if not 1 <= self.bit_max <= FLOAT_BITS:
            raise ValueError(f"bit_max={self.bit_max} outside [1, {FLOAT_BITS}]")
        rows = []
        for l, row in enumerate(self.bits):
            row = np.array(row, dtype=np.int64).reshape(-1)
            if np.any(row < 0) or np.any(row > self.bit_max):
                raise ValueError(f"layer {l}: bitwidths outside [0, {self.bit_max}]")
            nz = row[row > 0]
            if self.mode is QuantMode.LAYER and nz.size and np.any(nz != nz[0]):
                raise ValueError(f"layer {l}: layer-wise plan mixes bitwidths {sorted(set(nz.tolist()))}")
            if self.mode is QuantMode.FIXED and np.any(nz != self.bit_max):
                raise ValueError(f"layer {l}: fixed plan must keep nonzero channels at {self.bit_max}")
            row.flags.writeable = False
            rows.append(row)
        object.__setattr__(self, "bits", tuple(rows))

    @classmethod
    def uniform(cls, net: NetworkIR, bits: int, bit_max: int | None = None, mode=None):
        bit_max = bits if bit_max is None else bit_max
        if mode is None:
            mode = QuantMode.FIXED if bits == bit_max else QuantMode.LAYER
        return cls(tuple(np.full(c, bits) for c in net.channel_counts), bit_max, mode)

    def check(self, net: NetworkIR) -> None:
        if [len(r) for r in self.bits] != net.channel_counts:
            raise ShapeError(f"plan rows {[len(r) for r in self.bits]} do not match "
                             f"network channels {net.channel_counts}")

    def to_dict(self) -> dict[str, Any]:
        return {"bit_max": self.bit_max, "mode": self.mode.value,
                "bits": [row.tolist() for row in self.bits]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QuantPlan":
        return cls(tuple(np.asarray(r, dtype=np.int64) for r in d["bits"]), int(d["bit_max"]), d["mode"])

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, QuantPlan):
            return NotImplemented
        return (self.bit_max == other.bit_max and self.mode == other.mode
                and len(self.bits) == len(other.bits)
                and all(np.array_equal(a, b) for a, b in zip(self.bits, other.bits)))

    __hash__ = None


def save_plan(plan: QuantPlan, path: str | Path, **provenance) -> None:
    doc = plan.to_dict()
    doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_plan(path: str | Path) -> QuantPlan:
    try:
        return QuantPlan.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed plan file ({exc})") from exc


def quant_levels(b: int) -> int:
    """Largest integer level of the symmetric grid for ``b`` bits."""
    return max(2 ** (b - 1) - 1, 1)


def fake_quantize_channel(weights, b: int, bit_max: int = FLOAT_BITS) -> np.ndarray:
    """Symmetric uniform quantize-dequantize of one channel.

    ``b == 32`` is treated as unquantized storage and returns the input.
    """
    if not 1 <= b <= bit_max:
        raise ValueError(f"bitwidth {b} outside [1, {bit_max}]")
    w = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if b >= FLOAT_BITS:
        return w.copy()
    peak = np.max(np.abs(w)) if w.size else 0.0
    if peak == 0.0:
        return np.zeros_like(w)
    q = quant_levels(b)
    scale = peak / q
    return np.clip(np.round(w / scale), -q, q) * scale


def quant_step(weights, b: int) -> float:
    """Grid step used by :func:`fake_quantize_channel` (0 for float storage)."""
    if b >= FLOAT_BITS:
        return 0.0
    w = np.asarray(weights, dtype=np.float64)
    return float(np.max(np.abs(w))) / quant_levels(b) if w.size else 0.0


def apply_plan(net: NetworkIR, plan: QuantPlan) -> NetworkIR:
    plan.check(net)
    weights, biases = [], []
    for w, bias, row in zip(net.weights, net.biases, plan.bits):
        out = np.zeros(w.shape, dtype=np.float64)
        for c, b in enumerate(row):
            if b > 0:
                out[c] = fake_quantize_channel(w[c], int(b), plan.bit_max)
        weights.append(out.astype(np.float32))
        if bias is not None:
            bias = np.where(row > 0, bias, 0.0).astype(np.float32)
        biases.append(bias)
    return net.replace_weights(weights, biases)
