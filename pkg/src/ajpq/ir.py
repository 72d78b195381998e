"""Network intermediate representation, size/FLOPs accounting and model files."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .framing import FormatError, read_framed, write_framed

SOURCE_BITS = 32
# Channels stored at SOURCE_BITS are kept as raw floats: no quantizer metadata.
FLOAT_BITS = SOURCE_BITS
# Scale and zero point per quantized channel.
QUANT_OVERHEAD_BITS = 2 * 32
BIAS_BITS = 32


class LayerKind(str, enum.Enum):
    CONV = "conv"
    DEPTHWISE = "depthwise"
    FC = "fc"

    @property
    def type_code(self) -> int:
        # feature `t` of the layer state: 0=FC, 1=Conv, 2=DepthwiseConv
        return {LayerKind.FC: 0, LayerKind.CONV: 1, LayerKind.DEPTHWISE: 2}[self]


class TaskKind(str, enum.Enum):
    CLASSIFICATION = "classification"
    DETECTION = "detection"


class InvalidSpecError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    index: int
    kind: LayerKind
    in_channels: int
    out_channels: int
    kernel_size: int = 1
    stride: int = 0
    width: int = 1
    height: int = 1
    has_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if min(self.in_channels, self.out_channels, self.kernel_size) < 1:
            raise InvalidSpecError(f"layer {self.index}: channel counts and kernel must be >= 1")
        if self.kind is LayerKind.FC:
            if (self.kernel_size, self.stride, self.width, self.height) != (1, 0, 1, 1):
                raise InvalidSpecError(f"layer {self.index}: FC layers need k=1, stride=0, w=h=1")
        else:
            if self.stride < 1:
                raise InvalidSpecError(f"layer {self.index}: conv stride must be >= 1")
            if self.kernel_size > min(self.width, self.height):
                raise InvalidSpecError(f"layer {self.index}: kernel larger than input")
        if self.kind is LayerKind.DEPTHWISE and self.in_channels != self.out_channels:
            raise InvalidSpecError(f"layer {self.index}: depthwise needs c_o == c_i")

    @property
    def out_width(self) -> int:
        if self.kind is LayerKind.FC:
            return 1
        return (self.width - self.kernel_size) // self.stride + 1

    @property
    def out_height(self) -> int:
        if self.kind is LayerKind.FC:
            return 1
        return (self.height - self.kernel_size) // self.stride + 1

    @property
    def weight_shape(self) -> tuple[int, ...]:
        k = self.kernel_size
        if self.kind is LayerKind.CONV:
            return (self.out_channels, self.in_channels, k, k)
        if self.kind is LayerKind.DEPTHWISE:
            return (self.in_channels, 1, k, k)
        return (self.out_channels, self.in_channels)

    @property
    def weights_per_channel(self) -> int:
        return int(np.prod(self.weight_shape[1:]))

    @property
    def num_weights(self) -> int:
        return self.out_channels * self.weights_per_channel

    def to_dict(self) -> dict:
        return {
            "index": self.index, "kind": self.kind.value,
            "in_channels": self.in_channels, "out_channels": self.out_channels,
            "kernel_size": self.kernel_size, "stride": self.stride,
            "width": self.width, "height": self.height, "has_bias": self.has_bias,
        }


@dataclass(frozen=True)
class NetworkIR:
    """A sequential stack of quantizable layers with float32 weights.

    Arrays are marked read-only; use :meth:`replace_weights` to derive a
    modified copy.
    """

    layers: tuple[LayerSpec, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray | None, ...]
    task: TaskKind = TaskKind.CLASSIFICATION

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "task", TaskKind(self.task))
        if not self.layers:
            raise InvalidSpecError("network has no layers")
        if len(self.weights) != len(self.layers) or len(self.biases) != len(self.layers):
            raise ShapeError("one weight tensor and one bias slot per layer required")
        ws, bs = [], []
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            w = np.array(w, dtype=np.float32)
            if w.shape != spec.weight_shape:
                raise ShapeError(f"layer {spec.index}: weight shape {w.shape} != {spec.weight_shape}")
            if spec.has_bias:
                if b is None:
                    raise ShapeError(f"layer {spec.index}: missing bias")
                b = np.array(b, dtype=np.float32)
                if b.shape != (spec.out_channels,):
                    raise ShapeError(f"layer {spec.index}: bias shape {b.shape}")
                b.flags.writeable = False
            elif b is not None:
                raise ShapeError(f"layer {spec.index}: unexpected bias")
            w.flags.writeable = False
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))
        self._check_chain()

    def _check_chain(self):
        for l, spec in enumerate(self.layers):
            if spec.index != l:
                raise InvalidSpecError(f"layer at position {l} has index {spec.index}")
            if l == 0:
                continue
            prev = self.layers[l - 1]
            if spec.in_channels != prev.out_channels:
                raise ShapeError(f"layer {l}: c_i={spec.in_channels} but layer {l-1} emits {prev.out_channels}")
            if spec.kind is not LayerKind.FC:
                if prev.kind is LayerKind.FC:
                    raise ShapeError(f"layer {l}: conv after FC is not supported")
                if (spec.width, spec.height) != (prev.out_width, prev.out_height):
                    raise ShapeError(f"layer {l}: input {spec.width}x{spec.height} "
                                     f"!= previous output {prev.out_width}x{prev.out_height}")

    @property
    def n(self) -> int:
        return len(self.layers)

    @property
    def channel_counts(self) -> list[int]:
        return [spec.out_channels for spec in self.layers]

    @property
    def input_shape(self) -> tuple[int, int, int]:
        first = self.layers[0]
        return (first.in_channels, first.height, first.width)

    def replace_weights(self, weights, biases) -> "NetworkIR":
        return NetworkIR(self.layers, tuple(weights), tuple(biases), self.task)


def _row(layer: LayerSpec, plan_row) -> np.ndarray:
    row = np.asarray(plan_row)
    if row.shape != (layer.out_channels,):
        raise ShapeError(f"layer {layer.index}: plan row length {row.shape} != {layer.out_channels}")
    if np.any(row < 0) or np.any(row > FLOAT_BITS):
        raise ShapeError(f"layer {layer.index}: bitwidths outside [0, {FLOAT_BITS}]")
    return row.astype(np.int64)


def channel_size_bits(layer: LayerSpec, bits: int) -> int:
    """Storage for one output channel at the given bitwidth."""
    if bits == 0:
        return 0
    if bits >= FLOAT_BITS:
        return layer.weights_per_channel * FLOAT_BITS
    extra = QUANT_OVERHEAD_BITS + (BIAS_BITS if layer.has_bias else 0)
    return layer.weights_per_channel * int(bits) + extra


def layer_size_bits(layer: LayerSpec, plan_row) -> int:
    row = _row(layer, plan_row)
    return sum(channel_size_bits(layer, int(b)) for b in row)


def layer_flops(layer: LayerSpec, nonzero_out: int, nonzero_in: int) -> int:
    if not (0 <= nonzero_out <= layer.out_channels and 0 <= nonzero_in <= layer.in_channels):
        raise ShapeError(f"layer {layer.index}: nonzero channel counts out of range")
    if layer.kind is LayerKind.FC:
        return 2 * nonzero_out * nonzero_in
    if layer.stride < 1:
        raise InvalidSpecError(f"layer {layer.index}: stride 0 on a conv layer")
    spatial = layer.out_width * layer.out_height * layer.kernel_size ** 2
    if layer.kind is LayerKind.DEPTHWISE:
        if nonzero_out == 0:
            return 0
        return 2 * nonzero_in * spatial
    return 2 * nonzero_out * nonzero_in * spatial


def live_channel_counts(net: NetworkIR, bits: Sequence) -> list[tuple[int, int]]:
    """(nonzero_out, nonzero_in) per layer given per-channel bitwidths.

    A depthwise channel only computes when both its input and its own
    output channel survive.
    """
    counts = []
    prev_alive = np.ones(net.layers[0].in_channels, dtype=bool)
    for layer, row in zip(net.layers, bits):
        alive = np.asarray(row) > 0
        if layer.kind is LayerKind.DEPTHWISE:
            both = int(np.count_nonzero(alive & prev_alive))
            counts.append((both, both))
        else:
            counts.append((int(alive.sum()), int(prev_alive.sum())))
        prev_alive = alive
    return counts


@dataclass(frozen=True)
class CostLedger:
    layer_size: tuple[int, ...]
    layer_flops: tuple[int, ...]
    base_layer_size: tuple[int, ...]
    base_layer_flops: tuple[int, ...]

    @property
    def base_size(self) -> int:
        return sum(self.base_layer_size)

    @property
    def base_flops(self) -> int:
        return sum(self.base_layer_flops)

    @property
    def rest_size(self) -> int:
        return sum(self.layer_size)

    @property
    def rest_flops(self) -> int:
        return sum(self.layer_flops)

    @property
    def reduced_size(self) -> int:
        return self.base_size - self.rest_size

    @property
    def reduced_flops(self) -> int:
        return self.base_flops - self.rest_flops


def baseline_sizes(net: NetworkIR) -> tuple[int, ...]:
    return tuple(layer.num_weights * SOURCE_BITS for layer in net.layers)


def baseline_flops(net: NetworkIR) -> tuple[int, ...]:
    return tuple(layer_flops(l, l.out_channels, l.in_channels) for l in net.layers)


def total_cost(net: NetworkIR, plan) -> CostLedger:
    """Per-layer size and FLOPs of ``net`` under ``plan``.

    ``plan`` is a QuantPlan or any sequence of per-layer bitwidth rows.
    """
    bits = list(getattr(plan, "bits", plan))
    if len(bits) != net.n:
        raise ShapeError(f"plan has {len(bits)} rows for {net.n} layers")
    sizes = tuple(layer_size_bits(layer, row) for layer, row in zip(net.layers, bits))
    flops = tuple(layer_flops(layer, nz_out, nz_in)
                  for layer, (nz_out, nz_in) in zip(net.layers, live_channel_counts(net, bits)))
    return CostLedger(sizes, flops, baseline_sizes(net), baseline_flops(net))


def save_model(net: NetworkIR, path: str | Path) -> None:
    chunks, entries, offset = [], [], 0
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        wb = np.ascontiguousarray(w, dtype="<f4").tobytes()
        bb = b"" if b is None else np.ascontiguousarray(b, dtype="<f4").tobytes()
        entry = spec.to_dict()
        entry.update(weight_offset=offset, weight_bytes=len(wb),
                     bias_offset=offset + len(wb), bias_bytes=len(bb))
        entries.append(entry)
        chunks += [wb, bb]
        offset += len(wb) + len(bb)
    header = {"task": net.task.value, "num_layers": net.n, "layers": entries, "blob_bytes": offset}
    write_framed(path, "model", header, b"".join(chunks))


def load_model(path: str | Path) -> NetworkIR:
    header, blob = read_framed(path, "model")
    try:
        entries = header["layers"]
        if header["num_layers"] != len(entries):
            raise FormatError(f"{path}: header declares {header['num_layers']} layers, lists {len(entries)}")
        if header["blob_bytes"] != len(blob):
            raise FormatError(f"{path}: blob is {len(blob)} bytes, header expects {header['blob_bytes']}")
        layers, weights, biases = [], [], []
        for e in entries:
            spec = LayerSpec(e["index"], LayerKind(e["kind"]), e["in_channels"], e["out_channels"],
                             e["kernel_size"], e["stride"], e["width"], e["height"], e["has_bias"])
            w = _section(blob, e["weight_offset"], e["weight_bytes"], spec.weight_shape, path)
            b = None
            if spec.has_bias:
                b = _section(blob, e["bias_offset"], e["bias_bytes"], (spec.out_channels,), path)
            elif e["bias_bytes"]:
                raise FormatError(f"{path}: layer {spec.index} has bias bytes but no bias")
            layers.append(spec)
            weights.append(w)
            biases.append(b)
        return NetworkIR(tuple(layers), tuple(weights), tuple(biases), TaskKind(header["task"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing or invalid header field: {exc}") from exc
    except (InvalidSpecError, ShapeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _section(blob: bytes, offset: int, nbytes: int, shape, path) -> np.ndarray:
    expect = int(np.prod(shape)) * 4
    if nbytes != expect or offset < 0 or offset + nbytes > len(blob):
        raise FormatError(f"{path}: blob section at {offset} ({nbytes} bytes) does not fit shape {shape}")
    arr = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{path}: non-finite weight values")
    return arr.astype(np.float32)
