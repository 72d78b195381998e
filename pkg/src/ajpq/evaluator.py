"""Forward inference over a NetworkIR and top-k evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .framing import FormatError, read_framed, write_framed
from .ir import LayerKind, LayerSpec, NetworkIR, ShapeError

DEFAULT_BATCH = 60


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) int64
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float32)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 4 or y.shape != (x.shape[0],):
            raise ShapeError(f"inputs {x.shape} / labels {y.shape} mismatch")
        if not np.all(np.isfinite(x)):
            raise ValueError("dataset inputs must be finite")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.inputs.shape[1:])


@dataclass(frozen=True)
class EvalReport:
    top1: float
    top5: float
    samples_evaluated: int

    def as_dict(self) -> dict:
        return {"top1": self.top1, "top5": self.top5, "samples": self.samples_evaluated}


def save_dataset(data: Dataset, path: str | Path) -> None:
    header = {"num_samples": len(data), "shape": list(data.input_shape),
              "classes": data.num_classes}
    blob = data.inputs.astype("<f4").tobytes() + data.labels.astype("<i4").tobytes()
    write_framed(path, "dataset", header, blob)


def load_dataset(path: str | Path) -> Dataset:
    header, blob = read_framed(path, "dataset")
    try:
        n, shape, classes = int(header["num_samples"]), tuple(header["shape"]), int(header["classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad dataset header ({exc})") from exc
    per = int(np.prod(shape))
    if len(blob) != n * per * 4 + n * 4:
        raise FormatError(f"{path}: blob is {len(blob)} bytes, expected {n * per * 4 + n * 4}")
    x = np.frombuffer(blob, dtype="<f4", count=n * per).reshape((n,) + shape)
    y = np.frombuffer(blob, dtype="<i4", count=n, offset=n * per * 4)
    if not np.all(np.isfinite(x)):
        raise FormatError(f"{path}: non-finite inputs")
    return Dataset(x.copy(), y.astype(np.int64), classes)


def _patches(x: np.ndarray, spec: LayerSpec) -> np.ndarray:
    k, s = spec.kernel_size, spec.stride
    # (N, C, Ho, Wo, k, k)
    return sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]


def layer_forward(spec: LayerSpec, w: np.ndarray, b, x: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if spec.kind is LayerKind.FC:
        if x.ndim == 4:
            x = x.mean(axis=(2, 3))
        if x.shape[1] != spec.in_channels:
            raise ShapeError(f"layer {spec.index}: got {x.shape[1]} features, expects {spec.in_channels}")
        out = x @ w.T
        if b is not None:
            out = out + b
        return out
    if x.shape[1:] != (spec.in_channels, spec.height, spec.width):
        raise ShapeError(f"layer {spec.index}: input {x.shape[1:]} != "
                         f"{(spec.in_channels, spec.height, spec.width)}")
    p = _patches(x, spec)
    if spec.kind is LayerKind.CONV:
        out = np.tensordot(p, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    else:
        out = np.einsum("nchwij,cij->nchw", p, w[:, 0])
    if b is not None:
        out = out + np.asarray(b, dtype=np.float64)[None, :, None, None]
    return out


def forward(net: NetworkIR, inputs: np.ndarray) -> np.ndarray:
    """Logits for a batch ``(N, C, H, W)`` (or a single ``(C, H, W)`` sample)."""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} != network input {net.input_shape}")
    last = net.n - 1
    for l, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        x = layer_forward(spec, w, b, x)
        if l != last:
            x = np.maximum(x, 0.0)
    if x.ndim == 4:
        # networks without an FC head: pool the final feature map into logits
        x = x.mean(axis=(2, 3))
    return x[0] if single else x


def topk_hits(logits: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return np.any(order == labels[:, None], axis=1)


def evaluate(net: NetworkIR, data: Dataset, batch: int = DEFAULT_BATCH) -> EvalReport:
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    hit1 = hit5 = 0
    for start in range(0, len(data), batch):
        logits = forward(net, data.inputs[start:start + batch])
        labels = data.labels[start:start + batch]
        hit1 += int(topk_hits(logits, labels, 1).sum())
        hit5 += int(topk_hits(logits, labels, 5).sum())
    n = len(data)
    return EvalReport(100.0 * hit1 / n, 100.0 * hit5 / n, n)


class ClassificationProbe:
    """Performance probe: maps a (compressed) network to its metrics."""

    def __init__(self, data: Dataset, batch: int = DEFAULT_BATCH):
        self.data = data
        self.batch = batch

    def __call__(self, net: NetworkIR) -> dict[str, float]:
        return evaluate(net, self.data, self.batch).as_dict()
