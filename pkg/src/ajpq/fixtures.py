"""Deterministic desk-scale fixtures: a synthetic 10-class image set and a trained mini-net."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluator import Dataset, _patches, evaluate, layer_forward, save_dataset
from .ir import LayerKind, LayerSpec, NetworkIR, save_model

log = logging.getLogger(__name__)


class FixtureError(RuntimeError):
    pass


@dataclass
class FixtureSpec:
    seed: int = 0
    num_classes: int = 10
    image_shape: tuple[int, int, int] = (3, 24, 24)
    n_train: int = 2000
    n_val: int = 600
    noise: float = 1.0
    # (kind, out_channels, kernel, stride) for each layer; FC follows global pooling
    architecture: tuple = (("conv", 8, 5, 1), ("depthwise", 8, 5, 1), ("conv", 16, 5, 1),
                           ("conv", 16, 7, 1), ("fc", 10, 1, 0))
    lr: float = 0.05
    weight_decay: float = 5e-4
    l1_penalty: float = 1e-3
    min_epochs: int = 10
    batch: int = 32
    max_epochs: int = 40
    target_top1: float = 95.0


def mini_net_layers(spec: FixtureSpec) -> tuple[LayerSpec, ...]:
    c, h, w = spec.image_shape
    layers = []
    for idx, (kind, c_out, k, s) in enumerate(spec.architecture):
        kind = LayerKind(kind)
        if kind is LayerKind.FC:
            layers.append(LayerSpec(idx, kind, c, c_out, 1, 0, 1, 1))
            c, h, w = c_out, 1, 1
        else:
            layer = LayerSpec(idx, kind, c, c_out, k, s, w, h)
            layers.append(layer)
            c, h, w = c_out, layer.out_height, layer.out_width
    return tuple(layers)


def make_split(spec: FixtureSpec) -> tuple[Dataset, Dataset]:
    """Seeded train/validation split of class templates plus Gaussian noise.

    Each class is an oriented sinusoidal grating with its own colour mix;
    samples get a random phase so the class is carried by texture, not
    position.
    """
    rng = np.random.default_rng(spec.seed)
    c, h, w = spec.image_shape
    k = spec.num_classes
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    angle = np.pi * np.arange(k) / k
    freq = 0.5 + 0.35 * (np.arange(k) % 3)
    colours = rng.normal(size=(k, c))
    colours /= np.linalg.norm(colours, axis=1, keepdims=True)

    n = spec.n_train + spec.n_val
    # each split is balanced on its own
    labels = np.concatenate([rng.permutation(np.arange(spec.n_train) % k),
                             rng.permutation(np.arange(spec.n_val) % k)])
    phase = rng.uniform(0, 2 * np.pi, size=n)
    proj = (np.cos(angle)[labels, None, None] * xx + np.sin(angle)[labels, None, None] * yy)
    grating = np.sin(freq[labels, None, None] * proj + phase[:, None, None])
    images = 2.0 * colours[labels][:, :, None, None] * grating[:, None] \
        + 0.5 * colours[labels][:, :, None, None]
    images += spec.noise * rng.normal(size=images.shape)
    x = images.astype(np.float32)
    train = Dataset(x[:spec.n_train], labels[:spec.n_train], k)
    val = Dataset(x[spec.n_train:], labels[spec.n_train:], k)
    return train, val


def make_dataset(spec: FixtureSpec, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, val = make_split(spec)
    paths = out_dir / "train.dataset", out_dir / "val.dataset"
    save_dataset(train, paths[0])
    save_dataset(val, paths[1])
    return paths


def init_network(spec: FixtureSpec) -> NetworkIR:
    rng = np.random.default_rng(spec.seed + 1)
    layers = mini_net_layers(spec)
    weights, biases = [], []
    for layer in layers:
        fan_in = layer.weights_per_channel
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=layer.weight_shape))
        biases.append(np.zeros(layer.out_channels))
    return NetworkIR(layers, tuple(weights), tuple(biases))


class _Trainer:
    """Minibatch SGD on float64 copies of the network parameters."""

    def __init__(self, net: NetworkIR):
        self.layers = net.layers
        self.w = [np.array(w, dtype=np.float64) for w in net.weights]
        self.b = [np.array(b, dtype=np.float64) for b in net.biases]

    def network(self) -> NetworkIR:
        return NetworkIR(self.layers, tuple(self.w), tuple(self.b))

    def step(self, x, y, lr, weight_decay=0.0, l1=0.0):
        acts, pre = [x], []
        last = len(self.layers) - 1
        for l, spec in enumerate(self.layers):
            z = layer_forward(spec, self.w[l], self.b[l], acts[-1])
            pre.append(z)
            acts.append(z if l == last else np.maximum(z, 0.0))
        logits = acts[-1]
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        loss = -np.mean(np.log(p[np.arange(len(y)), y] + 1e-12))
        g = p
        g[np.arange(len(y)), y] -= 1.0
        g /= len(y)
        for l in reversed(range(len(self.layers))):
            if l != last:
                g = g * (pre[l] > 0)
            gw, gb, g = self._backward(self.layers[l], self.w[l], acts[l], g)
            self.w[l] -= lr * (gw + weight_decay * self.w[l] + l1 * np.sign(self.w[l]))
            self.b[l] -= lr * gb
        return loss

    @staticmethod
    def _backward(spec: LayerSpec, w, x, g):
        if spec.kind is LayerKind.FC:
            pooled = x.mean(axis=(2, 3)) if x.ndim == 4 else x
            gw = g.T @ pooled
            gx = g @ w
            if x.ndim == 4:
                gx = np.broadcast_to(gx[:, :, None, None] / (x.shape[2] * x.shape[3]), x.shape)
            return gw, g.sum(axis=0), gx
        p = _patches(x, spec)
        k, s = spec.kernel_size, spec.stride
        ho, wo = g.shape[2], g.shape[3]
        if spec.kind is LayerKind.CONV:
            gw = np.tensordot(g, p, axes=([0, 2, 3], [0, 2, 3]))
            gp = np.tensordot(g, w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        else:
            gw = np.einsum("nchw,nchwij->cij", g, p)[:, None]
            gp = g[..., None, None] * w[:, 0][None, :, None, None]
        gx = np.zeros_like(x)
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += gp[..., i, j]
        return gw, g.sum(axis=(0, 2, 3)), gx


def train_network(spec: FixtureSpec, train: Dataset, val: Dataset) -> NetworkIR:
    trainer = _Trainer(init_network(spec))
    rng = np.random.default_rng(spec.seed + 2)
    x_all = train.inputs.astype(np.float64)
    for epoch in range(spec.max_epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(order), spec.batch):
            idx = order[start:start + spec.batch]
            trainer.step(x_all[idx], train.labels[idx], spec.lr, spec.weight_decay, spec.l1_penalty)
        net = trainer.network()
        top1 = evaluate(net, val).top1
        log.info("fixture epoch %d: val top-1 %.2f", epoch, top1)
        if top1 >= spec.target_top1 and epoch + 1 >= spec.min_epochs:
            return net
    raise FixtureError(f"mini-net reached only {top1:.2f}% top-1 after {spec.max_epochs} epochs "
                       f"(target {spec.target_top1}%)")


def make_model(spec: FixtureSpec, train: Dataset, val: Dataset, path: str | Path) -> NetworkIR:
    net = train_network(spec, train, val)
    save_model(net, path)
    return net


def make_fixtures(spec: FixtureSpec, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    train_path, val_path = make_dataset(spec, out_dir)
    train, val = make_split(spec)
    model_path = out_dir / "mininet.model"
    make_model(spec, train, val, model_path)
    return {"train": train_path, "val": val_path, "model": model_path}
