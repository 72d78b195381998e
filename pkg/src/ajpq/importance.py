"""L1-norm channel importance shared by pruning and the bitwidth lower bound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ir import NetworkIR


def score_layer(net: NetworkIR, l: int) -> np.ndarray:
    """L1 norm of each output channel's kernel slice."""
    w = np.asarray(net.weights[l], dtype=np.float64)
    return np.abs(w.reshape(w.shape[0], -1)).sum(axis=1)


def rank(scores) -> np.ndarray:
    """Channel indices by descending score; ties keep the lower index first."""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("importance scores must be finite")
    return np.argsort(-scores, kind="stable")


def top_channels(scores, c_nz: int) -> np.ndarray:
    """Sorted indices of the ``c_nz`` most important channels."""
    if not 1 <= c_nz <= len(scores):
        raise ValueError(f"c_nz={c_nz} outside [1, {len(scores)}]")
    return np.sort(rank(scores)[:c_nz])


@dataclass(frozen=True)
class ImportanceTable:
    scores: tuple[np.ndarray, ...]
    order: tuple[np.ndarray, ...]

    @classmethod
    def from_network(cls, net: NetworkIR) -> "ImportanceTable":
        scores = tuple(score_layer(net, l) for l in range(net.n))
        return cls(scores, tuple(rank(s) for s in scores))

    def __len__(self):
        return len(self.scores)
