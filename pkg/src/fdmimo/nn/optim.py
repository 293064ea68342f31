from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


def mse_loss(pred: np.ndarray, label: np.ndarray):
    """Batch mean of the per-sample squared Frobenius error, and its gradient."""
    if pred.shape != label.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs label {label.shape}")
    diff = pred - label
    n = pred.shape[0]
    return float(np.sum(diff.astype(np.float64) ** 2) / n), (2.0 / n) * diff


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state: AdamState, hyper: AdamHyper = AdamHyper()) -> None:
    """One in-place Adam update with bias correction."""
    state.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)).astype(p.dtype)
