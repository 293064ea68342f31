from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch, ZeroReference


def nmse(h_true: np.ndarray, h_est: np.ndarray):
    """Per-sample ``||H - H_hat||_F^2 / ||H||_F^2`` over the last two axes.

    A batch of matrices gives an array of ratios; average those before
    converting to dB.
    """
    h_true = np.asarray(h_true)
    h_est = np.asarray(h_est)
    if h_true.shape != h_est.shape:
        raise ShapeMismatch(f"{h_true.shape} vs {h_est.shape}")
    axes = tuple(range(max(h_true.ndim - 2, 0), h_true.ndim))
    ref = np.sum(np.abs(h_true) ** 2, axis=axes)
    if np.any(ref == 0):
        raise ZeroReference("reference channel has zero norm")
    err = np.sum(np.abs(h_true - h_est) ** 2, axis=axes)
    out = err / ref
    return float(out) if np.ndim(out) == 0 else out


def to_db(x) -> float:
    return float(10.0 * np.log10(x))


def mean_nmse_db(ratios) -> tuple[float, float]:
    """Mean NMSE in dB and the standard error of the linear mean."""
    r = np.atleast_1d(np.asarray(ratios, dtype=float))
    sem = float(r.std(ddof=1) / np.sqrt(len(r))) if len(r) > 1 else float("nan")
    return to_db(r.mean()), sem


def _cnn_widths(layer_spec) -> list[int]:
    if layer_spec is None:
        raise ValueError("CNN FLOPs need a layer description")
    if hasattr(layer_spec, "widths"):
        return layer_spec.widths()
    if isinstance(layer_spec, int):
        return [2] + [64] * layer_spec + [2]
    return list(layer_spec)


def flops(method: str, target: str, dims, layer_spec=None, zeta: int = 3) -> int:
    """Floating-point operation count of one channel estimate.

    ``dims`` is ``(n_rx, n_tx, k, tau)`` or a mapping with those keys.
    ``N_d`` is ``n_tx`` for the SI target and ``k`` for the UE target.

    LS costs ``N_r N_d tau``, MMSE ``N_r^2 N_d tau``; a CNN adds
    ``N_r N_d sum_l zeta^2 f_{l-1} f_l`` to the correlation cost.
    ``layer_spec`` is a :class:`NetworkSpec`, the channel list
    ``[f_0, ..., f_L]`` or a hidden-layer count (64 kernels each).
    """
    if isinstance(dims, dict):
        n_rx, n_tx, k, tau = dims["n_rx"], dims["n_tx"], dims["k"], dims["tau"]
    else:
        n_rx, n_tx, k, tau = dims
    if min(n_rx, n_tx, k, tau) < 1:
        raise ValueError("dimensions must be positive")
    n_d = n_tx if target.upper() == "SI" else k
    method = method.upper()
    base = n_rx * n_d * tau
    if method == "LS":
        return int(base)
    if method == "MMSE":
        return int(n_rx * base)
    if method.startswith("CNN"):
        if layer_spec is None and method[3:].isdigit():
            layer_spec = int(method[3:])
        f = _cnn_widths(layer_spec)
        return int(base + n_rx * n_d * sum(zeta * zeta * a * b for a, b in zip(f[:-1], f[1:])))
    raise ValueError(f"no FLOP model for method {method}")
