"""Low-resolution ADC models: b-bit uniform quantizers and the 1-bit sign."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import as_generator

# MSE-optimal uniform step sizes for a unit-variance Gaussian input
OPTIMAL_STEP = {1: float(np.sqrt(8.0 / np.pi)), 2: 0.996, 3: 0.586, 4: 0.335}
# Matching distortion values E|Q(r) - r|^2 / E|r|^2
REFERENCE_DISTORTION = {1: 1.0 - 2.0 / np.pi, 2: 0.1188, 3: 0.0374, 4: 0.0115}


@dataclass(frozen=True)
class QuantizerSpec:
    bits: int
    step: float = field(default=None)

    def __post_init__(self):
        if self.bits not in OPTIMAL_STEP:
            raise ValueError(f"unsupported bit depth {self.bits}")
        if self.step is None:
            object.__setattr__(self, "step", OPTIMAL_STEP[self.bits])

    @property
    def n_levels(self) -> int:
        return 2**self.bits

    @property
    def thresholds(self) -> np.ndarray:
        l = np.arange(1, self.n_levels)
        return (-(2 ** (self.bits - 1)) + l) * self.step

    @property
    def levels(self) -> np.ndarray:
        return (np.arange(self.n_levels) - (self.n_levels - 1) / 2.0) * self.step


def _quantize_real(r: np.ndarray, spec: QuantizerSpec) -> np.ndarray:
    # cell index l - 1 for r in (t_{l-1}, t_l]; ceil keeps the left-open convention
    half = 2 ** (spec.bits - 1)
    idx = np.clip(np.ceil(r / spec.step) + half - 1, 0, spec.n_levels - 1)
    return (idx - (spec.n_levels - 1) / 2.0) * spec.step


def quantize_scalar(r: float, spec: QuantizerSpec) -> float:
    return float(_quantize_real(np.asarray(r, dtype=float), spec))


def quantize_matrix(y: np.ndarray, spec: QuantizerSpec) -> np.ndarray:
    """Quantize real and imaginary parts independently."""
    y = np.asarray(y)
    if not np.iscomplexobj(y):
        y = y.astype(complex)
    return _quantize_real(y.real, spec) + 1j * _quantize_real(y.imag, spec)


def sign_quantize(y: np.ndarray) -> np.ndarray:
    """Element-wise signum on real and imaginary parts; zeros map to -1."""
    y = np.asarray(y)
    re = np.where(y.real > 0, 1.0, -1.0)
    im = np.where(np.imag(y) > 0, 1.0, -1.0)
    return re + 1j * im


def agc_quantize(y: np.ndarray, spec: QuantizerSpec, sign: bool = False):
    """Quantize after normalizing each matrix to unit per-component power.

    The gain ``g = sqrt(mean|y|^2 / 2)`` is computed per matrix over the
    last two axes; the output is ``g * Q(y / g)`` so it stays on the input's
    scale. With ``sign=True`` the raw signum is returned instead and the
    gain is only reported.

    Returns
    -------
    yq : ndarray
    gain : ndarray, one entry per matrix
    """
    y = np.asarray(y)
    gain = np.sqrt(np.mean(np.abs(y) ** 2, axis=(-2, -1), keepdims=True) / 2.0)
    gain = np.where(gain > 0, gain, 1.0)
    if sign:
        return sign_quantize(y), np.squeeze(gain, axis=(-2, -1))
    return gain * quantize_matrix(y / gain, spec), np.squeeze(gain, axis=(-2, -1))


def estimate_distortion(spec: QuantizerSpec, n_samples: int = 1_000_000, rng=0) -> float:
    """Monte Carlo ``E[(Q(r) - r)^2] / E[r^2]`` for ``r ~ N(0, 1)``."""
    if n_samples < 100_000:
        raise ValueError("need at least 1e5 samples")
    r = as_generator(rng).standard_normal(n_samples)
    q = _quantize_real(r, spec)
    return float(np.sum((q - r) ** 2) / np.sum(r**2))
