"""LS and MMSE estimation of the SI and UE channels.

All MMSE routines work on column-stacked (``vec``) channels. The received
block of one realization is ``N_r x tau``; with the effective pilot
operators ``X_SI = W_SI^T kron I_{N_r}`` and ``X_UE = W_UE^T kron I_{N_r}``

    vec(Y) = sqrt(snr_si) X_SI vec(H_SI) + sqrt(snr_ue) X_UE vec(H_UE) + vec(N).

The noise covariance is ``I_{N_r tau}``. Filters are returned as explicit
matrices so a batch of observations can be processed with one product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig, gen_realization
from .errors import ShapeMismatch
from .numerics import as_generator, hermitian_solve, kron, unvec, vec
from .pilots import PilotScheme, ReceivedPilot


@dataclass
class CovarianceModel:
    r_si: np.ndarray  # (N_r N_t) x (N_r N_t)
    r_ue: np.ndarray  # (N_r K) x (N_r K)
    n_realizations: int


def ls_estimate(y_corr: np.ndarray, tau: int, snr: float) -> np.ndarray:
    """``H_hat = Y W^H / (tau sqrt(snr))``; ``tau`` is the number of active pilot slots."""
    if snr <= 0:
        raise ValueError("snr must be positive")
    return np.asarray(y_corr) / (tau * np.sqrt(snr))


def empirical_covariance(samples) -> np.ndarray:
    """``(1/M) sum_i vec(H_i) vec(H_i)^H`` over a stack of equally shaped matrices."""
    if isinstance(samples, (list, tuple)):
        shapes = {np.shape(s) for s in samples}
        if len(shapes) != 1:
            raise ShapeMismatch(f"samples have differing shapes {sorted(shapes)}")
        samples = np.stack(samples)
    samples = np.asarray(samples)
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    v = vec(samples) if samples.ndim == 3 else samples
    r = v.T @ v.conj() / v.shape[0]
    return 0.5 * (r + r.conj().T)


def estimate_covariances(cfg: SystemConfig, rng, m: int = 1000) -> CovarianceModel:
    """Empirical SI and UE covariances from ``m`` normalized channel draws."""
    ch = gen_realization(cfg, as_generator(rng), size=m).normalized()
    return CovarianceModel(empirical_covariance(ch.h_si), empirical_covariance(ch.h_ue), m)


def pilot_operator(w: np.ndarray, n_rx: int) -> np.ndarray:
    """``W^T kron I_{N_r}``: maps ``vec(H)`` to ``vec(H W)``."""
    return kron(w.T, np.eye(n_rx))


def _observation_cov(terms, dim: int) -> np.ndarray:
    c = np.eye(dim, dtype=complex)
    for snr, x, r in terms:
        c += snr * (x @ r @ x.conj().T)
    return 0.5 * (c + c.conj().T)


def _lmmse_filter(snr, x, r, c) -> np.ndarray:
    # sqrt(snr) R X^H C^{-1} with C Hermitian: (C^{-1} X R)^H
    return np.sqrt(snr) * hermitian_solve(c, x @ r).conj().T


def _n_rx(scheme: PilotScheme, cov: CovarianceModel) -> int:
    n = cov.r_si.shape[0] // scheme.w_si.shape[0]
    if n * scheme.w_si.shape[0] != cov.r_si.shape[0]:
        raise ShapeMismatch("SI covariance does not match the pilot scheme")
    if cov.r_ue.shape[0] != n * scheme.w_ue.shape[0]:
        raise ShapeMismatch("UE covariance does not match the pilot scheme")
    return n


def mmse_si_filter(scheme: PilotScheme, cov: CovarianceModel, snr_si: float, snr_ue: float):
    n_rx = _n_rx(scheme, cov)
    x_si, x_ue = pilot_operator(scheme.w_si, n_rx), pilot_operator(scheme.w_ue, n_rx)
    c = _observation_cov([(snr_si, x_si, cov.r_si), (snr_ue, x_ue, cov.r_ue)], n_rx * scheme.tau)
    return _lmmse_filter(snr_si, x_si, cov.r_si, c)


def apply_filter(g: np.ndarray, y: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """``unvec(G vec(Y))`` for one block or a batch of blocks."""
    return unvec(vec(y) @ g.T, rows, cols)


def mmse_si(rx: ReceivedPilot, scheme: PilotScheme, cov: CovarianceModel) -> np.ndarray:
    n_rx = rx.y.shape[-2]
    g = mmse_si_filter(scheme, cov, rx.snr_si, rx.snr_ue)
    return apply_filter(g, rx.y, n_rx, scheme.w_si.shape[0])


def si_error_covariance(
    scheme: PilotScheme, cov: CovarianceModel, snr_si: float, snr_ue: float
) -> np.ndarray:
    """Covariance of ``vec(H_SI - H_SI_mmse)``, the residual after SI cancellation."""
    n_rx = _n_rx(scheme, cov)
    x_si, x_ue = pilot_operator(scheme.w_si, n_rx), pilot_operator(scheme.w_ue, n_rx)
    c = _observation_cov([(snr_si, x_si, cov.r_si), (snr_ue, x_ue, cov.r_ue)], n_rx * scheme.tau)
    xr = x_si @ cov.r_si
    r_e = cov.r_si - snr_si * xr.conj().T @ hermitian_solve(c, xr)
    return 0.5 * (r_e + r_e.conj().T)


def mmse_ue_filter(
    scheme: PilotScheme, cov: CovarianceModel, r_e: np.ndarray, snr_si: float, snr_ue: float
):
    """LMMSE filter for the UE channels with residual SI of covariance ``r_e`` as coloured noise.

    The residual enters the observation covariance as ``snr_si X_SI R_E X_SI^H``.
    """
    n_rx = _n_rx(scheme, cov)
    x_si, x_ue = pilot_operator(scheme.w_si, n_rx), pilot_operator(scheme.w_ue, n_rx)
    c = _observation_cov([(snr_ue, x_ue, cov.r_ue), (snr_si, x_si, r_e)], n_rx * scheme.tau)
    return _lmmse_filter(snr_ue, x_ue, cov.r_ue, c)


def mmse_ue(
    rx_ue: ReceivedPilot, scheme: PilotScheme, cov: CovarianceModel, r_e: np.ndarray
) -> np.ndarray:
    """MMSE UE estimate from (typically SI-cancelled) pilots.

    Pass ``r_e = cov.r_si`` and the uncancelled block to estimate the UE
    channels in the presence of the full SI.
    """
    n_rx = rx_ue.y.shape[-2]
    g = mmse_ue_filter(scheme, cov, r_e, rx_ue.snr_si, rx_ue.snr_ue)
    return apply_filter(g, rx_ue.y, n_rx, scheme.w_ue.shape[0])


def mmse_orthogonal(y_corr: np.ndarray, tau: int, snr: float, r: np.ndarray) -> np.ndarray:
    """MMSE estimate for interference-free orthogonal pilots.

    Evaluates ``sqrt(snr) (R^{-1} + tau snr I)^{-1} vec(Y W^H)`` as
    ``sqrt(snr) R (I + tau snr R)^{-1} vec(Y W^H)``, which also holds for a
    rank-deficient empirical ``R``. ``tau`` is the number of slots the
    target's pilots occupy.
    """
    y_corr = np.asarray(y_corr)
    rows, cols = y_corr.shape[-2:]
    n = rows * cols
    if r.shape != (n, n):
        raise ShapeMismatch(f"covariance {r.shape} does not match {rows}x{cols} channel")
    a = np.eye(n) + tau * snr * r
    a = 0.5 * (a + a.conj().T)
    z = hermitian_solve(a, vec(y_corr).T)
    return unvec((np.sqrt(snr) * (r @ z)).T, rows, cols)

