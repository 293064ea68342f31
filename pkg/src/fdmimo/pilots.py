"""Pilot codebooks, pilot-sharing schemes and received pilot signals."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, SystemConfig
from .errors import ShapeMismatch
from .numerics import as_generator, sample_cn


class SchemeKind(str, enum.Enum):
    ORTHOGONAL = "orthogonal"  # tau = N_t + K, SI and UE pilots time-multiplexed
    SHARED_NT = "shared_nt"  # tau = N_t
    SHARED_K = "shared_k"  # tau = K

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"sharednt": "shared_nt", "sharedk": "shared_k", "nt+k": "orthogonal"}
        return cls(aliases.get(key, key))


def dft_codebook(m: int, tau: int, unit_modulus: bool = True) -> np.ndarray:
    """``m x tau`` DFT pilot matrix with entries ``s * w**(r*c)``, ``w = exp(-2j pi / tau)``.

    ``s`` is 1 for unit-modulus symbols, otherwise ``1/sqrt(m)``.
    """
    if m < 1 or tau < 1:
        raise ValueError("m and tau must be >= 1")
    rc = np.outer(np.arange(m), np.arange(tau))
    # reduce the exponent first so large products keep full phase accuracy
    w = np.exp(-2j * np.pi * (rc % tau) / tau)
    return w if unit_modulus else w / np.sqrt(m)


@dataclass(frozen=True)
class PilotScheme:
    kind: SchemeKind
    tau: int
    w_si: np.ndarray  # N_t x tau, the precoded SI pilots F X_SI
    w_ue: np.ndarray  # K x tau
    si_slots: np.ndarray  # bool mask of slots carrying SI pilots
    ue_slots: np.ndarray

    @property
    def tau_si(self) -> int:
        """Number of slots carrying SI pilots; the LS normalization length."""
        return int(self.si_slots.sum())

    @property
    def tau_ue(self) -> int:
        return int(self.ue_slots.sum())

    def active_tau(self, target: str) -> int:
        return self.tau_si if target.upper() == "SI" else self.tau_ue


def build_scheme(kind, cfg: SystemConfig, unit_modulus: bool = True) -> PilotScheme:
    kind = SchemeKind.parse(kind)
    nt, k = cfg.n_tx, cfg.k_total
    if kind is SchemeKind.SHARED_NT:
        tau = nt
        w_si, w_ue = dft_codebook(nt, tau, unit_modulus), dft_codebook(k, tau, unit_modulus)
        si_slots = ue_slots = np.ones(tau, dtype=bool)
    elif kind is SchemeKind.SHARED_K:
        tau = k
        w_si, w_ue = dft_codebook(nt, tau, unit_modulus), dft_codebook(k, tau, unit_modulus)
        si_slots = ue_slots = np.ones(tau, dtype=bool)
    else:
        tau = nt + k
        w_si = np.zeros((nt, tau), dtype=complex)
        w_ue = np.zeros((k, tau), dtype=complex)
        w_si[:, :nt] = dft_codebook(nt, nt, unit_modulus)
        w_ue[:, nt:] = dft_codebook(k, k, unit_modulus)
        si_slots = np.arange(tau) < nt
        ue_slots = ~si_slots
    return PilotScheme(kind, tau, w_si, w_ue, si_slots, ue_slots)


@dataclass
class ReceivedPilot:
    """Received pilot block ``y`` (``(..., N_r, tau)``) with the SNRs it was generated at (linear)."""

    y: np.ndarray
    snr_si: float
    snr_ue: float


def assemble_rx(
    scheme: PilotScheme,
    ch: ChannelRealization,
    snr_si: float,
    snr_ue: float,
    rng=None,
    noise: bool = True,
) -> ReceivedPilot:
    """``Y = sqrt(snr_si) H_SI W_SI + sqrt(snr_ue) H_UE W_UE + N`` with unit-variance noise."""
    h_si, h_ue = np.asarray(ch.h_si), np.asarray(ch.h_ue)
    if h_si.shape[-1] != scheme.w_si.shape[0] or h_ue.shape[-1] != scheme.w_ue.shape[0]:
        raise ShapeMismatch(
            f"channels {h_si.shape}/{h_ue.shape} do not match codebooks "
            f"{scheme.w_si.shape}/{scheme.w_ue.shape}"
        )
    if h_si.shape[:-1] != h_ue.shape[:-1]:
        raise ShapeMismatch("SI and UE channels disagree on receive dimension or batch")
    y = np.sqrt(snr_si) * (h_si @ scheme.w_si) + np.sqrt(snr_ue) * (h_ue @ scheme.w_ue)
    if noise:
        y = y + sample_cn(as_generator(rng), y.shape)
    return ReceivedPilot(y, float(snr_si), float(snr_ue))


def cancel_si(rx: ReceivedPilot, h_si_hat: np.ndarray, scheme: PilotScheme) -> ReceivedPilot:
    """Subtract the SI contribution predicted by an SI channel estimate."""
    h_si_hat = np.asarray(h_si_hat)
    if h_si_hat.shape[-1] != scheme.w_si.shape[0] or h_si_hat.shape[-2] != rx.y.shape[-2]:
        raise ShapeMismatch(f"SI estimate has shape {h_si_hat.shape}")
    y = rx.y - np.sqrt(rx.snr_si) * (h_si_hat @ scheme.w_si)
    return ReceivedPilot(y, rx.snr_si, rx.snr_ue)


def correlate(rx, w: np.ndarray) -> np.ndarray:
    """Correlate received pilots with a codebook: ``Y W^H``."""
    y = rx.y if isinstance(rx, ReceivedPilot) else np.asarray(rx)
    if y.shape[-1] != w.shape[-1]:
        raise ShapeMismatch(f"received block has {y.shape[-1]} slots, codebook {w.shape[-1]}")
    return y @ w.conj().T
