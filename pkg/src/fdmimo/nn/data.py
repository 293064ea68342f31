"""Training data for the neural estimators: real/imag stacking, datasets
and min-max scaling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..channel import SystemConfig, gen_realization, gen_rx_tx_pair
from ..errors import DegenerateRange
from ..estimators import CovarianceModel, estimate_covariances, mmse_si_filter, apply_filter
from ..numerics import as_generator, sample_cn
from ..pilots import PilotScheme, SchemeKind, correlate
from ..quantizer import QuantizerSpec, agc_quantize

DEFAULT_SPLIT = (20_000, 20_000, 10_000)


def stack_complex(h: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Complex ``(..., H, W)`` to real ``(..., H, W, 2)`` holding (real, imag)."""
    return np.stack([h.real, h.imag], axis=-1).astype(dtype)


def unstack_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0] + 1j * x[..., 1]


def stack_vector(h: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Complex ``(..., N)`` to real ``(..., 2N)`` as ``[Re h; Im h]``."""
    return np.concatenate([h.real, h.imag], axis=-1).astype(dtype)


def unstack_vector(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def default_split(size: int) -> tuple[int, int, int]:
    if size == sum(DEFAULT_SPLIT):
        return DEFAULT_SPLIT
    n_train = int(round(0.4 * size))
    n_val = int(round(0.4 * size))
    return n_train, n_val, size - n_train - n_val


@dataclass
class Dataset:
    """Inputs and labels with a (train, val, test) split in that order.

    ``tags`` holds per-sample side information (for example the SNR a
    sample was drawn at); ``metadata["tag_names"]`` names its columns.
    """

    inputs: np.ndarray
    labels: np.ndarray
    split: tuple
    metadata: dict = field(default_factory=dict)
    tags: np.ndarray | None = None

    def __post_init__(self):
        self.split = tuple(int(s) for s in self.split)
        if sum(self.split) != len(self.inputs) or len(self.inputs) != len(self.labels):
            raise ValueError(f"split {self.split} does not cover {len(self.inputs)} samples")

    def _range(self, name: str) -> slice:
        a, b, _ = self.split
        return {"train": slice(0, a), "val": slice(a, a + b), "test": slice(a + b, None)}[name]

    def part(self, name: str):
        s = self._range(name)
        return self.inputs[s], self.labels[s]

    def tag(self, name: str, part: str | None = None) -> np.ndarray:
        col = self.metadata["tag_names"].index(name)
        values = self.tags[:, col]
        return values if part is None else values[self._range(part)]

    def __len__(self):
        return len(self.inputs)


class MinMaxScaler:
    """Global affine map of a tensor's range onto [0, 1]."""

    def __init__(self, lo: float, hi: float, fitted_on: str = ""):
        if not hi > lo:
            raise DegenerateRange(f"cannot scale a constant range [{lo}, {hi}]")
        self.min = float(lo)
        self.max = float(hi)
        self.fitted_on = fitted_on

    @classmethod
    def fit(cls, x: np.ndarray, fitted_on: str = "") -> "MinMaxScaler":
        return cls(float(np.min(x)), float(np.max(x)), fitted_on)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.min) / (self.max - self.min)).astype(np.asarray(x).dtype)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * (self.max - self.min) + self.min

    def __repr__(self):
        return f"MinMaxScaler(min={self.min:.6g}, max={self.max:.6g})"


def fit_scaler(ds: Dataset) -> tuple[MinMaxScaler, MinMaxScaler]:
    x, y = ds.part("train")
    tag = str(ds.metadata.get("dataset_id", ""))
    return MinMaxScaler.fit(x, tag), MinMaxScaler.fit(y, tag)


def _db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def _draw_snr(gen, grid, size) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return grid[gen.integers(0, len(grid), size=size)]


def _pilots(scheme: PilotScheme, h_si, h_ue, snr_si, snr_ue, gen) -> np.ndarray:
    y = np.sqrt(snr_si)[:, None, None] * (h_si @ scheme.w_si)
    y = y + np.sqrt(snr_ue)[:, None, None] * (h_ue @ scheme.w_ue)
    return y + sample_cn(gen, y.shape)


def pilot_observations(
    cfg: SystemConfig,
    scheme: PilotScheme,
    target: str,
    snr_si_db,
    snr_ue_db,
    gen,
    *,
    bits: int | None = None,
    one_bit_sign: bool = False,
    cancellation: bool = True,
    cov: CovarianceModel | None = None,
):
    """Draw normalized channels and the correlated pilot block seen by an estimator.

    ``snr_si_db`` / ``snr_ue_db`` are per-sample arrays. For the UE target,
    the SI contribution is first removed with an MMSE SI estimate when
    ``cancellation`` is on and the scheme shares slots.

    Returns ``(y_corr, h_true, channels)``.
    """
    n = len(snr_si_db)
    ch = gen_realization(cfg, gen, size=n).normalized()
    s_si, s_ue = _db2lin(snr_si_db), _db2lin(snr_ue_db)
    y = _pilots(scheme, ch.h_si, ch.h_ue, s_si, s_ue, gen)
    if bits is not None:
        y, _ = agc_quantize(y, QuantizerSpec(bits), sign=one_bit_sign and bits == 1)
    if target == "SI":
        return correlate(y, scheme.w_si), ch.h_si, ch
    if cancellation and scheme.kind is not SchemeKind.ORTHOGONAL:
        if cov is None:
            cov = estimate_covariances(cfg, gen)
        for key in np.unique(np.stack([s_si, s_ue], axis=1), axis=0):
            sel = (s_si == key[0]) & (s_ue == key[1])
            g = mmse_si_filter(scheme, cov, key[0], key[1])
            h_hat = apply_filter(g, y[sel], cfg.n_rx, cfg.n_tx)
            y[sel] = y[sel] - np.sqrt(key[0]) * (h_hat @ scheme.w_si)
    return correlate(y, scheme.w_ue), ch.h_ue, ch


def make_dataset(
    cfg: SystemConfig,
    scheme: PilotScheme | None,
    target: str,
    size: int,
    snr_grid_db,
    rng,
    *,
    fixed_snr_db: float = 0.0,
    split: tuple | None = None,
    bits: int | None = None,
    one_bit_sign: bool = False,
    cancellation: bool = True,
    cov: CovarianceModel | None = None,
    spreads_deg=None,
) -> Dataset:
    """Build a supervised dataset for one estimation target.

    ``target`` is ``"SI"``, ``"UE"`` or ``"RXTX"``. For SI/UE the swept
    SNR belongs to the target and the other link stays at
    ``fixed_snr_db``; inputs are correlated pilot blocks and labels the
    normalized true channels. For RXTX the inputs are downlink channels at
    the RX array and the labels the same UE's channel at the TX array,
    both divided by the RX channel norm; ``spreads_deg`` mixes several
    angular spreads into one pool.
    """
    target = target.upper()
    gen = as_generator(rng)
    split = default_split(size) if split is None else tuple(split)
    meta = {
        "target": target,
        "size": int(size),
        "snr_grid_db": [float(s) for s in np.atleast_1d(snr_grid_db)],
        "fixed_snr_db": float(fixed_snr_db),
        "n_tx": cfg.n_tx,
        "n_rx": cfg.n_rx,
        "k_total": cfg.k_total,
        "angular_spread_deg": cfg.angular_spread_deg,
        "kappa_db": cfg.rician_kappa_db,
        "bits": bits,
        "source": "synthetic",
    }
    if target == "RXTX":
        spreads = np.atleast_1d(cfg.angular_spread_deg if spreads_deg is None else spreads_deg)
        spread = spreads[gen.integers(0, len(spreads), size=size)].astype(float)
        h_rx = np.empty((size, cfg.n_rx), complex)
        h_tx = np.empty((size, cfg.n_tx), complex)
        for s in np.unique(spread):
            sel = spread == s
            h_rx[sel], h_tx[sel] = gen_rx_tx_pair(cfg.with_(angular_spread_deg=float(s)), gen, int(sel.sum()))
        norm = np.linalg.norm(h_rx, axis=-1, keepdims=True)
        meta.update(scheme=None, spreads_deg=[float(s) for s in spreads], tag_names=["spread_deg"])
        return Dataset(stack_vector(h_rx / norm), stack_vector(h_tx / norm), split, meta,
                       spread[:, None].astype(np.float32))

    snr = _draw_snr(gen, snr_grid_db, size)
    fixed = np.full(size, float(fixed_snr_db))
    snr_si, snr_ue = (snr, fixed) if target == "SI" else (fixed, snr)
    y_corr, h, _ = pilot_observations(
        cfg, scheme, target, snr_si, snr_ue, gen,
        bits=bits, one_bit_sign=one_bit_sign, cancellation=cancellation, cov=cov,
    )
    meta.update(scheme=scheme.kind.value, tau=scheme.tau, tag_names=["snr_db"])
    return Dataset(stack_complex(y_corr), stack_complex(h), split, meta, snr[:, None].astype(np.float32))
