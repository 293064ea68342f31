"""SI and UE channel generation for a full-duplex BS with separate ULAs.

Generators take a ``size`` argument in the numpy style: ``None`` returns a
single realization, an int prepends a batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidGeometry
from .numerics import as_generator, sample_cn

SPEED_OF_LIGHT = 299_792_458.0


def db2lin(x_db: float) -> float:
    return float(10.0 ** (np.asarray(x_db, dtype=float) / 10.0))


@dataclass(frozen=True)
class SystemConfig:
    """Physical and system parameters of the full-duplex link.

    Counts follow the usual notation: ``n_tx`` transmit and ``n_rx`` receive
    antennas, ``k_uplink + k_downlink`` single-antenna UEs, ``n_paths``
    scattering paths per channel.

    ``nominal_angle_deg`` is the centre of every UE's angular sector. With
    ``random_nominal_angle`` each UE instead gets a centre drawn uniformly
    from [-90, 90] degrees per realization.

    ``si_farfield_gain_db`` is the large-scale gain of the reflected SI
    component, relative to the unit-power near-field term.
    ``si_shared_angles`` reuses the AoA as AoD for every far-field SI path
    instead of drawing them independently.
    """

    n_tx: int = 16
    n_rx: int = 16
    k_uplink: int = 4
    k_downlink: int = 4
    n_paths: int = 5
    angular_spread_deg: float = 60.0
    nominal_angle_deg: float = 0.0
    random_nominal_angle: bool = False
    carrier_hz: float = 28e9
    antenna_spacing: float = 0.5
    array_separation: float = 10.0
    rician_kappa_db: float = 40.0
    si_suppression_db: float = -40.0
    pathloss_ref_db: float = -72.0
    pathloss_exp: float = 2.92
    shadow_std_db: float = 8.7
    ue_area_m2: float = 20.0
    ue_standoff_m: float = 10.0
    si_farfield_gain_db: float = 0.0
    si_shared_angles: bool = False

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "k_uplink", "k_downlink", "n_paths"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.carrier_hz <= 0:
            raise ValueError("carrier_hz must be positive")

    @property
    def k_total(self) -> int:
        return self.k_uplink + self.k_downlink

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def kappa(self) -> float:
        return db2lin(self.rician_kappa_db)

    @property
    def eps_si(self) -> float:
        return db2lin(self.si_suppression_db)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass
class ChannelRealization:
    """One (or a batch of) draws of the SI and UE channels.

    ``h_ue`` holds uplink UEs first, then downlink UEs. ``h_ue_tx`` holds
    the transmit-array channels of the downlink UEs, built from the same
    paths as the last ``k_downlink`` columns of ``h_ue``.
    """

    h_si: np.ndarray
    h_ue: np.ndarray
    h_ue_tx: np.ndarray
    path_metadata: dict = field(default_factory=dict)

    def normalized(self) -> "ChannelRealization":
        """Scale to unit average element power.

        SI is scaled per realization so ``||H_SI||_F^2 = N_r N_t``; every UE
        column so ``||h_k||^2 = N_r``. The TX-side channel of a downlink UE
        shares its RX column's factor, keeping the RX/TX relation intact.
        The removed factors are kept in ``path_metadata``.
        """
        n_rx, n_tx = self.h_si.shape[-2:]
        si_pow = np.sum(np.abs(self.h_si) ** 2, axis=(-2, -1), keepdims=True)
        si_scale = np.sqrt(n_rx * n_tx / si_pow)
        ue_pow = np.sum(np.abs(self.h_ue) ** 2, axis=-2, keepdims=True)
        ue_scale = np.sqrt(n_rx / ue_pow)
        k_d = self.h_ue_tx.shape[-1]
        meta = dict(self.path_metadata)
        meta["si_scale"] = np.squeeze(si_scale, axis=(-2, -1))
        meta["ue_scale"] = np.squeeze(ue_scale, axis=-2)
        return ChannelRealization(
            h_si=self.h_si * si_scale,
            h_ue=self.h_ue * ue_scale,
            h_ue_tx=self.h_ue_tx * ue_scale[..., ue_scale.shape[-1] - k_d:],
            path_metadata=meta,
        )


def steering_vector(theta_rad, n: int, spacing_wl: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response; ``theta_rad`` may be an array (output gains a trailing axis of length ``n``)."""
    theta = np.asarray(theta_rad, dtype=float)
    m = np.arange(n)
    phase = 2.0 * np.pi * spacing_wl * np.sin(theta)[..., None] * m
    return np.exp(1j * phase) / np.sqrt(n)


def large_scale_fading(r_m, cfg: SystemConfig, rng) -> np.ndarray | float:
    """Linear power gain of path loss plus log-normal shadowing.

    Shadowing is Gaussian in dB with standard deviation ``cfg.shadow_std_db``.
    """
    r = np.asarray(r_m, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    gen = as_generator(rng)
    chi = gen.normal(0.0, cfg.shadow_std_db, size=r.shape) if cfg.shadow_std_db > 0 else 0.0
    beta_db = cfg.pathloss_ref_db - 10.0 * cfg.pathloss_exp * np.log10(r) + chi
    out = 10.0 ** (beta_db / 10.0)
    return float(out) if out.ndim == 0 else out


def sample_ue_distances(cfg: SystemConfig, rng, shape) -> np.ndarray:
    """UE-to-BS distances for UEs uniform in a square of area ``ue_area_m2``.

    The square's near edge sits ``ue_standoff_m`` in front of the BS and it
    is centred on the array broadside.
    """
    gen = as_generator(rng)
    side = np.sqrt(cfg.ue_area_m2)
    x = cfg.ue_standoff_m + side * gen.random(shape)
    y = side * (gen.random(shape) - 0.5)
    return np.hypot(x, y)


def _path_angles(cfg: SystemConfig, gen, shape, centre=0.0) -> np.ndarray:
    half = np.deg2rad(cfg.angular_spread_deg) / 2.0
    return centre + gen.uniform(-half, half, size=shape)


def _ue_centres(cfg: SystemConfig, gen, shape) -> np.ndarray:
    if cfg.random_nominal_angle:
        return gen.uniform(-np.pi / 2, np.pi / 2, size=shape)
    return np.full(shape, np.deg2rad(cfg.nominal_angle_deg))


def gen_ue_channels(cfg: SystemConfig, rng, size=None):
    """Geometric multipath channels from all K UEs to the RX array.

    Returns
    -------
    h_ue : ndarray, shape ``(..., N_r, K)``
    meta : dict
        ``alpha`` (..., K, P), ``theta`` (..., K, P) in radians and
        ``beta`` (..., K) linear large-scale gains.
    """
    gen = as_generator(rng)
    batch = () if size is None else (size,)
    k, p = cfg.k_total, cfg.n_paths
    centres = _ue_centres(cfg, gen, batch + (k,))
    theta = _path_angles(cfg, gen, batch + (k, p), centres[..., None])
    alpha = sample_cn(gen, (k, p), size=size)
    dist = sample_ue_distances(cfg, gen, batch + (k,))
    beta = np.asarray(large_scale_fading(dist, cfg, gen))
    a = steering_vector(theta, cfg.n_rx, cfg.antenna_spacing)  # (..., K, P, N_r)
    cols = np.einsum("...kp,...kpn->...nk", alpha, a)
    h = np.sqrt(cfg.n_rx / p) * np.sqrt(beta)[..., None, :] * cols
    return h, {"alpha": alpha, "theta": theta, "beta": beta, "distance": dist}


def _tx_delay(theta, cfg: SystemConfig) -> np.ndarray:
    return np.exp(-2j * np.pi * cfg.array_separation * np.cos(theta))


def ue_tx_channels(cfg: SystemConfig, meta: dict, scale: str = "geometric") -> np.ndarray:
    """TX-array channels of the downlink UEs from their RX-side path draws.

    ``scale="geometric"`` uses the ``sqrt(N_t / P)`` normalization of the
    UE channel model; ``scale="mapping"`` uses ``sqrt(1 / N_t)``.
    """
    kd = cfg.k_downlink
    alpha = meta["alpha"][..., -kd:, :]
    theta = meta["theta"][..., -kd:, :]
    beta = meta["beta"][..., -kd:]
    a = steering_vector(theta, cfg.n_tx, cfg.antenna_spacing)
    cols = np.einsum("...kp,...kpn->...nk", alpha * _tx_delay(theta, cfg), a)
    pre = np.sqrt(cfg.n_tx / cfg.n_paths) if scale == "geometric" else np.sqrt(1.0 / cfg.n_tx)
    return pre * np.sqrt(beta)[..., None, :] * cols


def gen_si_farfield(cfg: SystemConfig, rng, size=None) -> np.ndarray:
    """Reflected (far-field) SI component, shape ``(..., N_r, N_t)``."""
    gen = as_generator(rng)
    batch = () if size is None else (size,)
    p = cfg.n_paths
    aoa = _path_angles(cfg, gen, batch + (p,))
    aod = aoa if cfg.si_shared_angles else _path_angles(cfg, gen, batch + (p,))
    alpha = sample_cn(gen, p, size=size)
    a_rx = steering_vector(aoa, cfg.n_rx, cfg.antenna_spacing)
    a_tx = steering_vector(aod, cfg.n_tx, cfg.antenna_spacing)
    beta = db2lin(cfg.si_farfield_gain_db)
    h = np.einsum("...p,...pn,...pm->...nm", alpha, a_rx, a_tx)
    return np.sqrt(cfg.n_tx * cfg.n_rx / p) * np.sqrt(beta) * h


def array_distances(cfg: SystemConfig) -> np.ndarray:
    """Element distances ``r[n, m]`` (metres) between RX element n and TX element m.

    Both ULAs lie on one axis: TX element m at ``m d`` and RX element n at
    ``l + n d`` (in wavelengths), so the first elements are ``l`` apart.
    """
    lam = cfg.wavelength_m
    tx = np.arange(cfg.n_tx) * cfg.antenna_spacing
    rx = cfg.array_separation + np.arange(cfg.n_rx) * cfg.antenna_spacing
    return np.abs(rx[:, None] - tx[None, :]) * lam


def gen_si_nearfield(cfg: SystemConfig) -> np.ndarray:
    """Deterministic near-field SI term normalized to ``||H||_F^2 = N_r N_t``."""
    r = array_distances(cfg)
    if np.any(r <= 0):
        raise InvalidGeometry("coincident RX and TX elements")
    h = np.exp(-2j * np.pi * r / cfg.wavelength_m) / r
    rho = np.sqrt(cfg.n_rx * cfg.n_tx / np.sum(np.abs(h) ** 2))
    return rho * h


def si_mixing_weights(cfg: SystemConfig) -> tuple[float, float]:
    """Amplitude weights (near-field, far-field) of the Rician SI mix."""
    if np.isinf(cfg.rician_kappa_db) and cfg.rician_kappa_db > 0:
        return float(np.sqrt(cfg.eps_si)), 0.0
    kappa = cfg.kappa
    return float(np.sqrt(cfg.eps_si * kappa / (kappa + 1.0))), float(np.sqrt(1.0 / (kappa + 1.0)))


def gen_si_channel(cfg: SystemConfig, rng, size=None) -> np.ndarray:
    w_nf, w_ff = si_mixing_weights(cfg)
    h_ff = gen_si_farfield(cfg, rng, size)
    return w_nf * gen_si_nearfield(cfg) + w_ff * h_ff


def gen_rx_tx_pair(cfg: SystemConfig, rng, size=None):
    """Channel of one downlink UE at the RX array and at the TX array.

    Both share the path gains, angles and large-scale gain; the TX side
    adds the per-path delay from the array separation.

    Returns
    -------
    h_rx : ndarray ``(..., N_r)``
    h_tx : ndarray ``(..., N_t)``
    """
    gen = as_generator(rng)
    batch = () if size is None else (size,)
    p = cfg.n_paths
    centre = _ue_centres(cfg, gen, batch + (1,))
    theta = _path_angles(cfg, gen, batch + (p,), centre)
    alpha = sample_cn(gen, p, size=size)
    beta = np.asarray(large_scale_fading(sample_ue_distances(cfg, gen, batch), cfg, gen))
    a_rx = steering_vector(theta, cfg.n_rx, cfg.antenna_spacing)
    a_tx = steering_vector(theta, cfg.n_tx, cfg.antenna_spacing)
    sb = np.sqrt(beta)[..., None]
    h_rx = np.sqrt(1.0 / cfg.n_rx) * sb * np.einsum("...p,...pn->...n", alpha, a_rx)
    h_tx = np.sqrt(1.0 / cfg.n_tx) * sb * np.einsum(
        "...p,...pn->...n", alpha * _tx_delay(theta, cfg), a_tx
    )
    return h_rx, h_tx


def gen_realization(cfg: SystemConfig, rng, size=None) -> ChannelRealization:
    """Draw SI, UE and downlink TX-side channels together (unnormalized)."""
    gen = as_generator(rng)
    h_si = gen_si_channel(cfg, gen, size)
    h_ue, meta = gen_ue_channels(cfg, gen, size)
    h_tx = ue_tx_channels(cfg, meta)
    return ChannelRealization(h_si=h_si, h_ue=h_ue, h_ue_tx=h_tx, path_metadata=meta)
