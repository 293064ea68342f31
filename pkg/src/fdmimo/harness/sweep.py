"""Monte Carlo sweeps over SNR, angular spread, Rician factor, ADC
resolution and SI cancellation."""

from __future__ import annotations

import itertools
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..channel import SystemConfig, db2lin, gen_realization
from ..estimators import (
    CovarianceModel,
    apply_filter,
    estimate_covariances,
    ls_estimate,
    mmse_si_filter,
    mmse_ue_filter,
    si_error_covariance,
)
from ..nn.data import make_dataset
from ..nn.model import NetworkSpec
from ..nn.optim import AdamHyper
from ..nn.train import TrainedModel, TrainHyper, predict_channel, train
from ..numerics import RngStream
from ..pilots import PilotScheme, assemble_rx, build_scheme, correlate
from ..quantizer import QuantizerSpec, agc_quantize
from .config import ExperimentConfig, cnn_depth, default_threads
from .metrics import flops as count_flops
from .metrics import nmse

log = logging.getLogger(__name__)

# stream-id offsets keep covariance and training draws apart from trial draws
COV_STREAM = 1 << 40
TRAIN_STREAM = 1 << 41
CHUNK = 2000


@dataclass(frozen=True)
class ResultRecord:
    snr_si_db: float
    snr_ue_db: float
    theta_as_deg: float
    kappa_db: float
    bits: int | None
    scheme: str
    method: str
    target: str
    cancellation: bool
    trials: int
    nmse_db: float
    flops: int
    seed: int
    # not emitted: vary between runs or are derived
    nmse_sem: float = field(default=float("nan"), compare=False)
    wall_time: float = field(default=0.0, compare=False)

    @property
    def nmse(self) -> float:
        return 10.0 ** (self.nmse_db / 10.0)

    def sort_key(self):
        return (self.target, self.method, self.theta_as_deg, self.kappa_db,
                -1 if self.bits is None else self.bits, not self.cancellation,
                self.snr_si_db, self.snr_ue_db)


@dataclass(frozen=True)
class GridPoint:
    index: int
    snr_si_db: float
    snr_ue_db: float
    theta_as_deg: float
    kappa_db: float
    bits: int | None
    cancellation: bool


def grid_points(cfg: ExperimentConfig) -> list[GridPoint]:
    axes = itertools.product(cfg.theta_as_grid_deg, cfg.kappa_grid_db, cfg.bits, cfg.cancellation,
                             cfg.snr_si_grid_db, cfg.snr_ue_grid_db)
    return [GridPoint(i, s_si, s_ue, th, ka, b, c) for i, (th, ka, b, c, s_si, s_ue) in enumerate(axes)]


def point_system(cfg: ExperimentConfig, theta: float, kappa: float) -> SystemConfig:
    return cfg.system.with_(angular_spread_deg=theta, rician_kappa_db=kappa)


class CovarianceCache:
    """Empirical covariances keyed by (system config, realizations, seed)."""

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()

    def get(self, system: SystemConfig, m: int, seed: int, stream_id: int) -> CovarianceModel:
        key = (system, m, seed, stream_id)
        with self._lock:
            if key not in self._store:
                self._store[key] = estimate_covariances(system, RngStream(seed, stream_id), m)
            return self._store[key]

    def __len__(self):
        return len(self._store)


class PointError(RuntimeError):
    pass


def _with_context(exc: Exception, point: GridPoint) -> Exception:
    msg = f"{exc} [at grid point {point}]"
    try:
        new = type(exc)(msg)
    except Exception:
        new = PointError(msg)
    return new


def _axis_pairs(cfg: ExperimentConfig):
    return list(itertools.product(cfg.theta_as_grid_deg, cfg.kappa_grid_db))


def _train_model(cfg, method, target, theta, kappa, bits, cancellation, cov, stream_id) -> TrainedModel:
    system = point_system(cfg, theta, kappa)
    scheme = build_scheme(cfg.scheme, system)
    t = cfg.training
    grid, fixed = ((cfg.snr_si_grid_db, cfg.snr_ue_grid_db[0]) if target == "SI"
                   else (cfg.snr_ue_grid_db, cfg.snr_si_grid_db[0]))
    ds = make_dataset(system, scheme, target, t.size, grid, RngStream(cfg.seed, stream_id),
                      fixed_snr_db=fixed, bits=bits, cancellation=cancellation, cov=cov)
    n_d = system.n_tx if target == "SI" else system.k_total
    spec = NetworkSpec.cnn(cnn_depth(method), system.n_rx, n_d, t.hidden_channels)
    hyper = TrainHyper(batch_size=t.batch_size, adam=AdamHyper(lr=t.lr), max_epochs=t.max_epochs,
                       patience=t.patience, seed=cfg.seed)
    log.info("training %s for %s (theta %s, kappa %s, bits %s)", method, target, theta, kappa, bits)
    return train(spec, ds, hyper)


def _model_key(method, target, theta, kappa, bits, cancellation):
    return (method, target, theta, kappa, bits, cancellation if target == "UE" else None)


def prepare_models(cfg: ExperimentConfig, covs: dict, models=None) -> dict:
    """Resolve every NN model the sweep needs: explicit objects, files, then inline training.

    ``models`` maps ``(method, target)`` to a :class:`TrainedModel`. Inline
    training runs serially, one model per (method, target, θ, κ, bits,
    cancellation).
    """
    from .io import load_model

    resolved = {}
    nn_methods = [m for m in cfg.estimators if m.startswith("CNN")]
    k = 0
    for method, target in itertools.product(nn_methods, cfg.targets):
        given = (models or {}).get((method, target))
        path = cfg.models.get(method, {}).get(target) if isinstance(cfg.models.get(method), dict) else None
        if given is None and path is not None:
            given = load_model(path)
        for (theta, kappa), bits, canc in itertools.product(_axis_pairs(cfg), cfg.bits, cfg.cancellation):
            key = _model_key(method, target, theta, kappa, bits, canc)
            if key in resolved:
                continue
            if given is not None:
                resolved[key] = given
            else:
                resolved[key] = _train_model(cfg, method, target, theta, kappa, bits, canc,
                                             covs[(theta, kappa)], TRAIN_STREAM + k)
                k += 1
    return resolved


class _Accumulator:
    def __init__(self):
        self.ratios: dict = {}

    def add(self, key, h_true, h_est):
        self.ratios.setdefault(key, []).append(np.atleast_1d(nmse(h_true, h_est)))

    def result(self, key):
        r = np.concatenate(self.ratios[key])
        sem = float(r.std(ddof=1) / np.sqrt(len(r))) if len(r) > 1 else float("nan")
        return float(r.mean()), sem


def _estimate_si(method, y, scheme: PilotScheme, cov, s_si, s_ue, model, n_rx, n_tx, g_cache):
    if method == "LS":
        return ls_estimate(correlate(y, scheme.w_si), scheme.tau_si, s_si)
    if method == "MMSE":
        if "si" not in g_cache:
            g_cache["si"] = mmse_si_filter(scheme, cov, s_si, s_ue)
        return apply_filter(g_cache["si"], y, n_rx, n_tx)
    return predict_channel(model, correlate(y, scheme.w_si))


def _estimate_ue(method, y, scheme: PilotScheme, cov, r_e, s_si, s_ue, model, n_rx, k, g_cache):
    if method == "LS":
        return ls_estimate(correlate(y, scheme.w_ue), scheme.tau_ue, s_ue)
    if method == "MMSE":
        if "ue" not in g_cache:
            g_cache["ue"] = mmse_ue_filter(scheme, cov, r_e, s_si, s_ue)
        return apply_filter(g_cache["ue"], y, n_rx, k)
    return predict_channel(model, correlate(y, scheme.w_ue))


def evaluate_point(cfg: ExperimentConfig, point: GridPoint, cov: CovarianceModel, models: dict) -> list[ResultRecord]:
    start = time.perf_counter()
    system = point_system(cfg, point.theta_as_deg, point.kappa_db)
    scheme = build_scheme(cfg.scheme, system)
    s_si, s_ue = db2lin(point.snr_si_db), db2lin(point.snr_ue_db)
    n_rx, n_tx, k = system.n_rx, system.n_tx, system.k_total
    gen = RngStream(cfg.seed, point.index).generator()
    acc = _Accumulator()
    g_cache: dict = {}
    r_e = None
    if "UE" in cfg.targets:
        r_e = si_error_covariance(scheme, cov, s_si, s_ue) if point.cancellation else cov.r_si

    def model_for(method, target):
        if not method.startswith("CNN"):
            return None
        return models[_model_key(method, target, point.theta_as_deg, point.kappa_db, point.bits,
                                 point.cancellation)]

    done = 0
    while done < cfg.trials:
        n = min(CHUNK, cfg.trials - done)
        ch = gen_realization(system, gen, size=n).normalized()
        y = assemble_rx(scheme, ch, s_si, s_ue, gen, noise=cfg.noise).y
        if point.bits is not None:
            y, _ = agc_quantize(y, QuantizerSpec(point.bits))
        if "SI" in cfg.targets:
            for method in cfg.estimators:
                h = _estimate_si(method, y, scheme, cov, s_si, s_ue, model_for(method, "SI"), n_rx, n_tx, g_cache)
                acc.add((method, "SI"), ch.h_si, h)
        if "UE" in cfg.targets:
            y_ue = y
            if point.cancellation:
                h_si = _estimate_si("MMSE", y, scheme, cov, s_si, s_ue, None, n_rx, n_tx, g_cache)
                y_ue = y - np.sqrt(s_si) * (h_si @ scheme.w_si)
            for method in cfg.estimators:
                h = _estimate_ue(method, y_ue, scheme, cov, r_e, s_si, s_ue, model_for(method, "UE"),
                                 n_rx, k, g_cache)
                acc.add((method, "UE"), ch.h_ue, h)
        done += n

    wall = time.perf_counter() - start
    dims = (n_rx, n_tx, k, scheme.tau)
    records = []
    for target in cfg.targets:
        for method in cfg.estimators:
            mean, sem = acc.result((method, target))
            model = model_for(method, target)
            records.append(ResultRecord(
                snr_si_db=point.snr_si_db, snr_ue_db=point.snr_ue_db,
                theta_as_deg=point.theta_as_deg, kappa_db=point.kappa_db, bits=point.bits,
                scheme=scheme.kind.value, method=method, target=target,
                cancellation=point.cancellation, trials=cfg.trials,
                nmse_db=float(10.0 * np.log10(mean)),
                flops=count_flops(method, target, dims, model.spec if model is not None else None),
                seed=cfg.seed, nmse_sem=sem, wall_time=wall,
            ))
    return records


def prepare_covariances(cfg: ExperimentConfig, cache: CovarianceCache | None = None) -> dict:
    cache = cache if cache is not None else CovarianceCache()
    return {
        (theta, kappa): cache.get(point_system(cfg, theta, kappa), cfg.cov_realizations, cfg.seed, COV_STREAM + i)
        for i, (theta, kappa) in enumerate(_axis_pairs(cfg))
    }


def run_sweep(
    cfg: ExperimentConfig,
    threads: int | None = None,
    models: dict | None = None,
    cache: CovarianceCache | None = None,
) -> list[ResultRecord]:
    """Evaluate every grid point; records come back sorted by axes.

    Each point draws from its own stream ``RngStream(seed, point index)``,
    so the output does not depend on ``threads`` or scheduling order.
    """
    covs = prepare_covariances(cfg, cache)
    resolved = prepare_models(cfg, covs, models)
    points = grid_points(cfg)

    def work(point):
        try:
            return evaluate_point(cfg, point, covs[(point.theta_as_deg, point.kappa_db)], resolved)
        except Exception as e:
            raise _with_context(e, point) from e

    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1:
        chunks = [work(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, points))
    records = [r for chunk in chunks for r in chunk]
    return sorted(records, key=ResultRecord.sort_key)
