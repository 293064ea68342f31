import itertools

import numpy as np
import pytest
from scipy.linalg import sqrtm

from fdmimo.channel import SystemConfig
from fdmimo.errors import ShapeMismatch
from fdmimo.estimators import (
    CovarianceModel,
    empirical_covariance,
    estimate_covariances,
    ls_estimate,
    mmse_orthogonal,
    mmse_si,
    mmse_ue,
    si_error_covariance,
)
from fdmimo.numerics import RngStream, unvec
from fdmimo.pilots import ReceivedPilot, build_scheme, correlate, dft_codebook
from oracles import conditional_mean, error_covariance, observation_map, random_psd


def small_configs(limit=16):
    for n_rx, n_tx, k_ul, k_dl, kind in itertools.product(
        (1, 2), (1, 2, 3, 4), (1, 2), (1,), ("orthogonal", "shared_nt", "shared_k")
    ):
        cfg = SystemConfig(n_tx=n_tx, n_rx=n_rx, k_uplink=k_ul, k_downlink=k_dl)
        s = build_scheme(kind, cfg)
        if n_rx * s.tau <= limit:
            yield cfg, s


def random_problem(cfg, gen):
    r_si = random_psd(gen, cfg.n_rx * cfg.n_tx, rank=max(1, cfg.n_rx * cfg.n_tx - 1))
    r_ue = random_psd(gen, cfg.n_rx * cfg.k_total)
    return CovarianceModel(r_si, r_ue, 0)


def crandn(gen, *shape):
    return gen.standard_normal(shape) + 1j * gen.standard_normal(shape)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_brute_force_oracle_covers_many_configs():
    assert len(list(small_configs())) >= 20


@pytest.mark.parametrize("cfg,scheme", list(small_configs()), ids=lambda v: getattr(v, "kind", ""))
def test_mmse_si_and_ue_match_oracle(cfg, scheme):
    gen = np.random.default_rng(cfg.n_tx * 100 + cfg.n_rx * 10 + scheme.tau)
    cov = random_problem(cfg, gen)
    s_si, s_ue = 3.7, 0.6
    y = crandn(gen, cfg.n_rx, scheme.tau)
    a_si, a_ue = observation_map(scheme.w_si, cfg.n_rx), observation_map(scheme.w_ue, cfg.n_rx)
    blocks = [(np.sqrt(s_si), a_si, cov.r_si), (np.sqrt(s_ue), a_ue, cov.r_ue)]
    y_vec = y.reshape(-1, order="F")

    h_si = mmse_si(ReceivedPilot(y, s_si, s_ue), scheme, cov)
    ref = conditional_mean(blocks, 0, y_vec).reshape(cfg.n_rx, cfg.n_tx, order="F")
    assert rel(h_si, ref) <= 1e-8

    r_e = si_error_covariance(scheme, cov, s_si, s_ue)
    assert rel(r_e, error_covariance(blocks, 0)) <= 1e-8

    # UE estimate treats the residual SI as independent noise of covariance R_E
    ue_blocks = [(np.sqrt(s_ue), a_ue, cov.r_ue), (np.sqrt(s_si), a_si, r_e)]
    h_ue = mmse_ue(ReceivedPilot(y, s_si, s_ue), scheme, cov, r_e)
    ref_ue = conditional_mean(ue_blocks, 0, y_vec).reshape(cfg.n_rx, cfg.k_total, order="F")
    assert rel(h_ue, ref_ue) <= 1e-8


def test_mmse_scalar_textbook():
    cfg = SystemConfig(n_tx=1, n_rx=1, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    sigma2, snr = 2.5, 3.0
    cov = CovarianceModel(np.array([[sigma2]]), np.eye(2), 0)
    y = np.array([[0.7 - 0.2j, 5.0 + 1j, -3.0]])
    h = mmse_si(ReceivedPilot(y, snr, 1.0), s, cov)
    expected = np.sqrt(snr) * sigma2 * y[0, 0] / (snr * sigma2 + 1)
    assert h[0, 0] == pytest.approx(expected, rel=1e-12)


def test_mmse_si_tends_to_ls_at_high_snr():
    cfg = SystemConfig(n_tx=3, n_rx=2, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    gen = np.random.default_rng(3)
    cov = CovarianceModel(random_psd(gen, 6), random_psd(gen, 4), 0)
    snr = 1e6
    y = crandn(gen, 2, s.tau) * 1e3
    h_ls = ls_estimate(correlate(y, s.w_si), s.tau_si, snr)
    h_mmse = mmse_si(ReceivedPilot(y, snr, 1.0), s, cov)
    assert rel(h_mmse, h_ls) <= 1e-3


def test_error_covariance_limits_and_monotone():
    cfg = SystemConfig(n_tx=3, n_rx=2, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    gen = np.random.default_rng(4)
    cov = CovarianceModel(random_psd(gen, 6), random_psd(gen, 4), 0)
    np.testing.assert_allclose(si_error_covariance(s, cov, 1e-12, 1.0), cov.r_si, atol=1e-9)
    r_hi = si_error_covariance(s, cov, 1e6, 1.0)
    assert np.trace(r_hi).real <= 1e-3 * np.trace(cov.r_si).real
    traces = [np.trace(si_error_covariance(s, cov, 10 ** (d / 10), 1.0)).real for d in range(-20, 41, 5)]
    assert all(b <= a + 1e-12 for a, b in zip(traces, traces[1:]))
    np.testing.assert_allclose(r_hi, r_hi.conj().T, atol=1e-12)


def test_error_covariance_matches_monte_carlo():
    cfg = SystemConfig(n_tx=4, n_rx=2, k_uplink=1, k_downlink=1)
    s = build_scheme("shared_nt", cfg)
    gen = np.random.default_rng(5)
    cov = CovarianceModel(random_psd(gen, 8, rank=3), random_psd(gen, 4, rank=2), 0)
    s_si, s_ue, n = 4.0, 2.0, 10_000
    l_si, l_ue = sqrtm(cov.r_si), sqrtm(cov.r_ue)
    h_si = unvec(crandn(gen, n, 8) / np.sqrt(2) @ l_si.T, 2, 4)
    h_ue = unvec(crandn(gen, n, 4) / np.sqrt(2) @ l_ue.T, 2, 2)
    y = np.sqrt(s_si) * h_si @ s.w_si + np.sqrt(s_ue) * h_ue @ s.w_ue + crandn(gen, n, 2, 4) / np.sqrt(2)
    h_hat = mmse_si(ReceivedPilot(y, s_si, s_ue), s, cov)
    mc = np.mean(np.sum(np.abs(h_si - h_hat) ** 2, axis=(-2, -1)))
    assert np.trace(si_error_covariance(s, cov, s_si, s_ue)).real == pytest.approx(mc, rel=0.03)


def test_mmse_ue_vanishing_interference():
    cfg = SystemConfig(n_tx=2, n_rx=2, k_uplink=1, k_downlink=1)
    s = build_scheme("shared_nt", cfg)
    gen = np.random.default_rng(6)
    cov = CovarianceModel(random_psd(gen, 4), random_psd(gen, 4), 0)
    y = crandn(gen, 2, 2)
    a = mmse_ue(ReceivedPilot(y, 1e-14, 2.0), s, cov, cov.r_si)
    b = mmse_ue(ReceivedPilot(y, 1e-14, 2.0), s, cov, np.zeros_like(cov.r_si))
    assert np.max(np.abs(a - b)) <= 1e-10


def test_mmse_ue_perfect_cancellation_orthogonal():
    cfg = SystemConfig(n_tx=1, n_rx=2, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    gen = np.random.default_rng(7)
    cov = CovarianceModel(random_psd(gen, 2), random_psd(gen, 4), 0)
    y = crandn(gen, 2, s.tau)
    h = mmse_ue(ReceivedPilot(y, 5.0, 2.0), s, cov, np.zeros((2, 2)))
    a = observation_map(s.w_ue, 2)
    ref = conditional_mean([(np.sqrt(2.0), a, cov.r_ue)], 0, y.reshape(-1, order="F"))
    assert rel(h, ref.reshape(2, 2, order="F")) <= 1e-8


def test_covariance_dimension_checks():
    cfg = SystemConfig(n_tx=2, n_rx=2, k_uplink=1, k_downlink=1)
    s = build_scheme("shared_nt", cfg)
    with pytest.raises(ShapeMismatch):
        mmse_si(ReceivedPilot(np.zeros((2, 2)), 1.0, 1.0), s, CovarianceModel(np.eye(4), np.eye(6), 0))


def test_ls_noiseless_unbiased():
    cfg = SystemConfig(n_tx=4, n_rx=3, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    gen = np.random.default_rng(8)
    h_si, h_ue = crandn(gen, 3, 4), crandn(gen, 3, 2)
    y = 3.0 * h_si @ s.w_si + 2.0 * h_ue @ s.w_ue
    np.testing.assert_allclose(ls_estimate(correlate(y, s.w_si), s.tau_si, 9.0), h_si, atol=1e-12)
    np.testing.assert_allclose(ls_estimate(correlate(y, s.w_ue), s.tau_ue, 4.0), h_ue, atol=1e-12)
    with pytest.raises(ValueError):
        ls_estimate(y, 4, 0.0)


def test_ls_noise_power():
    n_rx, n_t, tau, snr = 4, 4, 8, 2.0
    w = dft_codebook(n_t, tau)
    gen = np.random.default_rng(9)
    noise = crandn(gen, 10_000, n_rx, tau) / np.sqrt(2)
    h = ls_estimate(correlate(noise, w), tau, snr)
    power = np.mean(np.sum(np.abs(h) ** 2, axis=(-2, -1)))
    assert power == pytest.approx(n_rx * n_t / (tau * snr), rel=0.03)


def test_ls_shared_nt_leakage():
    # SharedNt with N_t = 4, K = 2: UE rows equal the first SI rows, so the
    # noiseless LS SI estimate picks up sqrt(snr_ue / snr_si) h_ue on those columns
    cfg = SystemConfig(n_tx=4, n_rx=2, k_uplink=1, k_downlink=1)
    s = build_scheme("shared_nt", cfg)
    gen = np.random.default_rng(10)
    h_si, h_ue = crandn(gen, 2, 4), crandn(gen, 2, 2)
    s_si, s_ue = 4.0, 9.0
    y = np.sqrt(s_si) * h_si @ s.w_si + np.sqrt(s_ue) * h_ue @ s.w_ue
    bias = ls_estimate(correlate(y, s.w_si), s.tau_si, s_si) - h_si
    expected = np.zeros_like(h_si)
    expected[:, :2] = np.sqrt(s_ue / s_si) * h_ue
    np.testing.assert_allclose(bias, expected, atol=1e-12)


def test_empirical_covariance():
    h = np.array([[1 + 1j, 2], [0.5j, -1]])
    r = empirical_covariance([h, h, h])
    v = h.reshape(-1, order="F")
    np.testing.assert_allclose(r, np.outer(v, v.conj()))
    assert np.linalg.matrix_rank(r) == 1
    gen = np.random.default_rng(11)
    samples = crandn(gen, 100_000, 2, 2) / np.sqrt(2)
    r = empirical_covariance(samples)
    assert np.max(np.abs(r - np.eye(4))) <= 0.05
    assert np.array_equal(r, r.conj().T)
    with pytest.raises(ShapeMismatch):
        empirical_covariance([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(ValueError):
        empirical_covariance([h])


def test_estimated_covariances_are_psd():
    cov = estimate_covariances(SystemConfig(n_tx=4, n_rx=4, k_uplink=1, k_downlink=1), RngStream(12), 200)
    for r in (cov.r_si, cov.r_ue):
        assert np.max(np.abs(r - r.conj().T)) <= 1e-10
        ev = np.linalg.eigvalsh(r)
        assert ev.min() >= -1e-8 * np.trace(r).real / len(r)
    assert cov.n_realizations == 200


def test_woodbury_matches_general_path():
    cfg = SystemConfig(n_tx=4, n_rx=3, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    gen = np.random.default_rng(13)
    cov = CovarianceModel(random_psd(gen, 12, rank=5), random_psd(gen, 6), 0)
    y = crandn(gen, 3, s.tau)
    for snr in (0.1, 1.0, 50.0):
        general = mmse_si(ReceivedPilot(y, snr, 2.0), s, cov)
        fast = mmse_orthogonal(correlate(y, s.w_si), s.tau_si, snr, cov.r_si)
        assert rel(fast, general) <= 1e-8


def test_woodbury_diagonal_and_zero_snr():
    gen = np.random.default_rng(14)
    y_corr = crandn(gen, 2, 3)
    sigma2, tau, snr = 0.7, 5, 2.0
    h = mmse_orthogonal(y_corr, tau, snr, sigma2 * np.eye(6))
    # per-entry shrinkage of the correlated observation
    np.testing.assert_allclose(h, np.sqrt(snr) * y_corr / (1 / sigma2 + tau * snr), rtol=1e-12)
    assert np.max(np.abs(mmse_orthogonal(y_corr, tau, 1e-14, np.eye(6)))) <= 1e-6


def test_mmse_beats_ls_with_exact_covariance():
    cfg = SystemConfig(n_tx=4, n_rx=2, k_uplink=1, k_downlink=1)
    gen = np.random.default_rng(15)
    cov = CovarianceModel(random_psd(gen, 8, rank=3), random_psd(gen, 4, rank=2), 0)
    l_si, l_ue = sqrtm(cov.r_si), sqrtm(cov.r_ue)
    n = 4000
    for kind in ("orthogonal", "shared_nt"):
        s = build_scheme(kind, cfg)
        for s_si in (0.3, 3.0, 30.0):
            h_si = unvec(crandn(gen, n, 8) / np.sqrt(2) @ l_si.T, 2, 4)
            h_ue = unvec(crandn(gen, n, 4) / np.sqrt(2) @ l_ue.T, 2, 2)
            y = np.sqrt(s_si) * h_si @ s.w_si + h_ue @ s.w_ue + crandn(gen, n, 2, s.tau) / np.sqrt(2)
            e_mmse = np.sum(np.abs(h_si - mmse_si(ReceivedPilot(y, s_si, 1.0), s, cov)) ** 2, axis=(-2, -1))
            e_ls = np.sum(np.abs(h_si - ls_estimate(correlate(y, s.w_si), s.tau_si, s_si)) ** 2, axis=(-2, -1))
            d = e_mmse - e_ls
            assert d.mean() <= 2 * d.std() / np.sqrt(n)
