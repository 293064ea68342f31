import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdmimo.channel import SystemConfig
from fdmimo.errors import DegenerateRange, NonFiniteLoss, ShapeMismatch
from fdmimo.nn import (
    AdamHyper,
    AdamState,
    Dataset,
    MinMaxScaler,
    NetworkSpec,
    TrainHyper,
    adam_step,
    build_network,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    fit_scaler,
    make_dataset,
    mse_loss,
    predict_channel,
    relu_backward,
    relu_forward,
    stack_complex,
    train,
    unstack_complex,
)
from fdmimo.nn.data import DEFAULT_SPLIT, default_split, stack_vector, unstack_vector
from fdmimo.numerics import RngStream
from fdmimo.pilots import build_scheme
from oracles import central_diff, max_rel_err


def naive_conv(x, k, b):
    """Direct loop evaluation of the zero-padded 3x3 cross-correlation."""
    bsz, h, w, cin = x.shape
    out = np.zeros((bsz, h, w, k.shape[3]))
    for n in range(bsz):
        for i in range(h):
            for j in range(w):
                for dy in range(3):
                    for dx in range(3):
                        ii, jj = i + dy - 1, j + dx - 1
                        if 0 <= ii < h and 0 <= jj < w:
                            out[n, i, j] += x[n, ii, jj] @ k[dy, dx]
    return out + b


# conv


def test_conv_identity_kernel_and_single_pixel():
    g = np.random.default_rng(0)
    x = g.standard_normal((2, 4, 5, 3))
    k = np.zeros((3, 3, 3, 3))
    k[1, 1] = np.eye(3)
    np.testing.assert_allclose(conv2d_forward(x, k, np.zeros(3)), x)
    one = np.full((1, 1, 1, 1), 2.5)
    assert conv2d_forward(one, np.ones((3, 3, 1, 1)), np.zeros(1))[0, 0, 0, 0] == pytest.approx(2.5)


def test_conv_matches_naive_and_is_linear():
    g = np.random.default_rng(1)
    x = g.standard_normal((2, 4, 3, 2))
    k = g.standard_normal((3, 3, 2, 3))
    b = g.standard_normal(3)
    np.testing.assert_allclose(conv2d_forward(x, k, b), naive_conv(x, k, b), atol=1e-12)
    zero = np.zeros(3)
    np.testing.assert_allclose(conv2d_forward(2.5 * x, k, zero), 2.5 * conv2d_forward(x, k, zero), atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(ShapeMismatch):
        conv2d_forward(np.zeros((1, 3, 3, 2)), np.zeros((3, 3, 3, 1)), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        conv2d_forward(np.zeros((1, 3, 3, 2)), np.zeros((5, 5, 2, 1)), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        conv2d_backward(np.zeros((1, 3, 3, 2)), np.zeros((1, 3, 3, 2)), np.zeros((3, 3, 2, 1)))


def test_conv_gradient_finite_difference():
    g = np.random.default_rng(2)
    x = g.standard_normal((2, 4, 4, 2))
    k = g.standard_normal((3, 3, 2, 3))
    b = g.standard_normal(3)
    w = g.standard_normal((2, 4, 4, 3))

    def f():
        return np.sum(w * conv2d_forward(x, k, b))

    gx, gk, gb = conv2d_backward(w, x, k)
    assert max_rel_err(gx, central_diff(f, x)) <= 1e-4
    assert max_rel_err(gk, central_diff(f, k)) <= 1e-4
    assert max_rel_err(gb, central_diff(f, b)) <= 1e-4
    np.testing.assert_allclose(gb, w.sum(axis=(0, 1, 2)))


@given(st.integers(1, 2), st.integers(1, 5), st.integers(1, 5), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31))
@settings(max_examples=15, deadline=None)
def test_conv_gradient_random_shapes(bsz, h, w, cin, cout, seed):
    g = np.random.default_rng(seed)
    x = g.standard_normal((bsz, h, w, cin))
    k = g.standard_normal((3, 3, cin, cout))
    b = g.standard_normal(cout)
    wt = g.standard_normal((bsz, h, w, cout))
    f = lambda: np.sum(wt * conv2d_forward(x, k, b))  # noqa: E731
    gx, gk, _ = conv2d_backward(wt, x, k)
    assert max_rel_err(gx, central_diff(f, x)) <= 1e-4
    assert max_rel_err(gk, central_diff(f, k)) <= 1e-4


def test_conv_backward_trivial_cases():
    g = np.random.default_rng(3)
    x = g.standard_normal((1, 3, 3, 2))
    k = np.zeros((3, 3, 2, 2))
    k[1, 1] = np.eye(2)
    go = g.standard_normal((1, 3, 3, 2))
    gx, _, _ = conv2d_backward(go, x, k)
    np.testing.assert_allclose(gx, go)
    gx, gk, gb = conv2d_backward(np.zeros_like(go), x, g.standard_normal((3, 3, 2, 2)))
    assert not gx.any() and not gk.any() and not gb.any()


# dense / relu / loss


def test_dense_and_relu_examples():
    x = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(dense_forward(x, np.eye(3), np.zeros(3)), x)
    np.testing.assert_array_equal(relu_forward(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    with pytest.raises(ShapeMismatch):
        dense_forward(x, np.eye(2), np.zeros(2))


def test_dense_relu_gradients():
    g = np.random.default_rng(4)
    x = g.standard_normal((3, 5))
    w = g.standard_normal((4, 5))
    b = g.standard_normal(4)
    wt = g.standard_normal((3, 4))
    f = lambda: np.sum(wt * dense_forward(x, w, b))  # noqa: E731
    gx, gw, gb = dense_backward(wt, x, w)
    for analytic, var in ((gx, x), (gw, w), (gb, b)):
        assert max_rel_err(analytic, central_diff(f, var)) <= 1e-4
    z = g.standard_normal((4, 6))
    z[np.abs(z) < 1e-3] = 0.5  # keep away from the kink
    wt = g.standard_normal((4, 6))
    f = lambda: np.sum(wt * relu_forward(z))  # noqa: E731
    assert max_rel_err(relu_backward(wt, z), central_diff(f, z)) <= 1e-4


def test_mse_loss():
    g = np.random.default_rng(5)
    label = g.standard_normal((4, 3, 3, 2))
    loss, grad = mse_loss(label.copy(), label)
    assert loss == 0 and not grad.any()
    loss, _ = mse_loss(label + 1, label)
    assert loss == pytest.approx(18.0)
    pred = g.standard_normal(label.shape)
    _, grad = mse_loss(pred, label)
    fd = central_diff(lambda: mse_loss(pred, label)[0], pred)
    assert np.max(np.abs(grad - fd)) <= 1e-6
    with pytest.raises(ShapeMismatch):
        mse_loss(pred, label[:2])


# adam


def test_adam_first_step_and_zero_grad():
    g = np.random.default_rng(6)
    p = g.standard_normal(10)
    grad = g.standard_normal(10)
    before = p.copy()
    st_ = AdamState.zeros_like([p])
    adam_step([p], [grad], st_, AdamHyper(lr=1e-3))
    step = before - p
    assert np.all(np.abs(step) <= 1e-3 * (1 + 1e-6))
    np.testing.assert_allclose(step, 1e-3 * np.sign(grad), rtol=1e-4)
    q = before.copy()
    adam_step([q], [np.zeros(10)], AdamState.zeros_like([q]))
    np.testing.assert_array_equal(q, before)


def test_adam_matches_reference_formula():
    g = np.random.default_rng(7)
    p = g.standard_normal(4)
    grads = [g.standard_normal(4) for _ in range(3)]
    ref, m, v = p.copy(), np.zeros(4), np.zeros(4)
    hp = AdamHyper(lr=0.01)
    for t, gr in enumerate(grads, 1):
        m = 0.9 * m + 0.1 * gr
        v = 0.999 * v + 0.001 * gr**2
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    state = AdamState.zeros_like([p])
    for gr in grads:
        adam_step([p], [gr], state, hp)
    np.testing.assert_allclose(p, ref, rtol=1e-12)


# networks


def _loss_of(net, x, y):
    return mse_loss(net.forward(x), y)[0]


@pytest.mark.parametrize("spec", [NetworkSpec.cnn(2, 4, 4, channels=3), NetworkSpec.fnn(2, 3, 2, width=5)],
                         ids=["cnn", "fnn"])
def test_end_to_end_gradient(spec):
    g = np.random.default_rng(8)
    net = build_network(spec, 9, np.float64)
    x = g.standard_normal((3,) + spec.input_shape)
    y = g.standard_normal((3,) + spec.output_shape)
    _, grad = mse_loss(net.forward(x), y)
    net.backward(grad)
    for p, analytic in zip(net.params, net.grads):
        fd = central_diff(lambda: _loss_of(net, x, y), p)
        assert max_rel_err(analytic.copy(), fd) <= 1e-4


@pytest.mark.parametrize("n_hidden", [0, 1, 2, 10])
def test_cnn_preserves_shape_and_flops(n_hidden):
    spec = NetworkSpec.cnn(n_hidden, 5, 3)
    net = build_network(spec, 0)
    out = net.forward(np.zeros((2, 5, 3, 2), np.float32))
    assert out.shape == (2, 5, 3, 2)
    widths = spec.widths()
    assert sum(net.layer_flops()) == 15 * 9 * sum(a * b for a, b in zip(widths[:-1], widths[1:]))
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((2, 4, 3, 2), np.float32))


def test_network_params_roundtrip():
    net = build_network(NetworkSpec.cnn(1, 3, 3, channels=4), 1)
    saved = net.get_params()
    for p in net.params:
        p += 1
    net.set_params(saved)
    for p, s in zip(net.params, saved):
        np.testing.assert_array_equal(p, s)
    assert net.n_params() == 9 * 2 * 4 + 4 + 9 * 4 * 2 + 2


# data and scaling


def test_stacking_roundtrip():
    g = np.random.default_rng(10)
    h = g.standard_normal((3, 4, 2)) + 1j * g.standard_normal((3, 4, 2))
    np.testing.assert_array_equal(unstack_complex(stack_complex(h, np.float64)), h)
    v = h[..., 0]
    np.testing.assert_array_equal(unstack_vector(stack_vector(v, np.float64)), v)
    assert stack_complex(h).shape == (3, 4, 2, 2)


def test_scaler():
    g = np.random.default_rng(11)
    x = g.standard_normal((50, 4)).astype(np.float64)
    s = MinMaxScaler.fit(x)
    t = s.transform(x)
    assert t.min() == 0.0 and t.max() == 1.0
    np.testing.assert_allclose(s.inverse(t), x, atol=1e-6)
    with pytest.raises(DegenerateRange):
        MinMaxScaler.fit(np.ones((3, 3)))


def test_fit_scaler_uses_training_split_only():
    x = np.arange(10, dtype=np.float32)[:, None]
    ds = Dataset(x, x * 2, (4, 3, 3))
    sx, sy = fit_scaler(ds)
    assert (sx.min, sx.max) == (0.0, 3.0) and (sy.min, sy.max) == (0.0, 6.0)
    with pytest.raises(DegenerateRange):
        fit_scaler(Dataset(np.ones((10, 1)), x, (4, 3, 3)))


def test_default_split():
    assert DEFAULT_SPLIT == (20_000, 20_000, 10_000)
    assert default_split(50_000) == DEFAULT_SPLIT
    assert sum(default_split(123)) == 123


def test_make_dataset_noiseless_orthogonal_gram():
    cfg = SystemConfig(n_tx=4, n_rx=3, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    snr_db = 10.0
    from fdmimo.nn.data import pilot_observations

    gen = np.random.default_rng(12)
    y_corr, h, _ = pilot_observations(cfg, s, "SI", np.array([snr_db]), np.array([0.0]), gen)
    assert y_corr.shape == (1, 3, 4)
    ds = make_dataset(cfg, s, "SI", 10, [snr_db], RngStream(1), split=(4, 3, 3))
    assert ds.inputs.shape == (10, 3, 4, 2) and ds.labels.shape == (10, 3, 4, 2)
    assert ds.metadata["source"] == "synthetic" and ds.metadata["tau"] == 6
    np.testing.assert_array_equal(ds.tag("snr_db"), np.full(10, snr_db, np.float32))


def test_make_dataset_input_is_scaled_label_without_noise(monkeypatch):
    import fdmimo.nn.data as data

    monkeypatch.setattr(data, "sample_cn", lambda gen, shape: np.zeros(shape, complex))
    cfg = SystemConfig(n_tx=4, n_rx=3, k_uplink=1, k_downlink=1)
    s = build_scheme("orthogonal", cfg)
    ds = make_dataset(cfg, s, "SI", 1, [20.0], RngStream(2), split=(1, 0, 0))
    x, y = unstack_complex(ds.inputs), unstack_complex(ds.labels)
    np.testing.assert_allclose(x, s.tau_si * 10.0 * y, rtol=1e-5, atol=1e-5)


def test_make_dataset_rxtx_pool():
    cfg = SystemConfig(n_tx=6, n_rx=4)
    ds = make_dataset(cfg, None, "RXTX", 40, [0.0], RngStream(3), split=(20, 10, 10),
                      spreads_deg=[10, 100, 190, 280])
    assert ds.inputs.shape == (40, 8) and ds.labels.shape == (40, 12)
    assert set(np.unique(ds.tag("spread_deg"))) <= {10, 100, 190, 280}
    h_rx = unstack_vector(ds.inputs)
    np.testing.assert_allclose(np.linalg.norm(h_rx, axis=-1), 1.0, rtol=1e-6)


# training


def _identity_dataset(n=600, shape=(3, 3)):
    g = np.random.default_rng(13)
    h = g.standard_normal((n,) + shape) + 1j * g.standard_normal((n,) + shape)
    x = stack_complex(h)
    return Dataset(x, 0.5 * x, (n // 2, n // 4, n - n // 2 - n // 4))


def test_training_learns_identity():
    ds = _identity_dataset()
    model = train(NetworkSpec.cnn(0, 3, 3), ds, TrainHyper(batch_size=32, adam=AdamHyper(lr=1e-2),
                                                            max_epochs=300, patience=20))
    assert model.history[-1]["train_loss"] < model.history[0]["train_loss"]
    assert min(h["val_loss"] for h in model.history) <= 1e-3


def test_training_is_deterministic():
    ds = _identity_dataset(200)
    hyper = TrainHyper(batch_size=16, max_epochs=3, seed=4)
    a = train(NetworkSpec.cnn(1, 3, 3, channels=4), ds, hyper)
    b = train(NetworkSpec.cnn(1, 3, 3, channels=4), ds, hyper)
    assert a.history == b.history
    for p, q in zip(a.network.params, b.network.params):
        np.testing.assert_array_equal(p, q)


def test_training_non_finite_loss():
    ds = _identity_dataset(100)
    with pytest.raises(NonFiniteLoss):
        train(NetworkSpec.cnn(1, 3, 3, channels=4), ds, TrainHyper(batch_size=16, adam=AdamHyper(lr=1e30),
                                                                    max_epochs=20))


def test_predict_channel_shapes_and_negative_control():
    cfg = SystemConfig(n_tx=4, n_rx=4, k_uplink=1, k_downlink=1)
    s = build_scheme("shared_nt", cfg)
    ds = make_dataset(cfg, s, "SI", 300, [10.0], RngStream(5), split=(150, 50, 100))
    model = train(NetworkSpec.cnn(0, 4, 4), ds, TrainHyper(max_epochs=0))
    x, y = ds.part("test")
    single = predict_channel(model, unstack_complex(x[0]))
    assert single.shape == (4, 4) and np.iscomplexobj(single)
    est = predict_channel(model, unstack_complex(x))
    h = unstack_complex(y)
    nmse = np.mean(np.sum(np.abs(h - est) ** 2, axis=(1, 2)) / np.sum(np.abs(h) ** 2, axis=(1, 2)))
    assert nmse >= 0.5  # an untrained network is no estimator
