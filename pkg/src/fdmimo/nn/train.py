from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch
from .data import Dataset, MinMaxScaler, fit_scaler, stack_complex, stack_vector, unstack_complex, unstack_vector
from .model import Network, NetworkSpec, build_network
from .optim import AdamHyper, AdamState, adam_step, mse_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainHyper:
    batch_size: int = 512
    adam: AdamHyper = AdamHyper()
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0


@dataclass
class TrainedModel:
    network: Network
    input_scaler: MinMaxScaler
    label_scaler: MinMaxScaler
    history: list = field(default_factory=list)

    @property
    def spec(self) -> NetworkSpec:
        return self.network.spec

    def predict_scaled(self, x_scaled: np.ndarray, batch_size: int = 2048) -> np.ndarray:
        outs = [self.network.forward(x_scaled[i : i + batch_size]) for i in range(0, len(x_scaled), batch_size)]
        return np.concatenate(outs) if outs else np.empty((0,) + self.spec.output_shape)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Real-valued stacked input in, real-valued stacked output in the label domain."""
        dtype = self.network.params[0].dtype
        xs = self.input_scaler.transform(np.asarray(x, dtype=dtype))
        return self.label_scaler.inverse(self.predict_scaled(xs))


def _evaluate(net: Network, x, y, batch_size: int) -> float:
    total = 0.0
    for i in range(0, len(x), batch_size):
        loss, _ = mse_loss(net.forward(x[i : i + batch_size]), y[i : i + batch_size])
        total += loss * len(x[i : i + batch_size])
    return total / max(len(x), 1)


def train(
    spec: NetworkSpec,
    ds: Dataset,
    hyper: TrainHyper = TrainHyper(),
    scalers: tuple[MinMaxScaler, MinMaxScaler] | None = None,
    dtype=np.float32,
) -> TrainedModel:
    """Mini-batch Adam on min-max scaled data with early stopping.

    The parameters with the lowest validation loss are returned. ``history``
    holds one ``{"epoch", "train_loss", "val_loss"}`` entry per epoch
    (losses in the scaled domain).
    """
    in_scaler, out_scaler = scalers if scalers is not None else fit_scaler(ds)
    x_tr, y_tr = ds.part("train")
    x_va, y_va = ds.part("val")
    if tuple(x_tr.shape[1:]) != spec.input_shape or tuple(y_tr.shape[1:]) != spec.output_shape:
        raise ShapeMismatch(f"dataset shapes {x_tr.shape[1:]}/{y_tr.shape[1:]} do not fit {spec}")
    x_tr = in_scaler.transform(x_tr.astype(dtype))
    y_tr = out_scaler.transform(y_tr.astype(dtype))
    x_va = in_scaler.transform(x_va.astype(dtype))
    y_va = out_scaler.transform(y_va.astype(dtype))

    gen = np.random.default_rng(hyper.seed)
    net = build_network(spec, gen, dtype)
    state = AdamState.zeros_like(net.params)
    best = (np.inf, net.get_params())
    stale = 0
    history = []
    for epoch in range(hyper.max_epochs):
        order = gen.permutation(len(x_tr))
        run = 0.0
        for i in range(0, len(order), hyper.batch_size):
            idx = order[i : i + hyper.batch_size]
            loss, grad = mse_loss(net.forward(x_tr[idx]), y_tr[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at epoch {epoch}, batch {i // hyper.batch_size}")
            net.backward(grad.astype(dtype))
            adam_step(net.params, net.grads, state, hyper.adam)
            run += loss * len(idx)
        val = _evaluate(net, x_va, y_va, 4096) if len(x_va) else run / len(x_tr)
        history.append({"epoch": epoch, "train_loss": run / len(x_tr), "val_loss": val})
        log.debug("epoch %d train %.6g val %.6g", epoch, run / len(x_tr), val)
        if val < best[0]:
            best = (val, net.get_params())
            stale = 0
        else:
            stale += 1
            if stale >= hyper.patience:
                break
    net.set_params(best[1])
    return TrainedModel(net, in_scaler, out_scaler, history)


def predict_channel(model: TrainedModel, y: np.ndarray) -> np.ndarray:
    """Estimate complex channels from complex inputs.

    CNN models take correlated pilot blocks ``(..., H, W)``; FNN models take
    RX-side channel vectors ``(..., N_r)``.
    """
    y = np.asarray(y)
    single = y.ndim == (2 if model.spec.kind == "CNN" else 1)
    if single:
        y = y[None]
    if model.spec.kind == "CNN":
        out = unstack_complex(model.predict(stack_complex(y)))
    else:
        out = unstack_vector(model.predict(stack_vector(y)))
    return out[0] if single else out
