"""Network descriptions and the sequential container used for the CNN
estimators and the FNN RX-to-TX mapper."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatch
from .layers import Conv2D, Dense, Layer, ReLU


@dataclass(frozen=True)
class NetworkSpec:
    """Layer-graph description.

    CNN: ``n_hidden`` 3x3 conv layers with ``hidden_channels`` kernels and
    ReLU, then a linear 3x3 conv back to 2 channels. ``input_shape`` is
    ``(H, W, 2)``.

    FNN: ``n_hidden`` dense layers of ``hidden_width`` with ReLU, then a
    linear dense output. ``input_shape`` is ``(2 N_r,)`` and
    ``output_shape`` ``(2 N_t,)``.
    """

    kind: str
    n_hidden: int
    input_shape: tuple
    output_shape: tuple
    hidden_channels: int = 64
    hidden_width: int = 128
    kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper())
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "output_shape", tuple(int(s) for s in self.output_shape))
        if self.kind not in ("CNN", "FNN"):
            raise ValueError(f"unknown network kind {self.kind}")
        if self.kind == "CNN" and self.input_shape[:2] != self.output_shape[:2]:
            raise ShapeMismatch("CNN keeps the spatial shape")
        if self.kernel != 3:
            raise ValueError("only 3x3 kernels are supported")

    @classmethod
    def cnn(cls, n_hidden: int, height: int, width: int, channels: int = 64) -> "NetworkSpec":
        return cls("CNN", n_hidden, (height, width, 2), (height, width, 2), hidden_channels=channels)

    @classmethod
    def fnn(cls, n_hidden: int, n_rx: int, n_tx: int, width: int = 128) -> "NetworkSpec":
        return cls("FNN", n_hidden, (2 * n_rx,), (2 * n_tx,), hidden_width=width)

    def to_dict(self) -> dict:
        return asdict(self)

    def widths(self) -> list[int]:
        """Channel (CNN) or unit (FNN) counts ``f_0 .. f_L`` through the network."""
        if self.kind == "CNN":
            return [2] + [self.hidden_channels] * self.n_hidden + [2]
        return [self.input_shape[0]] + [self.hidden_width] * self.n_hidden + [self.output_shape[0]]


class Network:
    def __init__(self, spec: NetworkSpec, layers: list[Layer]):
        self.spec = spec
        self.layers = layers
        # the first layer never needs a gradient w.r.t. the data
        if layers:
            layers[0].need_input_grad = False

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise ShapeMismatch(f"network expects {self.spec.input_shape}, got {x.shape[1:]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, grad: np.ndarray):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def layer_flops(self) -> list[int]:
        shape = self.spec.input_shape
        out = []
        for layer in self.layers:
            if layer.params:
                out.append(layer.flops(shape))
            shape = layer.out_shape(shape)
        return out

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def get_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_params(self, values) -> None:
        for p, v in zip(self.params, values):
            if p.shape != np.shape(v):
                raise ShapeMismatch(f"parameter shape {np.shape(v)} != {p.shape}")
            p[...] = v


def build_network(spec: NetworkSpec, rng=None, dtype=np.float32) -> Network:
    gen = np.random.default_rng(rng)
    widths = spec.widths()
    layers: list[Layer] = []
    for i, (fin, fout) in enumerate(zip(widths[:-1], widths[1:])):
        if spec.kind == "CNN":
            layers.append(Conv2D(fin, fout, gen, dtype))
        else:
            layers.append(Dense(fin, fout, gen, dtype))
        if i < len(widths) - 2:
            layers.append(ReLU())
    return Network(spec, layers)
