"""Layer kernels with hand-written backward passes.

Images are channels-last, ``(batch, height, width, channels)``. The
kernels are dtype-agnostic: training runs in float32, gradient checks in
float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def _check_conv(x, k):
    if x.ndim != 4:
        raise ShapeMismatch(f"expected (B, H, W, C) input, got {x.shape}")
    if k.ndim != 4 or k.shape[:2] != (3, 3):
        raise ShapeMismatch(f"expected a (3, 3, Cin, Cout) kernel, got {k.shape}")
    if x.shape[-1] != k.shape[2]:
        raise ShapeMismatch(f"input has {x.shape[-1]} channels, kernel expects {k.shape[2]}")


def conv2d_forward(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padded 3x3 cross-correlation with unit stride, plus bias."""
    _check_conv(x, k)
    bsz, h, w, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.empty((bsz, h, w, k.shape[3]), dtype=np.result_type(x, k))
    out[...] = b
    for dy in range(3):
        for dx in range(3):
            out += xp[:, dy : dy + h, dx : dx + w, :] @ k[dy, dx]
    return out


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, k: np.ndarray, need_input_grad=True):
    """Gradients of :func:`conv2d_forward` w.r.t. input, kernel and bias.

    Returns ``(grad_x, grad_k, grad_b)``; ``grad_x`` is ``None`` when
    ``need_input_grad`` is false.
    """
    _check_conv(x, k)
    bsz, h, w, cin = x.shape
    cout = k.shape[3]
    if grad_out.shape != (bsz, h, w, cout):
        raise ShapeMismatch(f"grad_out {grad_out.shape} does not match output {(bsz, h, w, cout)}")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    g2 = grad_out.reshape(-1, cout)
    grad_k = np.empty_like(k)
    grad_xp = np.zeros_like(xp) if need_input_grad else None
    for dy in range(3):
        for dx in range(3):
            xs = xp[:, dy : dy + h, dx : dx + w, :].reshape(-1, cin)
            grad_k[dy, dx] = xs.T @ g2
            if need_input_grad:
                grad_xp[:, dy : dy + h, dx : dx + w, :] += grad_out @ k[dy, dx].T
    grad_b = g2.sum(axis=0)
    grad_x = grad_xp[:, 1:-1, 1:-1, :] if need_input_grad else None
    return grad_x, grad_k, grad_b


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``y = W x + b`` for a batch of row vectors; ``w`` is ``(n_out, n_in)``."""
    if x.shape[-1] != w.shape[1]:
        raise ShapeMismatch(f"input length {x.shape[-1]} does not match weights {w.shape}")
    return x @ w.T + b


def dense_backward(grad_out: np.ndarray, x: np.ndarray, w: np.ndarray):
    if grad_out.shape[-1] != w.shape[0] or x.shape[-1] != w.shape[1]:
        raise ShapeMismatch("dense gradient shapes are inconsistent")
    return grad_out @ w, grad_out.T @ x, grad_out.sum(axis=0)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    if grad_out.shape != x.shape:
        raise ShapeMismatch("relu gradient shape mismatch")
    return grad_out * (x > 0)


class Layer:
    params: list
    grads: list

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def flops(self, in_shape) -> int:
        return 0

    def out_shape(self, in_shape):
        return in_shape


class Conv2D(Layer):
    def __init__(self, cin: int, cout: int, rng=None, dtype=np.float32):
        gen = np.random.default_rng(rng)
        bound = 1.0 / np.sqrt(9 * cin)
        self.k = gen.uniform(-bound, bound, size=(3, 3, cin, cout)).astype(dtype)
        self.b = np.zeros(cout, dtype=dtype)
        self.params = [self.k, self.b]
        self.grads = [np.zeros_like(self.k), np.zeros_like(self.b)]
        self.need_input_grad = True
        self._x = None

    def forward(self, x):
        self._x = x
        return conv2d_forward(x, self.k, self.b)

    def backward(self, grad):
        gx, gk, gb = conv2d_backward(grad, self._x, self.k, self.need_input_grad)
        self.grads[0][...] = gk
        self.grads[1][...] = gb
        return gx

    def flops(self, in_shape) -> int:
        h, w = in_shape[0], in_shape[1]
        cin, cout = self.k.shape[2], self.k.shape[3]
        return h * w * 9 * cin * cout

    def out_shape(self, in_shape):
        return (in_shape[0], in_shape[1], self.k.shape[3])


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng=None, dtype=np.float32):
        gen = np.random.default_rng(rng)
        bound = 1.0 / np.sqrt(n_in)
        self.w = gen.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
        self.need_input_grad = True
        self._x = None

    def forward(self, x):
        self._x = x
        return dense_forward(x, self.w, self.b)

    def backward(self, grad):
        gx, gw, gb = dense_backward(grad, self._x, self.w)
        self.grads[0][...] = gw
        self.grads[1][...] = gb
        return gx if self.need_input_grad else None

    def flops(self, in_shape) -> int:
        return int(self.w.size)

    def out_shape(self, in_shape):
        return (self.w.shape[0],)


class ReLU(Layer):
    def __init__(self):
        self.params = []
        self.grads = []
        self._x = None

    def forward(self, x):
        self._x = x
        return relu_forward(x)

    def backward(self, grad):
        return relu_backward(grad, self._x)
