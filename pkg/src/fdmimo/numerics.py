"""Complex linear-algebra and sampling primitives.

Matrices are plain ``numpy`` complex128 arrays. Functions that accept a
single matrix also accept a stack of matrices with leading batch axes
where that is noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite, ShapeMismatch

PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by the counter-based Philox bit generator. Two streams with the
    same pair produce identical sequences; different ``stream_id`` values
    give statistically independent streams, so parallel workers never
    share state.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "RngStream":
        # nested ids stay distinct from the parent id space
        return RngStream(self.seed, self.stream_id * 1_000_003 + stream_id + 1)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, entry ``[i*rb + k, j*cb + l] = a[i, j] * b[k, l]``."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    ra, ca = a.shape
    rb, cb = b.shape
    out = a[:, None, :, None] * b[None, :, None, :]
    return out.reshape(ra * rb, ca * cb)


def vec(a: np.ndarray) -> np.ndarray:
    """Stack the columns of ``a`` (last two axes) into one vector.

    Leading axes are kept as batch axes, so an input of shape
    ``(B, rows, cols)`` yields ``(B, rows * cols)``.
    """
    a = np.asarray(a)
    if a.ndim < 2:
        return a.reshape(-1)
    return np.swapaxes(a, -1, -2).reshape(a.shape[:-2] + (-1,))


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for the given matrix shape."""
    v = np.asarray(v)
    if v.shape[-1] != rows * cols:
        raise ShapeMismatch(f"cannot reshape length {v.shape[-1]} into {rows}x{cols}")
    return np.swapaxes(v.reshape(v.shape[:-1] + (cols, rows)), -1, -2)


def hermitian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for Hermitian positive definite ``a``.

    Uses a Cholesky factorization; no inverse is formed.

    Raises
    ------
    NotPositiveDefinite
        If the factorization fails or a squared pivot of the factor falls
        below ``1e-12 * trace(a) / n``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ShapeMismatch(f"expected a square matrix, got {a.shape}")
    if b.shape[0] != n:
        raise ShapeMismatch(f"right-hand side has {b.shape[0]} rows, expected {n}")
    floor = PIVOT_RTOL * abs(np.trace(a).real) / n
    try:
        c, lower = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = np.abs(np.diagonal(c)) ** 2
    if pivots.min() < floor:
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} below threshold {floor:.3e}"
        )
    return scipy.linalg.cho_solve((c, lower), b, check_finite=False)


def sample_cn(rng, n, size=None) -> np.ndarray:
    """Draw circularly-symmetric complex Gaussians with unit variance.

    ``n`` may be an int or a shape tuple; real and imaginary parts each
    have variance 1/2.
    """
    gen = as_generator(rng)
    shape = (n,) if np.isscalar(n) else tuple(n)
    if size is not None:
        shape = (size,) + shape
    z = gen.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)
