"""Dense float64 linear algebra and a reproducible random stream.

Matrices are 2-D C-contiguous (row-major) float64 numpy arrays, vectors are
1-D float64 arrays.  Public operations validate shapes and reject non-finite
values so downstream modules never see NaN/Inf silently.

Randomness comes from :class:`RandomStream`: the raw 64-bit output of the
PCG64 generator (O'Neill 2014, fixed published constants) combined with fixed,
documented transformations.  Streams are therefore identical for identical
seeds across runs, platforms and library versions; numpy's higher-level
``Generator`` distributions are avoided on purpose because their streams are
not version-stable.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError

Matrix = np.ndarray  # 2-D float64, row-major
Vector = np.ndarray  # 1-D float64


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Coerce to a row-major float64 matrix, optionally checking its shape."""
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionError(f"expected {cols} cols, got {m.shape[1]}")
    if not np.isfinite(m).all():
        raise NumericError("matrix contains non-finite entries")
    return m


def as_vector(data, length: int | None = None) -> Vector:
    """Coerce to a float64 vector, optionally checking its length."""
    v = np.ascontiguousarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise DimensionError(f"expected length {length}, got {v.shape[0]}")
    if not np.isfinite(v).all():
        raise NumericError("vector contains non-finite entries")
    return v


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b with explicit dimension checking."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ ({a.shape[0]}x{a.shape[1]} by "
            f"{b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def l2_norm(v: Vector) -> float:
    """Euclidean norm sqrt(sum v_i^2); the vector must be non-empty."""
    v = as_vector(v)
    if v.shape[0] == 0:
        raise DimensionError("l2_norm of an empty vector is undefined")
    return float(np.sqrt(np.dot(v, v)))


def softmax(logits: Vector) -> Vector:
    """Probabilities exp(x_i - max x) / sum, stable under large logits."""
    v = as_vector(logits)
    if v.shape[0] == 0:
        raise DimensionError("softmax of an empty vector is undefined")
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(logits: Matrix) -> Matrix:
    """Row-wise softmax of a logits matrix."""
    m = as_matrix(logits)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(logits: Matrix) -> Matrix:
    """Row-wise log-softmax; keeps precision for near-one-hot rows."""
    m = as_matrix(logits)
    shifted = m - m.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


_U64 = 0xFFFFFFFFFFFFFFFF
_INV_2_53 = 2.0**-53


class RandomStream:
    """Deterministic random stream: PCG64 raw bits + fixed transformations.

    Every derived draw consumes a documented number of raw 64-bit words:
    ``uniform(n)`` consumes n, ``gaussian(n)`` consumes 2*ceil(n/2) (Box-Muller
    pairs), ``sample_without_replacement(n, k)`` consumes k, ``permutation(n)``
    consumes n.  The ``stream`` tag derives independent substreams from one
    seed (used for the trainer's seed discipline).
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _U64
        self.stream = int(stream) & _U64
        self._bits = np.random.PCG64(np.random.SeedSequence([self.seed, self.stream]))

    def raw(self, n: int) -> np.ndarray:
        """n raw 64-bit words from the PCG64 stream."""
        return self._bits.random_raw(n)

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) with 53-bit resolution: (word >> 11) * 2^-53."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def gaussian(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller on uniform pairs."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1 = u[:pairs]
        u2 = u[pairs:]
        u1 = np.where(u1 == 0.0, _INV_2_53, u1)  # ln(0) guard
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n]

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from 0..n-1, uniform, via partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise DimensionError(f"cannot draw {k} without replacement from {n}")
        idx = np.arange(n, dtype=np.int64)
        u = self.uniform(k)
        for i in range(k):
            j = i + int(u[i] * (n - i))
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k].copy()

    def permutation(self, n: int) -> np.ndarray:
        """Uniformly random permutation of 0..n-1."""
        return self.sample_without_replacement(n, n)
