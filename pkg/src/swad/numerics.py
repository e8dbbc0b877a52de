"""Dense float64 linear algebra and seeded randomness used by all training code.

Matrices are plain 2-D numpy arrays of float64. Every public operation
validates shapes and raises :class:`ShapeError` with both shapes named, so
dimension bugs surface at the call site instead of deep inside a litany of
broadcasting.
"""

from __future__ import annotations

import hashlib

import numpy as np


class SwadError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SwadError):
    """Operand shapes are incompatible for the requested operation."""


class TrainingDivergedError(SwadError):
    """Training produced a non-finite loss."""


def as_matrix(values) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting NaN/Inf entries."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape checking."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


_ELEMENTWISE_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Cell-wise add/sub/mul; ``b`` may be a single row broadcast over ``a``."""
    if op not in _ELEMENTWISE_OPS:
        raise ValueError(f"unknown elementwise op {op!r}, expected one of {sorted(_ELEMENTWISE_OPS)}")
    if a.shape != b.shape and not (b.shape == (1, a.shape[1])):
        raise ShapeError(f"elementwise shape mismatch: {a.shape} vs {b.shape}")
    return _ELEMENTWISE_OPS[op](a, b)


def _label_words(label: str) -> tuple[int, ...]:
    # Stable 128-bit digest of the label; keeps child streams independent of
    # draw order and of platform hash randomization.
    digest = hashlib.sha256(label.encode("utf-8")).digest()[:16]
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class Rng:
    """Counter-based (Philox) random source with labeled substreams.

    ``split(label)`` derives a child stream from the seed and the label path
    alone, so e.g. per-layer initialization streams do not shift when the
    number of draws elsewhere changes (batch size, extra shuffles, ...).
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = _path
        seq = np.random.SeedSequence(self.seed, spawn_key=_path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def split(self, label: str) -> "Rng":
        """Child stream for ``label``; same (seed, label) always gives the same stream."""
        return Rng(self.seed, self._path + _label_words(label))

    def uniform(self, rows: int, cols: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """I.i.d. uniform samples in [lo, hi)."""
        if not lo < hi:
            raise ValueError(f"uniform bounds must satisfy lo < hi, got [{lo}, {hi})")
        return self._gen.random((rows, cols)) * (hi - lo) + lo

    def normal(self, rows: int, cols: int, scale: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal((rows, cols)) * scale

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)


def rng_uniform(rng: Rng, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
    """Uniform random matrix in [lo, hi); reproducible per seed."""
    return rng.uniform(rows, cols, lo, hi)


def shuffle_rows(rng: Rng, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle rows, returning (shuffled, permutation) for paired-label use."""
    if m.ndim != 2 or m.shape[0] < 1:
        raise ShapeError(f"shuffle_rows needs a non-empty 2-D matrix, got {m.shape}")
    perm = rng.permutation(m.shape[0])
    return m[perm], perm
