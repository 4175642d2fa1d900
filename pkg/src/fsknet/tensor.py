"""Dense channel-last arrays and the few primitives the layers are built on.

Tensors are plain ``numpy.ndarray`` objects. This module only adds the shape
discipline the network relies on: rank 1 to 5 (plus an optional leading batch
axis), strictly positive dims, and loud errors instead of silent broadcasting.
"""
from __future__ import annotations

import numpy as np

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64

MAX_RANK = 5


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericalError(FloatingPointError):
    """Raised in checked mode when a tensor holds NaN or Inf."""


def validate_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(d) for d in shape)
    if not 1 <= len(shape) <= MAX_RANK:
        raise ShapeError(f"rank must be in 1..{MAX_RANK}, got shape {shape}")
    if any(d < 1 for d in shape):
        raise ShapeError(f"every dim must be >= 1, got shape {shape}")
    return shape


def tensor(data, dtype=TRAIN_DTYPE, checked: bool = False) -> np.ndarray:
    """Build a contiguous row-major tensor, validating its shape."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    validate_shape(arr.shape)
    if checked:
        check_finite(arr)
    return arr


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise NumericalError(f"{name} holds {bad} non-finite value(s)")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rank-2 matrix product ``c[i, j] = sum_t a[i, t] * b[t, j]``."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    return a @ b


def reduce_mean_spatial(x: np.ndarray) -> np.ndarray:
    """Global average over the two spatial axes of ``[..., H, W, C]``.

    A rank-3 input gives a ``[C]`` vector; a leading batch axis is kept.
    """
    if x.ndim < 3:
        raise ShapeError(f"expected [..., H, W, C], got {x.shape}")
    return x.mean(axis=(-3, -2))


def reshape(x: np.ndarray, shape) -> np.ndarray:
    """Metadata-only reshape; refuses to change the element count."""
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} into {shape}")
    return x.reshape(shape)


def scale_channels(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Multiply a channel-last tensor by a per-channel vector (or a scalar)."""
    v = np.asarray(v)
    if v.ndim and v.shape[-1] != x.shape[-1]:
        raise ShapeError(f"channel vector {v.shape} does not match tensor {x.shape}")
    return x * v
