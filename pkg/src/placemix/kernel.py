"""Dense-tensor kernels: matmul, transpose, ReLU, reshape, L2 normalization.

All ops are pure functions over numpy arrays, preserve the input dtype
(float32 production paths, float64 for gradient checking) and are
deterministic on a fixed environment. The central-difference gradient
oracle used by the test suites also lives here.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "DegenerateVectorError",
    "NumericInputError",
    "matmul",
    "transpose",
    "relu",
    "reshape",
    "l2_normalize",
    "require_finite",
    "central_difference",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DegenerateVectorError(ValueError):
    """Vector norm below the normalization threshold."""


class NumericInputError(ValueError):
    """Input contains NaN or Inf."""


def require_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericInputError(f"{name} contains non-finite values")


def matmul(a, b):
    """Matrix product of two 2-D arrays; inner dimensions must match."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    return a @ b


def transpose(t):
    t = np.asarray(t)
    if t.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D operand, got {t.shape}")
    return np.ascontiguousarray(t.T)


def relu(t):
    """Elementwise max(x, 0)."""
    t = np.asarray(t)
    return np.maximum(t, np.zeros((), dtype=t.dtype))


def reshape(t, new_shape):
    """Relabel dimensions; row-major data order is unchanged."""
    t = np.asarray(t)
    new_shape = tuple(int(d) for d in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise ShapeError(
            f"reshape element count mismatch: {tuple(t.shape)} has {t.size} "
            f"elements, {new_shape} wants {int(np.prod(new_shape, dtype=np.int64))}"
        )
    return t.reshape(new_shape)


def l2_normalize(v, eps=1e-12):
    """Scale a flat vector to unit Euclidean norm; direction preserved."""
    v = np.asarray(v)
    flat = v.reshape(-1)
    norm = np.sqrt(np.dot(flat, flat))
    if norm < eps:
        raise DegenerateVectorError(f"vector norm {norm!r} below eps {eps!r}")
    return v / norm


def central_difference(f, x, step=1e-6):
    """Gradient of scalar f at x by central differences, one coordinate at a time.

    Runs in float64 regardless of the input dtype; `f` must accept an array
    of x's shape and return a scalar.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(x))
        flat[i] = orig - step
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad
