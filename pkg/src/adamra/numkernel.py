"""Dense double-precision numeric substrate.

A "matrix" throughout the package is a 2-D, C-contiguous ``float64`` numpy
array. The helpers here validate shapes and finiteness at operation
boundaries and delegate the hot loops to the selected kernel backend.
"""

import numpy as np

from . import _backend


class ShapeError(ValueError):
    """Operands do not conform."""


class NonFiniteError(ValueError):
    """A NaN or infinity reached an operation boundary."""


def as_matrix(m, name="matrix"):
    """Coerce to a finite float64 C-contiguous 2-D array."""
    a = np.ascontiguousarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NonFiniteError(f"{name} contains non-finite entries")
    return a


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(m):
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeError("softmax_rows: empty matrix")
    return _backend.kernels.softmax_rows(m)


def relu(m):
    return np.maximum(as_matrix(m), 0.0)


def elu_plus_one(m):
    m = as_matrix(m)
    return np.where(m > 0, m + 1.0, np.exp(np.minimum(m, 0.0)))


def _relu_grad(x):
    return (x > 0).astype(np.float64)


def _elu_plus_one_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


# feature-function id -> (map, derivative w.r.t. its input)
FEATURE_MAPS = {
    "relu": (relu, _relu_grad),
    "elu1": (elu_plus_one, _elu_plus_one_grad),
}


def feature_map(phi):
    try:
        return FEATURE_MAPS[phi]
    except KeyError:
        raise ValueError(
            f"unknown feature function {phi!r}; expected one of {sorted(FEATURE_MAPS)}"
        ) from None


def segment_bounds(n, landmarks):
    """Row boundaries of the balanced contiguous partition, length landmarks+1."""
    if not 1 <= landmarks <= n:
        raise ValueError(f"landmarks must be in [1, {n}], got {landmarks}")
    return _backend.kernels.segment_bounds(n, landmarks)


def segment_mean(m, landmarks):
    """Mean of each of ``landmarks`` contiguous row segments.

    Segment ``s`` covers rows ``[floor(s*n/L), floor((s+1)*n/L))``; when
    ``landmarks == rows`` the input is returned unchanged.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if not 1 <= landmarks <= n:
        raise ValueError(f"landmarks must be in [1, {n}], got {landmarks}")
    return _backend.kernels.segment_mean(m, int(landmarks))


def segment_mean_adjoint(g, n):
    """Transpose of :func:`segment_mean` applied to a gradient of shape (L, d)."""
    g = as_matrix(g, "gradient")
    if not 1 <= g.shape[0] <= n:
        raise ValueError(f"cannot spread {g.shape[0]} segments over {n} rows")
    return _backend.kernels.segment_mean_adjoint(g, int(n))


def init_uniform(rng, rows, cols):
    """Weights drawn from U(-1/sqrt(rows), 1/sqrt(rows)); ``rows`` is fan-in."""
    bound = 1.0 / np.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols))
