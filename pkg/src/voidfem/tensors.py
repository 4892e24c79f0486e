"""Fixed-size tensor algebra for 2x2 / 3x3 tensors and 2x2x2 third-order tensors.

All functions are batched: an array of shape ``(..., 2, 2)`` is treated as a
stack of 2x2 tensors and the operation is applied to every item.  Third-order
tensors are stored as ``(..., 2, 2, 2)`` with the last axis the material
gradient index.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "det2",
    "det3",
    "inv2",
    "inv3",
    "cofactor2",
    "embed_plane_strain",
    "trace",
    "double_dot",
    "triple_dot",
    "skew_part",
    "skew_per_gradient",
    "identity2",
    "SingularMatrixError",
]

# Minimum |det| (relative to the squared max entry) below which inversion is
# refused rather than returning garbage.
_SINGULAR_RTOL = 1e-14


class SingularMatrixError(ValueError):
    """Raised when a tensor inversion is requested for a singular tensor."""


def identity2(batch_shape=()) -> np.ndarray:
    """Identity 2x2 tensor broadcast to ``batch_shape + (2, 2)``."""
    out = np.zeros(tuple(batch_shape) + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    return out


def det2(a: np.ndarray) -> np.ndarray:
    """Determinant of 2x2 tensors, ``a11*a22 - a12*a21``."""
    a = np.asarray(a, dtype=float)
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def det3(a: np.ndarray) -> np.ndarray:
    """Determinant of 3x3 tensors (cofactor expansion along the first row)."""
    a = np.asarray(a, dtype=float)
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )


def cofactor2(a: np.ndarray) -> np.ndarray:
    """Cofactor of 2x2 tensors: ``cof(A)_ij = d det(A) / dA_ij``.

    For A = [[a, b], [c, d]] this is [[d, -c], [-b, a]]; it satisfies
    ``cof(A) = det(A) A^{-T}`` wherever A is invertible and extends that
    relation by continuity to singular A.
    """
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 0, 1] = -a[..., 1, 0]
    out[..., 1, 0] = -a[..., 0, 1]
    out[..., 1, 1] = a[..., 0, 0]
    return out


def inv2(a: np.ndarray) -> np.ndarray:
    """Inverse of 2x2 tensors.  Raises :class:`SingularMatrixError` on det ~ 0."""
    a = np.asarray(a, dtype=float)
    d = det2(a)
    scale = np.max(np.abs(a), axis=(-2, -1)) ** 2
    if np.any(np.abs(d) <= _SINGULAR_RTOL * np.maximum(scale, 1e-300)):
        raise SingularMatrixError("2x2 tensor is singular to working precision")
    return np.swapaxes(cofactor2(a), -2, -1) / d[..., None, None]


def inv3(a: np.ndarray) -> np.ndarray:
    """Inverse of 3x3 tensors.  Raises :class:`SingularMatrixError` on det ~ 0."""
    a = np.asarray(a, dtype=float)
    d = det3(a)
    scale = np.max(np.abs(a), axis=(-2, -1)) ** 3
    if np.any(np.abs(d) <= _SINGULAR_RTOL * np.maximum(scale, 1e-300)):
        raise SingularMatrixError("3x3 tensor is singular to working precision")
    return np.linalg.inv(a)


def embed_plane_strain(f2: np.ndarray) -> np.ndarray:
    """Embed 2x2 deformation gradients into 3x3 with unit out-of-plane stretch."""
    f2 = np.asarray(f2, dtype=float)
    out = np.zeros(f2.shape[:-2] + (3, 3))
    out[..., :2, :2] = f2
    out[..., 2, 2] = 1.0
    return out


def trace(a: np.ndarray) -> np.ndarray:
    """Trace over the trailing two axes."""
    a = np.asarray(a, dtype=float)
    return np.trace(a, axis1=-2, axis2=-1)


def double_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full contraction A : B over the trailing two axes."""
    return np.sum(np.asarray(a, float) * np.asarray(b, float), axis=(-2, -1))


def triple_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full contraction of third-order tensors over the trailing three axes."""
    return np.sum(np.asarray(a, float) * np.asarray(b, float), axis=(-3, -2, -1))


def skew_part(a: np.ndarray) -> np.ndarray:
    """Skew-symmetric part ``(A - A^T) / 2`` over the trailing two axes."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a - np.swapaxes(a, -2, -1))


def skew_per_gradient(t: np.ndarray) -> np.ndarray:
    """Skew-symmetrize a ``(..., 2, 2, 2)`` tensor over its tensor indices.

    The last axis (material gradient slot) is untouched:
    ``out[..., i, j, m] = (t[..., i, j, m] - t[..., j, i, m]) / 2``.
    """
    t = np.asarray(t, dtype=float)
    return 0.5 * (t - np.swapaxes(t, -3, -2))
