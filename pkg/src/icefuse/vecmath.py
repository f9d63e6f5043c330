"""Deterministic vector math shared by all scoring paths.

All functions are pure, operate on 1-D/2-D numpy arrays and compute in
float64 regardless of the caller's storage precision. Non-finite inputs
are rejected at the boundary instead of propagating through scores.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    NonFiniteError,
    ZeroVectorError,
)

# Norms below this are treated as zero: no meaningful direction survives.
ZERO_NORM_FLOOR = 1e-30


def _as_f64(x, name: str = "input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def normalize(v) -> np.ndarray:
    """Scale a vector to unit L2 norm, preserving its direction."""
    arr = _as_f64(v, "vector")
    norm = float(np.linalg.norm(arr))
    if norm < ZERO_NORM_FLOOR:
        raise ZeroVectorError(f"cannot normalize vector with norm {norm!r}")
    return arr / norm


def cosine(u, w) -> float:
    """Cosine similarity between two vectors.

    Symmetric, scale-invariant, and in [-1, 1] up to rounding.
    """
    a = _as_f64(u, "u")
    b = _as_f64(w, "w")
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM_FLOOR or nb < ZERO_NORM_FLOOR:
        raise ZeroVectorError("cosine undefined for zero vector")
    return float(np.dot(a, b) / (na * nb))


def softmax(scores, tau: float = 1.0) -> np.ndarray:
    """Softmax of ``tau * scores``, numerically stabilized by max-subtraction.

    ``tau=1`` applies a plain softmax to the raw scores; larger values
    sharpen the distribution (the convention used by encoders that scale
    their logits). Preserves the argmax of ``scores`` for any ``tau > 0``.
    """
    arr = _as_f64(scores, "scores")
    if arr.ndim != 1:
        raise DimensionMismatchError("scores must be 1-D")
    if arr.size == 0:
        raise EmptyInputError("scores must be nonempty")
    if not (tau > 0.0):
        raise ValueError(f"temperature must be positive, got {tau!r}")
    z = tau * arr
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def stddev(x) -> float:
    """Population standard deviation (divide by the count, not count-1).

    The inputs form a complete, fixed set of values, so the population
    convention applies; a single value or a constant array gives 0.
    """
    arr = _as_f64(x, "values")
    if arr.ndim != 1:
        raise DimensionMismatchError("values must be 1-D")
    if arr.size == 0:
        raise EmptyInputError("stddev of empty input")
    # exact zero for constant input: the mean of n identical values can
    # round away from them, leaving a spurious ~1e-17 deviation
    if np.all(arr == arr[0]):
        return 0.0
    return float(np.std(arr))


def centroid(vs) -> np.ndarray:
    """Elementwise arithmetic mean of a stack of same-dimension vectors.

    The result is NOT renormalized: downstream scoring is cosine-based and
    therefore scale-invariant. The mean of opposing vectors can be the zero
    vector; consumers hit ZeroVectorError when they try to score it.
    """
    if isinstance(vs, np.ndarray) and vs.ndim == 2:
        mat = _as_f64(vs, "vectors")
    else:
        rows = [np.atleast_1d(_as_f64(v, "vector")) for v in vs]
        if not rows:
            raise EmptyInputError("centroid of empty input")
        dim = rows[0].shape
        for r in rows[1:]:
            if r.shape != dim:
                raise DimensionMismatchError(
                    f"mixed dimensions in centroid: {dim} vs {r.shape}"
                )
        mat = np.stack(rows)
    if mat.shape[0] == 0:
        raise EmptyInputError("centroid of empty input")
    return mat.mean(axis=0)
