"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_p(p) -> float:
    if not isinstance(p, numbers.Real) or not np.isfinite(p) or p <= 1:
        raise ValueError(f"exponent p must be a real number > 1, got {p!r}")
    return float(p)


def check_level(n, minimum: int = 1, name: str = "n") -> int:
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(n).__name__}")
    if n < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {n}")
    return int(n)


def check_function(g, f) -> np.ndarray:
    """Values of ``f`` as a float array aligned with ``g``'s vertices."""
    vals = getattr(f, "values", f)
    vals = np.asarray(vals, dtype=np.float64)
    if vals.ndim != 1 or len(vals) != g.n_vertices:
        raise ValueError(
            f"function of length {vals.shape} is not aligned to a graph with {g.n_vertices} vertices")
    if not np.isfinite(vals).all():
        raise ValueError("function values must be finite")
    return vals


def check_subset(g, subset, name: str = "subset") -> np.ndarray:
    idx = np.unique(np.asarray(subset, dtype=np.int64).ravel())
    if idx.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if idx[0] < 0 or idx[-1] >= g.n_vertices:
        raise ValueError(f"{name} contains indices outside the vertex set")
    return idx


def check_positive_weights(g, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 0:
        w = np.full(g.n_vertices, float(w))
    if len(w) != g.n_vertices or not (w > 0).all():
        raise ValueError("weights must be positive and aligned to the vertices")
    return w
