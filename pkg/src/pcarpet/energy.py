"""Discrete p-energies and the elementary transformations that act on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import carpet as geo
from ._validation import check_function, check_p
from .carpet import N_SYMBOLS, Word
from .graphs import (CellGraph, Graph, GraphError, PointGraph, cell_symmetry_permutation,
                     grid_to_word_index, point_symmetry_permutation, word_index_to_grid)


@dataclass
class GraphFunction:
    """Values aligned to the canonical vertex order of the graph named by ``graph_id``."""

    graph_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.isfinite(self.values).all():
            raise ValueError("graph function values must be finite")

    def __len__(self):
        return len(self.values)

    def to_json(self) -> dict:
        return {"graph_ref": self.graph_id, "values": [float(v) for v in self.values]}

    @classmethod
    def from_json(cls, data: dict) -> "GraphFunction":
        return cls(data["graph_ref"], np.asarray(data["values"], dtype=np.float64))


@dataclass(frozen=True)
class EnergyValue:
    p: float
    raw: float
    rescale_exponent: int = 0
    rho: float = 1.0

    @property
    def rescaled(self) -> float:
        return self.rho ** self.rescale_exponent * self.raw

    def to_json(self) -> dict:
        return {"p": self.p, "raw": self.raw, "rescale_exponent": self.rescale_exponent,
                "rho": self.rho, "rescaled": self.rescaled}


def as_function(g: Graph, f) -> GraphFunction:
    if isinstance(f, GraphFunction):
        check_function(g, f.values)
        return f
    return GraphFunction(g.graph_id, check_function(g, f))


def edge_differences(g: Graph, f) -> np.ndarray:
    v = check_function(g, f)
    e = g.edges
    return v[e[:, 0]] - v[e[:, 1]]


def edge_energies(g: Graph, f, p: float) -> np.ndarray:
    return np.abs(edge_differences(g, f)) ** check_p(p)


def p_energy(g: Graph, f, p: float, rho: float = 1.0, rescale_exponent: int = 0) -> EnergyValue:
    """``(1/2) sum over ordered edges |f(x) - f(y)|^p`` with exactly rounded summation."""
    raw = math.fsum(edge_energies(g, f, p))
    return EnergyValue(float(p), raw, rescale_exponent, rho)


def energy(g: Graph, f, p: float) -> float:
    """Raw p-energy as a float; shorthand for ``p_energy(...).raw``."""
    return p_energy(g, f, p).raw


def p_energy_gradient(g: Graph, f, p: float) -> np.ndarray:
    """Gradient ``p * sum_y sign(f(x) - f(y)) |f(x) - f(y)|^(p-1)``; kinks contribute 0."""
    p = check_p(p)
    d = edge_differences(g, f)
    flux = p * np.sign(d) * np.abs(d) ** (p - 1)
    return g.incidence.T @ flux


def clamp_unit(f) -> np.ndarray:
    """Pointwise ``(f v 0) ^ 1``."""
    vals = f.values if isinstance(f, GraphFunction) else np.asarray(f, dtype=np.float64)
    return np.clip(vals, 0.0, 1.0)


def pullback_symmetry(g: Graph, f, t) -> np.ndarray:
    """``f ∘ T`` as a function on the same (T-invariant) graph."""
    vals = check_function(g, f)
    if isinstance(g, PointGraph):
        perm = point_symmetry_permutation(g, t)
    elif isinstance(g, CellGraph):
        perm = cell_symmetry_permutation(g, t)
    else:
        raise GraphError("symmetry pullback needs a cell or point graph")
    return vals[perm]


def _child_coordinates(coarse: PointGraph, w: Word, fine_level: int) -> np.ndarray:
    # F_w(x) for x in V(coarse) at denominator fine_level
    center = _cell_center(w, fine_level)
    return coarse.xy + center[None, :]


def _cell_center(w: Word, denom_level: int) -> np.ndarray:
    col, row = w.grid()
    f = 3 ** (denom_level - w.level)
    h = geo.half_width(denom_level)
    return np.array([-h + (4 * col + 2) * f, -h + (4 * row + 2) * f], dtype=np.int64)


def pullback_cell(fine: PointGraph, f, w: Word | str | int, coarse: PointGraph) -> np.ndarray:
    """``F_w^* f`` on ``coarse`` for ``f`` on ``fine`` (``fine.level = coarse.level + |w|``)."""
    if isinstance(w, int):
        w = Word((w,))
    w = Word.parse(w)
    vals = check_function(fine, f)
    if fine.level != coarse.level + w.level or fine.kind != coarse.kind:
        raise GraphError("pullback needs graphs of the same kind with levels differing by |w|")
    idx = fine.lookup(_child_coordinates(coarse, w, fine.level))
    if (idx < 0).any():
        raise AssertionError("F_w maps a vertex outside the finer point graph")
    return vals[idx]


def coarsen(f, source_level: int, target_level: int) -> np.ndarray:
    """Block averages ``P_{n+m,n} f(w) = mean of f over w W_m`` on full cell graphs."""
    vals = f.values if isinstance(f, GraphFunction) else np.asarray(f, dtype=np.float64)
    if target_level > source_level:
        raise ValueError("target level must not exceed the source level")
    if len(vals) != N_SYMBOLS ** source_level:
        raise ValueError("function is not aligned to W_source_level")
    m = source_level - target_level
    return vals.reshape(N_SYMBOLS ** target_level, N_SYMBOLS ** m).mean(axis=1)


def point_cell_membership(g: PointGraph, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(vertex, word rank)`` with the vertex in the closed level-``n`` cell.

    Vertices on shared cell boundaries appear once per containing cell.
    """
    if n > g.level:
        raise ValueError("cell level finer than the point graph denominator")
    h = geo.half_width(g.level)
    side = 4 * 3 ** (g.level - n)
    nside = 3 ** n
    x = g.xy[:, 0] + h
    y = g.xy[:, 1] + h
    verts, words = [], []
    for dx in (0, 1):
        cx = x // side - dx
        okx = (cx >= 0) & (cx < nside) & ((dx == 0) | (x % side == 0))
        for dy in (0, 1):
            cy = y // side - dy
            ok = okx & (cy >= 0) & (cy < nside) & ((dy == 0) | (y % side == 0))
            vi = np.nonzero(ok)[0]
            wi = grid_to_word_index(cx[vi], cy[vi], n)
            keep = wi >= 0
            verts.append(vi[keep])
            words.append(wi[keep])
    v = np.concatenate(verts)
    w = np.concatenate(words)
    order = np.lexsort((v, w))
    return v[order], w[order]


def average_points_to_cells(g: PointGraph, f, n: int) -> np.ndarray:
    """Proxy for ``M_n f``: unweighted mean of ``f`` over vertices in each closed level-``n`` cell."""
    vals = check_function(g, f)
    v, w = point_cell_membership(g, n)
    size = N_SYMBOLS ** n
    counts = np.bincount(w, minlength=size)
    if (counts == 0).any():
        raise ValueError("some cells contain no vertices; use a finer point graph")
    return np.bincount(w, weights=vals[v], minlength=size) / counts


def cell_sample(fn, level: int) -> np.ndarray:
    """Evaluate ``fn(x, y)`` (real coordinates) at the centers of all level cells."""
    col, row = word_index_to_grid(np.arange(N_SYMBOLS ** level), level)
    x = -0.5 + (col + 0.5) / 3 ** level
    y = -0.5 + (row + 0.5) / 3 ** level
    return np.asarray(fn(x, y), dtype=np.float64)


def coordinates(g: PointGraph) -> np.ndarray:
    """Real coordinates of the vertices of a point graph."""
    return g.xy / (4.0 * 3 ** g.level)
