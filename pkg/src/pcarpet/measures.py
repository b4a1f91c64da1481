"""Finite-level measures on the carpet: point measures, energy measures, Besov-type sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import carpet as geo
from ._validation import check_function, check_level, check_p
from .carpet import N_SYMBOLS, Word
from .energy import average_points_to_cells, edge_energies, point_cell_membership
from .graphs import GraphError, PointGraph, build_point_graph, point_symmetry_permutation

ALPHA = math.log(8.0) / math.log(3.0)


# ------------------------------------------------------------ mu_n

@dataclass
class DiscreteMeasure:
    """Uniform probability measure on the vertices of the simple point graph of level ``n``."""

    graph: PointGraph

    @property
    def n(self) -> int:
        return self.graph.level

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.graph.n_vertices, 1.0 / self.graph.n_vertices)

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    def cell_masses(self, level: int, mode: str = "closed") -> np.ndarray:
        """Mass of each level cell (rank order).

        ``closed`` counts every vertex of the closed cell, so shared boundary
        vertices are counted in each cell and the masses sum to more than one.
        ``partition`` splits a shared vertex evenly among its cells.
        """
        v, w = point_cell_membership(self.graph, level)
        size = N_SYMBOLS ** level
        if mode == "closed":
            counts = np.bincount(w, minlength=size).astype(np.float64)
        elif mode == "partition":
            mult = np.bincount(v, minlength=self.graph.n_vertices).astype(np.float64)
            counts = np.bincount(w, weights=1.0 / mult[v], minlength=size)
        else:
            raise ValueError("mode must be 'closed' or 'partition'")
        return counts / self.graph.n_vertices

    def pushforward(self, t) -> np.ndarray:
        """Weights of ``mu_n o T``; equal to ``weights`` since the vertex set is ``T``-invariant."""
        return self.weights[point_symmetry_permutation(self.graph, t)]


def discrete_measure(n: int) -> DiscreteMeasure:
    return DiscreteMeasure(build_point_graph(check_level(n), "simple"))


def predicted_cell_mass(n: int, m: int) -> float:
    """Closed-cell mass of a level-``m`` cell under ``mu_n`` (``m < n``) from the vertex-count formula."""
    if not 0 <= m < n:
        raise ValueError("need 0 <= m < n")
    return _count(n - m) / _count(n)


def _count(n: int) -> int:
    return (12 * 8 ** (n - 1) + 8 * 3 ** (n - 1)) // 5


# ------------------------------------------------------- energy measures

@dataclass
class CellMeasure:
    level: int
    masses: np.ndarray
    rho: float = 1.0
    p: float = 2.0

    @property
    def total(self) -> float:
        return math.fsum(self.masses)

    def mass(self, w: Word | str) -> float:
        w = Word.parse(w)
        if w.level != self.level:
            raise ValueError("word level differs from the measure level")
        return float(self.masses[w.index])

    def aggregate(self, level: int) -> "CellMeasure":
        """Masses of the coarser cells obtained by summing over children."""
        if level > self.level:
            raise ValueError("can only aggregate to a coarser level")
        k = N_SYMBOLS ** (self.level - level)
        m = np.array([math.fsum(r) for r in self.masses.reshape(-1, k)])
        return CellMeasure(level, m, self.rho, self.p)

    def to_json(self) -> dict:
        entries = [[str(Word.from_index(i, self.level)), float(v)] for i, v in enumerate(self.masses)]
        return {"level": self.level, "rho": self.rho, "p": self.p, "entries": entries,
                "total": self.total}


def energy_measure(g: PointGraph, f, cell_level: int, p: float, rho: float = 1.0) -> CellMeasure:
    """``mass(w) = rho^(n+m) * sum of |df|^p over the edges inside K_w`` for ``w`` in ``W_n``.

    Here the graph has level ``n + m``.  The edges owned by ``K_w`` are exactly the
    edges of the copy ``F_w(G_m)``, so ``mass(w) = rho^n * rho^m * E_p(F_w^* f)``.
    """
    p = check_p(p)
    if not isinstance(g, PointGraph) or g.kind != "modified":
        raise GraphError("energy measures live on the modified point graphs")
    n = int(cell_level)
    if not 0 <= n <= g.level - 1:
        raise ValueError("cell level must satisfy 0 <= n <= graph level - 1")
    e = edge_energies(g, f, p)
    owner = g.cell_of_edge // N_SYMBOLS ** (g.level - 1 - n)
    raw = np.zeros(N_SYMBOLS ** n)
    # exact per-cell sums, cell by cell in rank order
    order = np.argsort(owner, kind="stable")
    bounds = np.searchsorted(owner[order], np.arange(N_SYMBOLS ** n + 1))
    es = e[order]
    for i in range(N_SYMBOLS ** n):
        raw[i] = math.fsum(es[bounds[i]:bounds[i + 1]])
    return CellMeasure(n, rho ** g.level * raw, float(rho), p)


# ------------------------------------------------------------ chain rule

@dataclass
class ChainRuleLevel:
    level: int
    max_discrepancy: float
    mean_discrepancy: float
    band_low: float
    band_high: float


@dataclass
class ChainRuleReport:
    p: float
    levels: list

    def to_json(self) -> dict:
        return {"p": self.p, "levels": [vars(r) for r in self.levels]}


def chain_rule_check(g: PointGraph, f, phi, dphi, p: float, levels, rho: float = 1.0) -> ChainRuleReport:
    """Compare ``mass_{phi(f)}(w)`` with ``|phi'(f_w)|^p mass_f(w)`` cell by cell.

    ``f_w`` is the vertex average of ``f`` over the closed cell.  The band
    columns repeat the mean discrepancy with ``phi'`` taken at the cell minimum
    and maximum instead.
    """
    f = check_function(g, f)
    pf = np.asarray(phi(f), dtype=np.float64)
    rows = []
    for k in levels:
        mf = energy_measure(g, f, k, p, rho).masses
        mpf = energy_measure(g, pf, k, p, rho).masses
        v, w = point_cell_membership(g, k)
        size = N_SYMBOLS ** k
        avg = average_points_to_cells(g, f, k)
        lo = np.full(size, np.inf)
        hi = np.full(size, -np.inf)
        np.minimum.at(lo, w, f[v])
        np.maximum.at(hi, w, f[v])
        # cells whose mass is at rounding level carry no relative information
        live = mf > 1e-12 * max(mf.max(), 1e-300)

        def disc(at):
            pred = np.abs(np.asarray(dphi(at), dtype=np.float64)) ** p * mf
            d = np.abs(mpf - pred)
            rel = np.where(live, d / np.maximum(pred, 1e-300), 0.0)
            mean = math.fsum(d[live]) / max(math.fsum(pred[live]), 1e-300)
            return rel, mean

        rel, mean = disc(avg)
        _, m_lo = disc(lo)
        _, m_hi = disc(hi)
        rows.append(ChainRuleLevel(int(k), float(rel[live].max()) if live.any() else 0.0,
                                   mean, min(m_lo, m_hi), max(m_lo, m_hi)))
    return ChainRuleReport(float(p), rows)


# ----------------------------------------------------------------- Besov

BESOV_C = 3.0 * math.sqrt(2.0)


@numba.njit(cache=True)
def _ball_sums(xy, f, r2, cell, p):
    n = xy.shape[0]
    # bucket the points on a grid of side ``cell`` and sort them by bucket
    bx = xy[:, 0] // cell
    by = xy[:, 1] // cell
    x0 = bx.min()
    y0 = by.min()
    nx = bx.max() - x0 + 1
    ny = by.max() - y0 + 1
    key = (bx - x0) * ny + (by - y0)
    order = np.argsort(key)
    xs = np.empty(n, dtype=np.int64)
    ys = np.empty(n, dtype=np.int64)
    fs = np.empty(n)
    for k in range(n):
        xs[k] = xy[order[k], 0]
        ys[k] = xy[order[k], 1]
        fs[k] = f[order[k]]
    start = np.zeros(nx * ny + 1, dtype=np.int64)
    for i in range(n):
        start[key[i] + 1] += 1
    for k in range(nx * ny):
        start[k + 1] += start[k]
    out_sum = np.zeros(n)
    out_cnt = np.zeros(n, dtype=np.int64)
    for ii in range(n):
        i = order[ii]
        xi = xs[ii]
        yi = ys[ii]
        fi = fs[ii]
        cx = bx[i] - x0
        cy = by[i] - y0
        s = 0.0
        c = 0
        for ix in range(max(cx - 1, 0), min(cx + 2, nx)):
            lo = ix * ny + max(cy - 1, 0)
            hi = ix * ny + min(cy + 2, ny)
            for j in range(start[lo], start[hi]):
                dx = xi - xs[j]
                dy = yi - ys[j]
                if dx * dx + dy * dy <= r2:
                    t = abs(fi - fs[j])
                    if p == 2.0:
                        s += t * t
                    else:
                        s += t ** p
                    c += 1
        out_sum[i] = s
        out_cnt[i] = c
    return out_sum, out_cnt


@dataclass
class BesovReport:
    p: float
    beta: float
    n: int
    value: float
    c_radius: float
    m: int

    def to_json(self) -> dict:
        return dict(vars(self))


def besov_inner(g: PointGraph, f, p: float, n: int, c: float = BESOV_C) -> float:
    """``integral of the ball average of |f(x) - f(y)|^p`` for radius ``c 3^-n`` under ``mu_m``."""
    f = check_function(g, f)
    m = g.level
    # integer units of 1 / (4 3^m): radius c 3^-n becomes 4 c 3^(m-n)
    if c == BESOV_C:
        r2 = 288 * 9 ** (m - n)  # (4 * 3 sqrt 2 * 3^(m-n))^2, exact
    else:
        r2 = int(math.floor((4 * c * 3.0 ** (m - n)) ** 2))
    cell = max(int(math.isqrt(r2)) + 1, 1)
    s, cnt = _ball_sums(np.ascontiguousarray(g.xy, dtype=np.int64), f, r2, cell, float(p))
    return float(math.fsum(s / cnt) / g.n_vertices)


def besov_seminorm(g: PointGraph, f, p: float, beta: float, n: int,
                   c: float = BESOV_C) -> BesovReport:
    """``A_{p,beta}^(n)(f) = 3^(beta n) * besov_inner``, discretized with ``mu_m`` in both slots."""
    p = check_p(p)
    if not isinstance(g, PointGraph) or g.kind != "simple":
        raise GraphError("besov_seminorm expects a function on the simple point graph")
    if not g.level > n:
        raise ValueError("need m > n")
    val = 3.0 ** (beta * n) * besov_inner(g, f, p, n, c)
    return BesovReport(float(p), float(beta), int(n), val, c, g.level)


@dataclass
class CriticalExponent:
    p: float
    m: int
    levels: list
    inner: list
    beta_critical: float
    bracket: tuple
    beta_grid: list
    slopes: list

    def to_json(self) -> dict:
        return dict(vars(self))


def critical_exponent(g: PointGraph, f, p: float, levels, beta_grid=None,
                      c: float = BESOV_C) -> CriticalExponent:
    """Locate the ``beta`` at which ``A_{p,beta}^(n)`` switches from decaying to growing in ``n``.

    ``log A_{p,beta}^(n) = beta n log 3 + log A_{p,0}^(n)``, so the switch sits at
    ``-slope / log 3`` where ``slope`` is the least-squares slope of ``log A_{p,0}^(n)``.
    The grid bracket lists the last decaying and first growing grid value.
    """
    levels = [int(n) for n in levels]
    inner = [besov_inner(g, f, p, n, c) for n in levels]
    slope = float(np.polyfit(levels, np.log(inner), 1)[0])
    bc = -slope / math.log(3.0)
    if beta_grid is None:
        beta_grid = np.round(np.arange(1.0, 4.0001, 0.05), 10)
    slopes = [slope + b * math.log(3.0) for b in beta_grid]
    below = [b for b, s in zip(beta_grid, slopes) if s <= 0]
    above = [b for b, s in zip(beta_grid, slopes) if s > 0]
    bracket = (max(below) if below else math.nan, min(above) if above else math.nan)
    return CriticalExponent(float(p), g.level, levels, inner, bc,
                            (float(bracket[0]), float(bracket[1])),
                            [float(b) for b in beta_grid], slopes)


# ---------------------------------------------------------------- Hölder

@dataclass
class HolderReport:
    p: float
    beta_hat: float
    n: int
    max_ratio: float
    pairs: int

    def to_json(self) -> dict:
        return dict(vars(self))


def holder_check(g: PointGraph, f, p: float, beta_hat: float, energy_value: float,
                 pairs: int = 20000, seed: int = 0) -> HolderReport:
    """``max |f(x) - f(y)|^p / (E * d(x, y)^(beta_hat - alpha))`` over sampled distinct pairs."""
    p = check_p(p)
    if not beta_hat > ALPHA:
        raise ValueError("beta_hat must exceed log 8 / log 3")
    f = check_function(g, f)
    rng = np.random.default_rng(seed)
    nv = g.n_vertices
    i = rng.integers(0, nv, pairs)
    j = rng.integers(0, nv, pairs)
    # always include the edges, where the distance is smallest
    i = np.r_[i, g.edges[:, 0]]
    j = np.r_[j, g.edges[:, 1]]
    keep = i != j
    i, j = i[keep], j[keep]
    xy = g.xy / (4.0 * 3 ** g.level)
    d = np.hypot(*(xy[i] - xy[j]).T)
    num = np.abs(f[i] - f[j]) ** p
    if energy_value <= 0:
        ratio = 0.0 if not num.any() else math.inf
    else:
        ratio = float(np.max(num / (energy_value * d ** (beta_hat - ALPHA))))
    return HolderReport(float(p), float(beta_hat), g.level, ratio, int(len(i)))
