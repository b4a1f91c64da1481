"""Conductance families across levels and estimators of the scaling factor."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import carpet as geo
from ._validation import check_level, check_p
from .carpet import N_SYMBOLS, SYMMETRIES, Word
from .energy import GraphFunction, energy, point_cell_membership, pullback_symmetry
from .graphs import (block_neighborhood, build_cell_graph, build_chain_graph, build_point_graph,
                     cell_centers, grid_to_word_index, word_index_to_grid)
from .solver import SolveReport, SolverOptions, conductance_report

LOG3 = math.log(3.0)

FAMILIES = ("lr", "point", "neighborhood")


# ------------------------------------------------------------- L <-> R

def lr_graph(n: int, family: str = "cell"):
    if family in ("cell", "lr"):
        return build_cell_graph(n)
    if family == "point":
        return build_point_graph(n, "modified")
    raise ValueError(f"unknown L-R graph family {family!r}")


def lr_solve(n: int, p: float, family: str = "cell", opts: SolverOptions | None = None):
    """Graph and L-R Dirichlet solve (1 on the left side, 0 on the right side)."""
    check_level(n)
    g = lr_graph(n, family)
    return g, conductance_report(g, g.subset("left"), g.subset("right"), p, opts)


def conductance_lr(n: int, p: float, graph_family: str = "cell",
                   opts: SolverOptions | None = None) -> float:
    return lr_solve(n, p, graph_family, opts)[1].energy


# ------------------------------------------------------- neighbourhoods

def _window_pattern(col: int, row: int, m: int) -> np.ndarray:
    side = 3 ** m
    pat = np.zeros((5, 5), dtype=bool)
    for dc in range(-2, 3):
        for dr in range(-2, 3):
            c, r = col + dc, row + dr
            if 0 <= c < side and 0 <= r < side:
                pat[dr + 2, dc + 2] = geo.is_carpet_cell(c, r, m)
    return pat


def _canonical(pat: np.ndarray) -> bytes:
    forms = []
    q = pat
    for _ in range(4):
        forms.append(q.tobytes())
        forms.append(q.T.tobytes())
        q = np.rot90(q)
    return min(forms)


def neighborhood_patterns(m: int) -> dict[bytes, list[int]]:
    """Word ranks of ``W_m`` grouped by the symmetry class of their 5x5 cell window.

    The 1-neighbourhood problem for ``w`` only sees the cells within two steps
    of ``w``, so words in one class give the same conductance.
    """
    classes: dict[bytes, list[int]] = {}
    cols, rows = word_index_to_grid(np.arange(N_SYMBOLS ** m), m)
    for idx, (c, r) in enumerate(zip(cols, rows)):
        key = _canonical(_window_pattern(int(c), int(r), m))
        classes.setdefault(key, []).append(idx)
    return classes


def neighborhood_conductance_word(w: Word | str, n: int, p: float, g=None,
                                  opts: SolverOptions | None = None) -> float:
    w = Word.parse(w)
    m = w.level
    if g is None:
        g = build_cell_graph(n + m)
    inner = g.vertices_of(w.index * N_SYMBOLS ** n + np.arange(N_SYMBOLS ** n))
    ball = g.vertices_of(block_neighborhood(w, 1, n))
    outside = np.setdiff1d(np.arange(g.n_vertices), ball)
    return conductance_report(g, inner, outside, p, opts).energy


@dataclass
class NeighborhoodResult:
    n: int
    p: float
    ambient_depth: int
    value: float
    witness: str
    classes: list = field(default_factory=list)
    is_lower_bound: bool = True

    def to_json(self) -> dict:
        return {"n": self.n, "p": self.p, "ambient_depth": self.ambient_depth, "value": self.value,
                "witness": self.witness, "classes": self.classes,
                "is_lower_bound": self.is_lower_bound}


def conductance_neighborhood(n: int, p: float, ambient_depth: int = 1,
                             opts: SolverOptions | None = None) -> NeighborhoodResult:
    """Max over ``w`` in ``W_m`` of ``C(w W_n, complement of B_n(w, 1))`` (``m = ambient_depth``)."""
    check_level(n)
    m = check_level(ambient_depth, 1, "ambient_depth")
    g = build_cell_graph(n + m)
    best, witness, rows = -math.inf, "", []
    for members in neighborhood_patterns(m).values():
        w = Word.from_index(members[0], m)
        val = neighborhood_conductance_word(w, n, p, g, opts)
        rows.append({"representative": str(w), "size": len(members), "value": val})
        if val > best:
            best, witness = val, str(w)
    rows.sort(key=lambda r: r["representative"])
    return NeighborhoodResult(n, float(p), m, best, witness, rows)


def neighborhood_family_value(n: int, p: float, opts: SolverOptions | None = None,
                              ambient_depth: int = 1) -> float:
    return conductance_neighborhood(n, p, ambient_depth, opts).value


# ---------------------------------------------------------------- chains

def chain_solve(n: int, M: int, p: float, opts: SolverOptions | None = None):
    g = build_chain_graph(n, M)
    return g, conductance_report(g, g.subset("left"), g.subset("right"), p, opts)


def conductance_chain(n: int, M: int, p: float, opts: SolverOptions | None = None) -> float:
    return chain_solve(n, M, p, opts)[1].energy


@dataclass
class HalfChainCheck:
    n: int
    k: int
    M: int
    p: float
    min_left_half: float
    holds: bool


def half_chain_check(n: int, k: int, p: float, opts: SolverOptions | None = None) -> HalfChainCheck:
    """Minimum of the chain minimizer over copies ``1 .. 2^(k-1)+1`` of the ``2^k + 2`` chain."""
    M = 2 ** k + 2
    g, rep = chain_solve(n, M, p, opts)
    f = rep.values
    left = np.concatenate([g.subset(f"copy{i}") for i in range(1, 2 ** (k - 1) + 2)])
    lo = float(f[left].min())
    return HalfChainCheck(n, k, M, float(p), lo, lo >= 0.5 - 1e-9)


# ---------------------------------------------------------- point pairs

def point_resistance(n: int, x: geo.LatticePoint, y: geo.LatticePoint, p: float,
                     opts: SolverOptions | None = None, kind: str = "modified") -> float:
    """``1 / C_p({x}, {y})`` on the point graph of level ``n``."""
    g = build_point_graph(n, kind)
    i, j = g.vertex_of(x), g.vertex_of(y)
    if i == j:
        raise ValueError("x and y must be distinct vertices")
    return 1.0 / conductance_report(g, [i], [j], p, opts).energy


# ------------------------------------------------------------- estimates

@dataclass
class ScalingRow:
    n: int
    value: float
    wall_ms: int
    ok: bool = True
    error: str = ""


@dataclass
class ScalingTable:
    p: float
    family: str
    rows: list
    options: dict = field(default_factory=dict)

    @property
    def good(self) -> list:
        return sorted((r for r in self.rows if r.ok), key=lambda r: r.n)

    @property
    def ratios(self) -> list:
        rs = self.good
        return [rs[i].value / rs[i + 1].value for i in range(len(rs) - 1)
                if rs[i + 1].n == rs[i].n + 1]

    @property
    def rho_hat_ratio(self) -> float:
        r = self.ratios
        return r[-1] if r else math.nan

    @property
    def rho_hat_fit(self) -> float:
        rs = self.good
        if len(rs) < 2:
            return math.nan
        n = np.array([r.n for r in rs], dtype=float)
        y = -np.log([r.value for r in rs])
        slope = np.polyfit(n, y, 1)[0]
        return float(math.exp(slope))

    @staticmethod
    def beta(rho: float) -> float:
        if not rho > 0:
            return math.nan
        return math.log(N_SYMBOLS * rho) / LOG3

    @property
    def beta_hat_ratio(self) -> float:
        return self.beta(self.rho_hat_ratio)

    @property
    def beta_hat_fit(self) -> float:
        return self.beta(self.rho_hat_fit)

    @property
    def beta_spread(self) -> float:
        return abs(self.beta_hat_ratio - self.beta_hat_fit)

    @property
    def submultiplicativity(self) -> float:
        """``max C^(n+m) / (C^(n) C^(m))`` over levels present in the table."""
        vals = {r.n: r.value for r in self.good}
        best = math.nan
        for a in vals:
            for b in vals:
                if a <= b and a + b in vals:
                    q = vals[a + b] / (vals[a] * vals[b])
                    best = q if math.isnan(best) else max(best, q)
        return best

    def flags(self, tol: float = 0.05) -> dict:
        rho = self.rho_hat_ratio
        return {"rho_le_1_plus_tol": bool(rho <= 1 + tol),
                "rho_gt_1": bool(rho > 1),
                "bound_3p_over_8": bool(rho >= 3 ** self.p / 8 * 0.9)}

    def to_json(self) -> dict:
        return {
            "p": self.p, "family": self.family,
            "rows": [vars(r) for r in sorted(self.rows, key=lambda r: r.n)],
            "ratios": self.ratios,
            "rho_hat_ratio": self.rho_hat_ratio, "rho_hat_fit": self.rho_hat_fit,
            "beta_hat_ratio": self.beta_hat_ratio, "beta_hat_fit": self.beta_hat_fit,
            "submultiplicativity": self.submultiplicativity,
            "flags": self.flags(), "options": self.options,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["family", "p", "n", "value", "ratio", "rho_ratio", "rho_fit",
                     "beta_ratio", "beta_fit", "wall_ms", "ok"])
        rs = sorted(self.rows, key=lambda r: r.n)
        vals = {r.n: r.value for r in rs if r.ok}
        for r in rs:
            ratio = vals[r.n] / vals[r.n + 1] if r.ok and r.n + 1 in vals else ""
            wr.writerow([self.family, repr(float(self.p)), r.n, repr(r.value) if r.ok else "",
                         repr(ratio) if ratio != "" else "", repr(self.rho_hat_ratio),
                         repr(self.rho_hat_fit), repr(self.beta_hat_ratio),
                         repr(self.beta_hat_fit), r.wall_ms, int(r.ok)])
        return buf.getvalue()


def family_value(family: str, n: int, p: float, opts: SolverOptions | None = None) -> float:
    if family == "lr":
        return conductance_lr(n, p, "cell", opts)
    if family == "point":
        return conductance_lr(n, p, "point", opts)
    if family == "neighborhood":
        return neighborhood_family_value(n, p, opts)
    raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")


def _row(family, n, p, opts, value_fn):
    t0 = time.perf_counter()
    try:
        v = value_fn(family, n, p, opts)
        ok = math.isfinite(v) and v > 0
        return ScalingRow(n, float(v), int(1000 * (time.perf_counter() - t0)), ok,
                          "" if ok else "nonpositive value")
    except Exception as exc:  # rows fail independently
        return ScalingRow(n, math.nan, int(1000 * (time.perf_counter() - t0)), False, str(exc))


def estimate_rho(p: float, family: str = "lr", n_min: int = 1, n_max: int = 5,
                 opts: SolverOptions | None = None, workers: int = 1,
                 value_fn=None) -> ScalingTable:
    """Values of a conductance family for ``n_min <= n <= n_max`` and the derived estimates."""
    p = check_p(p)
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    if n_max < n_min + 2:
        raise ValueError("need n_max >= n_min + 2")
    opts = opts or SolverOptions()
    value_fn = value_fn or family_value
    levels = list(range(n_min, n_max + 1))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(lambda n: _row(family, n, p, opts, value_fn), levels))
    else:
        rows = [_row(family, n, p, opts, value_fn) for n in levels]
    rows.sort(key=lambda r: r.n)
    return ScalingTable(p, family, rows, opts.to_json())


# ------------------------------------------------------ h_n and strictness

# value shift per column of level-1 cells: the left column keeps trace 1
_COLUMN_SHIFT = {0: 2.0, 1: 1.0, 2: 0.0}


def symmetrize_th(g, f) -> np.ndarray:
    """``(f + f o T_h) / 2`` on a point graph."""
    f = np.asarray(getattr(f, "values", f), dtype=np.float64)
    return 0.5 * (f + pullback_symmetry(g, f, SYMMETRIES["T_h"]))


def paste_columns(coarse, h: np.ndarray, fine) -> np.ndarray:
    """One step of the recursion: ``(h o F_i^{-1} + shift(column of i)) / 3`` on each level-1 cell."""
    verts, words = point_cell_membership(fine, 1)
    centers = cell_centers(1, fine.level)
    pre = coarse.lookup(fine.xy[verts] - centers[words])
    if (pre < 0).any():
        raise AssertionError("a level-1 cell of the finer graph is not a copy of the coarser graph")
    cols, _ = word_index_to_grid(words, 1)
    shift = np.array([_COLUMN_SHIFT[int(c)] for c in range(3)])[cols]
    vals = (h[pre] + shift) / 3.0
    out = np.full(fine.n_vertices, np.nan)
    lo = np.full(fine.n_vertices, np.inf)
    hi = np.full(fine.n_vertices, -np.inf)
    np.minimum.at(lo, verts, vals)
    np.maximum.at(hi, verts, vals)
    glue = float(np.max(hi - lo))
    if glue > 1e-12:
        raise AssertionError(f"inconsistent glue values across cells (gap {glue:.3e})")
    out[:] = lo
    return out


@dataclass
class HnResult:
    n: int
    k: int
    p: float
    function: GraphFunction
    energy: float
    base_energy: float
    expected_energy: float
    graph: object = None

    @property
    def identity_error(self) -> float:
        return abs(self.energy - self.expected_energy) / self.expected_energy


def build_hn(n: int, k: int, p: float, opts: SolverOptions | None = None) -> HnResult:
    """``k`` recursion steps on top of the symmetrized L-R minimizer of the level ``n - k`` point graph."""
    check_level(n)
    if not 0 <= k <= n - 1:
        raise ValueError("need 0 <= k <= n - 1")
    base_g, rep = lr_solve(n - k, p, "point", opts)
    h = symmetrize_th(base_g, rep.values)
    e0 = energy(base_g, h, p)
    g = base_g
    for level in range(n - k + 1, n + 1):
        fine = build_point_graph(level, "modified")
        h = paste_columns(g, h, fine)
        g = fine
    e = energy(g, h, p)
    expected = N_SYMBOLS ** k * 3.0 ** (-k * p) * e0
    return HnResult(n, k, float(p), GraphFunction(g.graph_id, h), e, e0, expected, g)


@dataclass
class StrictnessResult:
    n: int
    p: float
    c_n: float
    c_n_minus_2: float
    gap: float
    h2_energy: float

    def to_json(self) -> dict:
        return dict(vars(self))


def strictness_gap(n: int, p: float, opts: SolverOptions | None = None) -> StrictnessResult:
    """``1 - C(L,R; level n) / (64 * 3^(-2p) * C(L,R; level n-2))`` on the point graphs."""
    check_level(n, 3)
    c_n = conductance_lr(n, p, "point", opts)
    hn = build_hn(n, 2, p, opts)
    c_m = hn.base_energy
    gap = 1.0 - c_n / (64.0 * 3.0 ** (-2 * p) * c_m)
    return StrictnessResult(n, float(p), c_n, c_m, gap, hn.energy)
