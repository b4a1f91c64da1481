"""(p,p)-Poincare constants of the cell graphs and their mutual ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_level, check_p
from .carpet import N_SYMBOLS, SYMMETRIES, symmetry_index_map
from .energy import GraphFunction
from .graphs import build_cell_graph, restrict_subgraph
from .scaling import conductance_lr
from .solver import (ConstraintSpec, SolverOptions, rayleigh_max, rayleigh_quotient,
                     solve_mean_constrained)


@dataclass
class PoincareResult:
    kind: str
    n: int
    p: float
    value: float
    certificate: GraphFunction
    is_lower_bound: bool = False
    converged: bool = True
    details: dict = field(default_factory=dict)

    def to_json(self, include_certificate: bool = True) -> dict:
        out = {"kind": self.kind, "n": self.n, "p": self.p, "value": self.value,
               "is_lower_bound": self.is_lower_bound, "converged": self.converged,
               "details": self.details}
        if include_certificate:
            out["certificate"] = self.certificate.to_json()
        else:
            out["certificate_ref"] = self.certificate.graph_id
        return out


def lambda_star(n: int, p: float, opts: SolverOptions | None = None) -> PoincareResult:
    """Dirichlet constant: ``1 / min { E_p(f) : f = 0 on the boundary, <f> = 1 }``."""
    p = check_p(p)
    n = check_level(n)
    if n < 2:
        raise ValueError("boundary exhausts vertex set for n < 2")
    g = build_cell_graph(n)
    cons = ConstraintSpec(zero_set=g.subset("boundary"))
    cons.add_mean(np.arange(g.n_vertices), 1.0, N_SYMBOLS ** -float(n))
    rep = solve_mean_constrained(g, cons, p, opts)
    return PoincareResult("lambda_star", n, p, 1.0 / rep.energy, rep.minimizer, False,
                          rep.converged, {"energy": rep.energy, "kkt_residual": rep.kkt_residual,
                                          "iterations": rep.iterations})


def sigma_graph(n: int):
    """Induced subgraph of ``G_{n+1}`` on ``1 W_n`` and ``8 W_n`` with the two blocks marked."""
    g = build_cell_graph(n + 1)
    block = N_SYMBOLS ** n
    keep = np.r_[np.arange(block), np.arange(7 * block, 8 * block)]
    sub = restrict_subgraph(g, keep)
    sub.subsets = {"A": np.arange(block), "B": np.arange(block, 2 * block)}
    return sub


def sigma_antisymmetry_error(n: int, f) -> float:
    """``max |f(8 . T_h(v)) - (1 - f(1 . v))|`` on the two-block graph."""
    f = np.asarray(getattr(f, "values", f), dtype=np.float64)
    block = N_SYMBOLS ** n
    perm = symmetry_index_map(SYMMETRIES["T_h"], n)
    return float(np.max(np.abs(f[block + perm] - (1.0 - f[:block]))))


def sigma(n: int, p: float, opts: SolverOptions | None = None, weight_scale: float = 1.0) -> PoincareResult:
    """``1 / min { E_p(f) : <f>_{1 W_n} = 1, <f>_{8 W_n} = 0 }`` on the two-block graph."""
    p = check_p(p)
    n = check_level(n)
    g = sigma_graph(n)
    nu = weight_scale * N_SYMBOLS ** -float(n + 1)
    cons = ConstraintSpec()
    cons.add_mean(g.subset("A"), 1.0, nu)
    cons.add_mean(g.subset("B"), 0.0, nu)
    rep = solve_mean_constrained(g, cons, p, opts)
    return PoincareResult("sigma", n, p, 1.0 / rep.energy, rep.minimizer, False, rep.converged,
                          {"energy": rep.energy, "kkt_residual": rep.kkt_residual,
                           "iterations": rep.iterations,
                           "antisymmetry_error": sigma_antisymmetry_error(n, rep.values)})


def lambda_(n: int, p: float, opts: SolverOptions | None = None) -> PoincareResult:
    """Best-found Rayleigh quotient with weights ``8^-n``; a lower bound unless ``p = 2``."""
    p = check_p(p)
    n = check_level(n)
    g = build_cell_graph(n)
    w = np.full(g.n_vertices, N_SYMBOLS ** -float(n))
    res = rayleigh_max(g, w, p, opts)
    return PoincareResult("lambda", n, p, res.value, res.certificate, p != 2, True,
                          {"restarts": res.restarts, "iterations": res.iterations,
                           "restart_values": res.values})


lambda_p = lambda_


def sigma_extension_quotient(n: int, p: float, sig: PoincareResult) -> float:
    """Rayleigh quotient on ``G_n`` of a test function built from the sigma certificate.

    The certificate is laid out on ``1 W_{n-1}`` and ``8 W_{n-1}`` and extended
    by zero; any test function bounds the supremum from below.
    """
    g = build_cell_graph(n)
    f = np.zeros(g.n_vertices)
    block = N_SYMBOLS ** (n - 1)
    vals = sig.certificate.values
    f[:block] = vals[:block]
    f[7 * block:] = vals[block:]
    return rayleigh_quotient(g, f, np.full(g.n_vertices, N_SYMBOLS ** -float(n)), p)


@dataclass
class RelationRow:
    n: int
    lam: float
    sigma: float
    lam_star: float
    c_lr: float
    sigma_over_lam_star_n2: float = math.nan

    @property
    def lam_over_sigma(self) -> float:
        return self.lam / self.sigma

    @property
    def lam_star_over_lam(self) -> float:
        return self.lam_star / self.lam

    @property
    def lam_times_c(self) -> float:
        return self.lam * self.c_lr


@dataclass
class RelationTable:
    p: float
    rows: list
    threshold: float = 4.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def spread(self, name: str) -> float:
        v = self.column(name)
        return float(v.max() / v.min())

    @property
    def spreads(self) -> dict:
        return {k: self.spread(k) for k in ("lam_over_sigma", "lam_star_over_lam", "lam_times_c")}

    def to_json(self) -> dict:
        return {
            "p": self.p, "threshold": self.threshold,
            "rows": [{"n": r.n, "lambda": r.lam, "sigma": r.sigma, "lambda_star": r.lam_star,
                      "c_lr": r.c_lr, "lambda_over_sigma": r.lam_over_sigma,
                      "lambda_star_over_lambda": r.lam_star_over_lam,
                      "lambda_times_c_lr": r.lam_times_c,
                      "sigma_over_lambda_star_n_plus_2": r.sigma_over_lam_star_n2}
                     for r in self.rows],
            "spreads": self.spreads,
            "within_threshold": {k: v <= self.threshold for k, v in self.spreads.items()},
        }


def relation_table(n_range, p: float, opts: SolverOptions | None = None,
                   lambda_star_cap: int | None = None, threshold: float = 4.0) -> RelationTable:
    """Per-level ratios of the Poincare constants and of ``lambda`` against ``C(L<->R)``.

    ``sigma^(n) / lambda_*^(n+2)`` is recorded when level ``n + 2`` does not exceed
    ``lambda_star_cap``.
    """
    p = check_p(p)
    levels = sorted(int(n) for n in n_range)
    cap = lambda_star_cap if lambda_star_cap is not None else max(levels)
    cache: dict[int, float] = {}

    def lam_star(k):
        if k not in cache:
            cache[k] = lambda_star(k, p, opts).value
        return cache[k]

    rows = []
    for n in levels:
        lam = lambda_(n, p, opts).value
        sig = sigma(n, p, opts).value
        ls = lam_star(n)
        c = conductance_lr(n, p, "cell", opts)
        extra = sig / lam_star(n + 2) if n + 2 <= cap else math.nan
        rows.append(RelationRow(n, lam, sig, ls, c, extra))
    return RelationTable(p, rows, threshold)
