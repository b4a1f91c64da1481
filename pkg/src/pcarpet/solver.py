"""Constrained minimization of discrete p-energies.

Every problem handled here has the form

    minimize  sum_e phi(f_i - f_j) - <s, f>
    subject to f = data on a fixed set, and a few linear mean constraints,

with ``phi(t) = |t|^p``.  The default method is a damped Newton iteration whose
steps solve a sparse bordered KKT system; for ``p < 2`` the kink at zero is
smoothed with ``(t^2 + eps^2)^(p/2)`` and ``eps`` is driven to a floor by
continuation.  A nonlinear Gauss-Seidel relaxation is kept for Dirichlet
problems on small graphs.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from ._validation import check_p, check_positive_weights, check_subset
from .energy import GraphFunction, energy, p_energy_gradient
from .graphs import Graph


class SolverError(ValueError):
    pass


class UnderdeterminedError(SolverError):
    pass


class InfeasibleError(SolverError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tol_energy_rel: float = 1e-10
    tol_kkt: float = 1e-8
    max_sweeps: int = 100_000
    smoothing_eps: float = 1e-3
    eps_floor: float = 1e-12
    eps_decay: float = 0.1
    seed: int = 0
    restarts: int = 8
    method: str = "newton"
    max_newton: int = 500
    init: str = "default"
    rayleigh_iters: int = 300

    def __post_init__(self):
        for name in ("tol_energy_rel", "tol_kkt", "smoothing_eps", "eps_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.eps_decay < 1:
            raise ValueError("eps_decay must lie in (0, 1)")
        if self.method not in ("newton", "gauss-seidel"):
            raise ValueError("method must be 'newton' or 'gauss-seidel'")
        if self.init not in ("default", "random", "bfs"):
            raise ValueError("init must be 'default', 'bfs' or 'random'")

    def replace(self, **kw) -> "SolverOptions":
        return dataclasses.replace(self, **kw)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class MeanConstraint:
    subset: np.ndarray
    weights: np.ndarray
    target: float


@dataclass
class ConstraintSpec:
    """Dirichlet data, weighted mean constraints and an optional zero set."""

    dirichlet: dict = field(default_factory=dict)
    mean_constraints: list = field(default_factory=list)
    zero_set: np.ndarray | None = None

    @classmethod
    def two_sets(cls, A, B, a: float = 1.0, b: float = 0.0) -> "ConstraintSpec":
        d = {int(v): float(b) for v in np.asarray(B).ravel()}
        d.update({int(v): float(a) for v in np.asarray(A).ravel()})
        return cls(dirichlet=d)

    def add_mean(self, subset, target: float, weights=None) -> "ConstraintSpec":
        subset = np.asarray(subset, dtype=np.int64).ravel()
        w = np.ones(len(subset)) if weights is None else np.asarray(weights, dtype=np.float64)
        if np.ndim(w) == 0:
            w = np.full(len(subset), float(w))
        self.mean_constraints.append(MeanConstraint(subset, w, float(target)))
        return self

    def fixed(self, n_vertices: int) -> tuple[np.ndarray, np.ndarray]:
        idx = np.fromiter(self.dirichlet.keys(), dtype=np.int64, count=len(self.dirichlet))
        val = np.fromiter(self.dirichlet.values(), dtype=np.float64, count=len(self.dirichlet))
        if self.zero_set is not None and len(self.zero_set):
            z = np.asarray(self.zero_set, dtype=np.int64).ravel()
            clash = np.isin(z, idx)
            if clash.any() and np.any(val[np.isin(idx, z)] != 0):
                raise InfeasibleError("zero set overlaps nonzero Dirichlet data")
            idx = np.r_[idx, z[~clash]]
            val = np.r_[val, np.zeros((~clash).sum())]
        if idx.size and (idx.min() < 0 or idx.max() >= n_vertices):
            raise SolverError("constraint vertex outside the graph")
        order = np.argsort(idx, kind="stable")
        return idx[order], val[order]


@dataclass
class SolveReport:
    minimizer: GraphFunction
    energy: float
    iterations: int
    kkt_residual: float
    converged: bool
    wall_ms: int
    options_echo: dict
    p: float = 2.0
    method: str = "newton"
    history: list = field(default_factory=list)
    multipliers: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return self.minimizer.values

    def to_json(self, include_values: bool = True) -> dict:
        out = {
            "p": self.p,
            "method": self.method,
            "energy": self.energy,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "wall_ms": self.wall_ms,
            "options_echo": self.options_echo,
            "seed": self.options_echo.get("seed"),
        }
        if include_values:
            out["minimizer"] = self.minimizer.to_json()
        return out


# ------------------------------------------------------------------ problem

class _Problem:
    """Reduced problem in the free variables."""

    def __init__(self, g: Graph, p: float, cons: ConstraintSpec, linear=None):
        self.g = g
        self.p = p
        n = g.n_vertices
        self.fixed_idx, self.fixed_val = cons.fixed(n)
        if len(np.unique(self.fixed_idx)) != len(self.fixed_idx):
            raise InfeasibleError("a vertex carries two Dirichlet values")
        free = np.ones(n, dtype=bool)
        free[self.fixed_idx] = False
        self.free = np.nonzero(free)[0]
        self.free_mask = free
        self.base = np.zeros(n)
        self.base[self.fixed_idx] = self.fixed_val
        D = g.incidence.tocsc()
        self.Df = D[:, self.free].tocsr()
        self.offset = D @ self.base
        # edges touching at least one free vertex
        self.linear = None if linear is None else np.asarray(linear, dtype=np.float64)[self.free]
        rows, rhs = [], []
        pos = -np.ones(n, dtype=np.int64)
        pos[self.free] = np.arange(len(self.free))
        for mc in cons.mean_constraints:
            sub = check_subset(g, mc.subset, "mean-constraint subset")
            w = np.asarray(mc.weights, dtype=np.float64)
            if len(w) != len(np.asarray(mc.subset).ravel()):
                raise SolverError("weights must align with the constraint subset")
            # aggregate weights per unique vertex
            ww = np.zeros(n)
            np.add.at(ww, np.asarray(mc.subset, dtype=np.int64).ravel(), w)
            ww = ww[sub]
            if not (ww > 0).all():
                raise SolverError("mean-constraint weights must be positive")
            total = ww.sum()
            a = ww / total
            fixed_part = float(a[~free[sub]] @ self.base[sub[~free[sub]]])
            keep = free[sub]
            row = np.zeros(len(self.free))
            row[pos[sub[keep]]] = a[keep]
            rows.append(row)
            rhs.append(mc.target - fixed_part)
        self.A = np.array(rows).reshape(len(rows), len(self.free))
        self.b = np.array(rhs, dtype=np.float64)
        if len(self.free) == 0:
            if self.A.shape[0] and np.abs(self.b).max() > 1e-12:
                raise InfeasibleError("constraints fix every vertex inconsistently")
        elif self.A.shape[0]:
            if np.linalg.matrix_rank(self.A) < self.A.shape[0]:
                if np.abs(self._project(np.zeros(len(self.free)))[1]).max() > 1e-9:
                    raise InfeasibleError("mean constraints are inconsistent")
        self._check_determined()

    def _check_determined(self):
        if len(self.free) == 0:
            return
        sub = self.g.adjacency[self.free][:, self.free]
        ncomp, lab = connected_components(sub, directed=False)
        anchored = np.zeros(ncomp, dtype=bool)
        if len(self.fixed_idx):
            touch = np.asarray(self.g.adjacency[self.free][:, self.fixed_idx].sum(axis=1)).ravel() > 0
            anchored[np.unique(lab[touch])] = True
        for row in self.A:
            anchored[np.unique(lab[row != 0])] = True
        if not anchored.all():
            raise UnderdeterminedError("underdetermined component: a free component has no constraint")

    def _project(self, u):
        if not self.A.shape[0]:
            return u, np.zeros(0)
        r = self.b - self.A @ u
        corr, *_ = np.linalg.lstsq(self.A @ self.A.T, r, rcond=None)
        u = u + self.A.T @ corr
        return u, self.b - self.A @ u

    def full(self, u) -> np.ndarray:
        f = self.base.copy()
        f[self.free] = u
        return f

    def diffs(self, u):
        return self.Df @ u + self.offset


def _phi(d, p, eps):
    if eps > 0:
        return (d * d + eps * eps) ** (p / 2)
    return np.abs(d) ** p


def _dphi(d, p, eps):
    if eps > 0:
        return p * d * (d * d + eps * eps) ** (p / 2 - 1)
    return p * np.sign(d) * np.abs(d) ** (p - 1)


def _d2phi(d, p, eps, delta):
    if eps > 0:
        s = d * d + eps * eps
        return p * s ** (p / 2 - 2) * ((p - 1) * d * d + eps * eps)
    if p == 2:
        return np.full_like(d, 2.0)
    # p > 2: curvature vanishes with d; a floor keeps the step system definite
    return p * (p - 1) * np.maximum(np.abs(d), delta) ** (p - 2)


def _objective(prob: _Problem, u, eps):
    val = float(np.sum(_phi(prob.diffs(u), prob.p, eps)))
    if prob.linear is not None:
        val -= float(prob.linear @ u)
    return val


def _gradient(prob: _Problem, u, d, eps):
    g = prob.Df.T @ _dphi(d, prob.p, eps)
    if prob.linear is not None:
        g = g - prob.linear
    return g


def _projected(prob: _Problem, g):
    if not prob.A.shape[0]:
        return g, np.zeros(0)
    mu, *_ = np.linalg.lstsq(prob.A.T, g, rcond=None)
    return g - prob.A.T @ mu, mu


def _kkt_solve(H: sp.csr_matrix, A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    k = A.shape[0]
    if k == 0:
        lu = spla.splu(H.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        return lu.solve(rhs)
    As = sp.csr_matrix(A)
    K = sp.bmat([[H, As.T], [As, None]], format="csc")
    lu = spla.splu(K, permc_spec="COLAMD")
    sol = lu.solve(np.r_[rhs, np.zeros(k)])
    return sol[:H.shape[0]]


def _kkt_noise_floor(prob: _Problem, u, eps) -> float:
    # rounding in f_i - f_j is amplified by the curvature of phi near 0, so
    # the smoothed gradient cannot be resolved below this level in float64
    scale = max(float(np.abs(u).max()) if len(u) else 0.0, float(np.abs(prob.base).max()), 1.0)
    p = prob.p
    curv = p * (p - 1) * (2 * scale) ** max(p - 2, 0.0)
    if eps > 0 and p < 2:
        curv = max(curv, p * eps ** (p - 2))
    deg = float(prob.g.degrees.max()) if prob.g.n_vertices else 1.0
    return 16 * np.finfo(float).eps * scale * curv * deg


def _newton_stage(prob: _Problem, u, eps, opts: SolverOptions, history, tol_kkt):
    p = prob.p
    it = 0
    J = _objective(prob, u, eps)
    delta_rel = 1e-2
    status = False
    kkt = math.inf
    stall = 0
    while it < opts.max_newton:
        d = prob.diffs(u)
        g = _gradient(prob, u, d, eps)
        pg, _ = _projected(prob, g)
        kkt = float(np.abs(pg).max()) if len(pg) else 0.0
        tol_kkt = max(tol_kkt, _kkt_noise_floor(prob, u, eps))
        scale = float(np.abs(d).max()) if len(d) else 0.0
        delta = max(delta_rel * scale, 1e-300)
        w = _d2phi(d, p, eps, delta)
        H = (prob.Df.T @ sp.diags(w) @ prob.Df).tocsr()
        try:
            step = _kkt_solve(H, prob.A, -g)
        except RuntimeError:
            # singular pivot: regularize lightly and retry
            H = H + sp.identity(H.shape[0]) * (1e-12 * (w.max() if len(w) else 1.0))
            step = _kkt_solve(H.tocsr(), prob.A, -g)
        slope = float(g @ step)
        if not slope < 0:
            step = -pg
            slope = float(g @ step)
        if kkt <= tol_kkt and -slope <= 2 * opts.tol_energy_rel * max(abs(J), 1e-300):
            status = True
            break
        t = 1.0
        accepted = False
        for _ in range(60):
            u_new = u + t * step
            J_new = _objective(prob, u_new, eps)
            if J_new <= J + 1e-4 * t * slope:
                accepted = True
                break
            if (t == 1.0 and -slope <= 1e-10 * max(abs(J), 1e-300)
                    and J_new - J <= 64 * np.finfo(float).eps * abs(J)):
                # predicted decrease is below the resolution of J and J did not
                # move beyond rounding: take the full step
                accepted = True
                break
            t *= 0.5
        it += 1
        if not accepted:
            # no representable descent left; judge convergence on the KKT residual
            status = kkt <= tol_kkt
            break
        rel = (J - J_new) / max(abs(J), 1e-300)
        u, J = u_new, J_new
        history.append((eps, J))
        stall = stall + 1 if abs(rel) < 1e-15 and kkt > tol_kkt and t < 1.0 else 0
        if stall >= 5:
            status = kkt <= tol_kkt
            break
        delta_rel = max(delta_rel * 0.1, 1e-8)
        if rel <= opts.tol_energy_rel and kkt <= tol_kkt and t == 1.0:
            d = prob.diffs(u)
            pg, _ = _projected(prob, _gradient(prob, u, d, eps))
            kkt = float(np.abs(pg).max()) if len(pg) else 0.0
            if kkt <= tol_kkt:
                status = True
                break
    return u, it, kkt, status


# ------------------------------------------------------------ Gauss-Seidel

@numba.njit(cache=True)
def _gs_sweep(indptr, indices, f, free, linear, p, eps, sweeps_tol):
    maxchange = 0.0
    for k in range(free.shape[0]):
        v = free[k]
        lo = math.inf
        hi = -math.inf
        for jj in range(indptr[v], indptr[v + 1]):
            y = f[indices[jj]]
            if y < lo:
                lo = y
            if y > hi:
                hi = y
        s = linear[v]
        # widen the bracket until the monotone derivative changes sign
        width = max(hi - lo, 1.0)
        for _ in range(200):
            dlo = -s
            dhi = -s
            for jj in range(indptr[v], indptr[v + 1]):
                y = f[indices[jj]]
                a = lo - y
                b = hi - y
                if eps > 0:
                    dlo += p * a * (a * a + eps * eps) ** (p / 2 - 1)
                    dhi += p * b * (b * b + eps * eps) ** (p / 2 - 1)
                else:
                    dlo += p * np.sign(a) * abs(a) ** (p - 1)
                    dhi += p * np.sign(b) * abs(b) ** (p - 1)
            if dlo <= 0 and dhi >= 0:
                break
            if dlo > 0:
                lo -= width
            if dhi < 0:
                hi += width
            width *= 2
        t = f[v]
        if t < lo or t > hi:
            t = 0.5 * (lo + hi)
        for _ in range(100):
            g = -s
            h = 0.0
            for jj in range(indptr[v], indptr[v + 1]):
                a = t - f[indices[jj]]
                if eps > 0:
                    q = a * a + eps * eps
                    g += p * a * q ** (p / 2 - 1)
                    h += p * q ** (p / 2 - 2) * ((p - 1) * a * a + eps * eps)
                else:
                    g += p * np.sign(a) * abs(a) ** (p - 1)
                    if p != 2.0:
                        h += p * (p - 1) * abs(a) ** (p - 2) if a != 0 else 0.0
                    else:
                        h += 2.0
            if g > 0:
                hi = t
            else:
                lo = t
            if g == 0.0 or hi - lo <= sweeps_tol * (1.0 + abs(t)):
                break
            tn = t - g / h if h > 0 and np.isfinite(h) else 0.5 * (lo + hi)
            if not (lo < tn < hi):
                tn = 0.5 * (lo + hi)
            t = tn
        change = abs(t - f[v])
        if change > maxchange:
            maxchange = change
        f[v] = t
    return maxchange


def _gauss_seidel(prob: _Problem, f, eps, opts: SolverOptions, history, tol_kkt):
    if prob.A.shape[0]:
        raise SolverError("Gauss-Seidel handles Dirichlet problems only")
    a = prob.g.adjacency
    linear = np.zeros(prob.g.n_vertices)
    if prob.linear is not None:
        linear[prob.free] = prob.linear
    free = prob.free.astype(np.int64)
    E = _objective(prob, f[prob.free], eps)
    kkt = math.inf
    it = 0
    status = False
    while it < opts.max_sweeps:
        _gs_sweep(a.indptr, a.indices, f, free, linear, prob.p, eps, 1e-15)
        it += 1
        u = f[prob.free]
        E_new = _objective(prob, u, eps)
        history.append((eps, E_new))
        rel = (E - E_new) / max(abs(E), 1e-300)
        E = E_new
        if it % 10 == 0 or rel <= opts.tol_energy_rel:
            g = _gradient(prob, u, prob.diffs(u), eps)
            kkt = float(np.abs(g).max()) if len(g) else 0.0
            if kkt <= tol_kkt and rel <= opts.tol_energy_rel:
                status = True
                break
    return f, it, kkt, status


# ------------------------------------------------------------- entry point

def _initial(g: Graph, prob: _Problem, p: float, opts: SolverOptions, init=None) -> np.ndarray:
    if init is not None:
        f = np.asarray(init, dtype=np.float64).copy()
        if f.shape != (g.n_vertices,):
            raise SolverError("initial guess not aligned to the graph")
        f[prob.fixed_idx] = prob.fixed_val
        return f
    f = prob.base.copy()
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        lo = prob.fixed_val.min() if len(prob.fixed_val) else 0.0
        hi = prob.fixed_val.max() if len(prob.fixed_val) else 1.0
        if hi == lo:
            lo, hi = lo - 1.0, hi + 1.0
        f[prob.free] = rng.uniform(lo, hi, len(prob.free))
        return f
    if len(prob.fixed_idx):
        levels = np.unique(prob.fixed_val)
        if len(levels) == 1:
            f[prob.free] = levels[0]
        elif len(levels) == 2:
            da = g.bfs(prob.fixed_idx[prob.fixed_val == levels[0]]).astype(np.float64)
            db = g.bfs(prob.fixed_idx[prob.fixed_val == levels[1]]).astype(np.float64)
            ok = (da >= 0) & (db >= 0)
            t = np.where(ok, da / np.maximum(da + db, 1), 0.5)
            vals = levels[0] + (levels[1] - levels[0]) * t
            f[prob.free] = vals[prob.free]
        else:
            # nearest datum by graph distance
            best = np.full(g.n_vertices, np.iinfo(np.int64).max)
            for lv in levels:
                d = g.bfs(prob.fixed_idx[prob.fixed_val == lv])
                better = (d >= 0) & (d < best)
                best[better] = d[better]
                f[prob.free_mask & better] = lv
    else:
        for mc in getattr(prob, "_means", []):
            f[mc.subset] = mc.target
    return f


def _solve(g: Graph, p: float, cons: ConstraintSpec, opts: SolverOptions,
           linear=None, init=None) -> SolveReport:
    p = check_p(p)
    t0 = time.perf_counter()
    prob = _Problem(g, p, cons, linear)
    prob._means = cons.mean_constraints
    history: list = []
    if len(prob.free) == 0:
        f = prob.base.copy()
        return SolveReport(GraphFunction(g.graph_id, f), energy(g, f, p), 0, 0.0, True,
                           int(1000 * (time.perf_counter() - t0)), opts.to_json(), p, opts.method)
    f = _initial(g, prob, p, opts, init)
    if opts.method == "newton" and init is None and opts.init == "default" and p != 2:
        # warm start from the quadratic problem
        warm = _solve(g, 2.0, cons, opts.replace(method="newton"), linear=None if linear is None else linear)
        f = warm.values.copy()
        history.extend(warm.history)
    u, _ = prob._project(f[prob.free])
    total_it = 0
    stages = [0.0]
    if p < 2:
        stages = []
        eps = opts.smoothing_eps
        while eps > opts.eps_floor:
            stages.append(eps)
            eps *= opts.eps_decay
        stages.append(opts.eps_floor)
    status = False
    kkt = math.inf
    prev_e0 = None
    for k, eps in enumerate(stages):
        last = k == len(stages) - 1
        tol = opts.tol_kkt if last else max(opts.tol_kkt, 1e-3 * eps)
        stage_opts = opts if last else opts.replace(tol_energy_rel=max(opts.tol_energy_rel, 1e-8))
        if opts.method == "newton":
            u, it, kkt, status = _newton_stage(prob, u, eps, stage_opts, history, tol)
        else:
            f_full = prob.full(u)
            f_full, it, kkt, status = _gauss_seidel(prob, f_full, eps, stage_opts, history, tol)
            u = f_full[prob.free]
        total_it += it
        if p < 2 and not last:
            # J_0 at each stage minimizer is an upper bound on the true minimum;
            # once it stops moving, smaller eps only adds rounding noise
            e0 = energy(g, prob.full(u), p)
            if status and prev_e0 is not None and abs(prev_e0 - e0) <= opts.tol_energy_rel * e0:
                stages = stages[:k + 1]
                break
            prev_e0 = e0 if status else None
    f = prob.full(u)
    _, mu = _projected(prob, _gradient(prob, u, prob.diffs(u), stages[-1]))
    wall = int(1000 * (time.perf_counter() - t0))
    return SolveReport(GraphFunction(g.graph_id, f), energy(g, f, p), total_it, kkt, bool(status),
                       wall, opts.to_json(), p, opts.method, history, [float(m) for m in mu])


def solve_dirichlet(g: Graph, c: ConstraintSpec, p: float, opts: SolverOptions | None = None,
                    init=None) -> SolveReport:
    """p-harmonic extension of the Dirichlet data in ``c``."""
    opts = opts or SolverOptions()
    if c.mean_constraints:
        raise SolverError("solve_dirichlet takes Dirichlet data only; use solve_mean_constrained")
    if not c.dirichlet and (c.zero_set is None or not len(c.zero_set)):
        raise SolverError("Dirichlet set must be nonempty")
    return _solve(g, p, c, opts, init=init)


def conductance_report(g: Graph, A, B, p: float, opts: SolverOptions | None = None) -> SolveReport:
    A = check_subset(g, A, "A")
    B = check_subset(g, B, "B")
    if np.intersect1d(A, B).size:
        raise SolverError("A and B must be disjoint")
    return solve_dirichlet(g, ConstraintSpec.two_sets(A, B), p, opts)


def conductance(g: Graph, A, B, p: float, opts: SolverOptions | None = None) -> float:
    """``inf { E_p(f) : f = 1 on A, f = 0 on B }``."""
    return conductance_report(g, A, B, p, opts).energy


def solve_mean_constrained(g: Graph, c: ConstraintSpec, p: float,
                           opts: SolverOptions | None = None, init=None) -> SolveReport:
    """Minimize ``E_p`` over the affine set cut out by mean constraints and a zero set."""
    opts = opts or SolverOptions()
    if opts.method != "newton":
        raise SolverError("mean-constrained problems use the Newton method")
    if not c.mean_constraints and not c.dirichlet and (c.zero_set is None or not len(c.zero_set)):
        raise SolverError("at least one constraint is required")
    if init is None and opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        init = rng.uniform(-1, 1, g.n_vertices)
    return _solve(g, p, c, opts, init=init)


# --------------------------------------------------------------- Rayleigh

def rayleigh_quotient(g: Graph, f, weights, p: float) -> float:
    f = np.asarray(getattr(f, "values", f), dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    m = float(w @ f / w.sum())
    e = energy(g, f, p)
    if e == 0:
        return 0.0
    return float(math.fsum(np.abs(f - m) ** p * w)) / e


@dataclass
class RayleighResult:
    value: float
    certificate: GraphFunction
    restarts: int
    iterations: int
    values: list
    is_lower_bound: bool = True

    def to_json(self) -> dict:
        return {"value": self.value, "restarts": self.restarts, "iterations": self.iterations,
                "restart_values": self.values, "is_lower_bound": self.is_lower_bound,
                "certificate": self.certificate.to_json()}


def _numerator_gradient(f, w, p):
    m = w @ f / w.sum()
    r = f - m
    t = p * np.sign(r) * np.abs(r) ** (p - 1) * w
    return t - w * t.sum() / w.sum()


def _inverse_power(g: Graph, w: np.ndarray, p: float, f0: np.ndarray, opts: SolverOptions,
                   factor=None):
    f = f0 - w @ f0 / w.sum()
    best_q, best_f = rayleigh_quotient(g, f, w, p), f.copy()
    it = 0
    for it in range(1, opts.rayleigh_iters + 1):
        s = _numerator_gradient(f, w, p)
        if p == 2 and factor is not None:
            u = factor(s)
        else:
            cons = ConstraintSpec().add_mean(np.arange(g.n_vertices), 0.0, w)
            u = _solve(g, p, cons, opts.replace(init="default"), linear=s, init=f).values
        u = u - w @ u / w.sum()
        nrm = np.abs(u).max()
        if nrm == 0:
            break
        u = u / nrm
        q = rayleigh_quotient(g, u, w, p)
        f = u
        gain = (q - best_q) / max(best_q, 1e-300)
        if q > best_q:
            best_q, best_f = q, u.copy()
        if gain < opts.tol_energy_rel:
            break
    return best_q, best_f, it


def _laplacian_factor(g: Graph, w: np.ndarray):
    """Solver for ``L u = s`` with ``<s,1> = 0``, normalized to ``<u, w> = 0``."""
    L = g.laplacian().tocsr()
    n = g.n_vertices
    L2 = (2.0 * L).tolil()
    # pin vertex 0; the solution is then shifted to weighted mean zero
    L2[0, :] = 0
    L2[:, 0] = 0
    L2[0, 0] = 1.0
    lu = spla.splu(L2.tocsc())

    def solve(s):
        r = s.copy()
        r[0] = 0.0
        u = lu.solve(r)
        return u - w @ u / w.sum()

    return solve if n > 1 else None


def rayleigh_max(g: Graph, weights, p: float, opts: SolverOptions | None = None) -> RayleighResult:
    """Best-found value of ``sum |f - <f>|^p nu / E_p(f)`` (a lower bound on the supremum).

    Each restart runs the nonlinear inverse power iteration: given ``f`` the next
    iterate solves ``grad E_p(u) = grad N(f)`` where ``N`` is the numerator.  The
    quotient is nondecreasing along the iteration.
    """
    opts = opts or SolverOptions()
    p = check_p(p)
    w = check_positive_weights(g, weights)
    if g.n_vertices < 2:
        raise SolverError("need at least two vertices")
    if not g.is_connected():
        raise UnderdeterminedError("quotient is unbounded on a disconnected graph")
    rng = np.random.default_rng(opts.seed)
    factor = _laplacian_factor(g, w) if p == 2 else None
    starts = [g.bfs([0]).astype(np.float64)]
    starts += [rng.standard_normal(g.n_vertices) for _ in range(max(opts.restarts - 1, 0))]
    vals, best = [], (-1.0, None)
    iters = 0
    for f0 in starts:
        q, f, it = _inverse_power(g, w, p, f0, opts, factor)
        iters += it
        vals.append(q)
        if q > best[0]:
            best = (q, f)
    return RayleighResult(best[0], GraphFunction(g.graph_id, best[1]), len(starts), iters, vals)


def gradient_check(g: Graph, f, p: float, h: float = 1e-6) -> float:
    """Max relative error between the analytic gradient and central differences."""
    f = np.asarray(f, dtype=np.float64)
    grad = p_energy_gradient(g, f, p)
    fd = np.empty_like(grad)
    for i in range(len(f)):
        e = np.zeros_like(f)
        e[i] = h
        fd[i] = (energy(g, f + e, p) - energy(g, f - e, p)) / (2 * h)
    return float(np.max(np.abs(fd - grad)) / max(np.max(np.abs(grad)), 1e-300))
