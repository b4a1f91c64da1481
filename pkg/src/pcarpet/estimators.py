"""Estimator-style wrappers with ``fit`` / ``get_params``.

``X`` is a graph (or a level for the estimators that build their own graphs);
fitted attributes carry a trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_level, check_p
from .solver import SolverOptions, conductance_report


def _opts(tol, seed) -> SolverOptions:
    kw = {"seed": seed}
    if tol is not None:
        kw["tol_kkt"] = tol
    return SolverOptions(**kw)


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class PHarmonicSolver(BaseEstimator):
    """p-harmonic minimizer between two vertex subsets of a graph."""

    def __init__(self, p=2.0, source="left", sink="right", tol=None, seed=0):
        self.p = p
        self.source = source
        self.sink = sink
        self.tol = tol
        self.seed = seed

    def _subset(self, g, s):
        return g.subset(s) if isinstance(s, str) else np.asarray(s, dtype=np.int64)

    def fit(self, X, y=None):
        p = check_p(self.p)
        rep = conductance_report(X, self._subset(X, self.source), self._subset(X, self.sink), p,
                                 _opts(self.tol, self.seed))
        self.report_ = rep
        self.minimizer_ = rep.values
        self.conductance_ = rep.energy
        self.converged_ = rep.converged
        return self

    def transform(self, X=None):
        _check_fitted(self, "minimizer_")
        return self.minimizer_


class ScalingEstimator(BaseEstimator):
    """Fits the resistance scaling factor from a conductance family over a range of levels."""

    def __init__(self, p=2.0, family="lr", n_min=1, n_max=5, tol=None, seed=0, workers=1):
        self.p = p
        self.family = family
        self.n_min = n_min
        self.n_max = n_max
        self.tol = tol
        self.seed = seed
        self.workers = workers

    def fit(self, X=None, y=None):
        from .scaling import estimate_rho

        t = estimate_rho(check_p(self.p), self.family, self.n_min, self.n_max,
                         _opts(self.tol, self.seed), self.workers)
        self.table_ = t
        self.rho_ = t.rho_hat_ratio
        self.rho_fit_ = t.rho_hat_fit
        self.beta_ = t.beta_hat_ratio
        self.beta_fit_ = t.beta_hat_fit
        return self


class PoincareEstimator(BaseEstimator):
    """One of the Poincare constants (``sigma``, ``lambda``, ``lambda_star``) at level ``X``."""

    def __init__(self, kind="sigma", p=2.0, tol=None, seed=0):
        self.kind = kind
        self.p = p
        self.tol = tol
        self.seed = seed

    def fit(self, X, y=None):
        from . import poincare

        fns = {"sigma": poincare.sigma, "lambda": poincare.lambda_,
               "lambda_star": poincare.lambda_star}
        if self.kind not in fns:
            raise ValueError(f"kind must be one of {sorted(fns)}")
        res = fns[self.kind](check_level(int(X)), check_p(self.p), _opts(self.tol, self.seed))
        self.result_ = res
        self.value_ = res.value
        self.certificate_ = res.certificate.values
        return self


class BesovExponentEstimator(BaseEstimator):
    """Critical Besov exponent of a function on a simple point graph."""

    def __init__(self, p=2.0, levels=(2, 3, 4), beta_grid=None):
        self.p = p
        self.levels = levels
        self.beta_grid = beta_grid

    def fit(self, X, y):
        from .measures import critical_exponent

        res = critical_exponent(X, y, check_p(self.p), list(self.levels), self.beta_grid)
        self.result_ = res
        self.beta_ = res.beta_critical
        return self
