import math

import numpy as np
import pytest

from pcarpet import carpet as C
from pcarpet import measures as M
from pcarpet.energy import energy
from pcarpet.graphs import build_point_graph
from pcarpet.solver import conductance_report


def _harmonic(g, p=2.0):
    return conductance_report(g, g.subset("left"), g.subset("right"), p).values


@pytest.mark.parametrize("n", [2, 3, 4])
def test_discrete_measure_is_probability(n):
    mu = M.discrete_measure(n)
    assert mu.total == pytest.approx(1.0, rel=1e-12)
    assert M.discrete_measure(n).cell_masses(1, "partition").sum() == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("n,m", [(3, 1), (4, 2), (4, 3), (5, 4)])
def test_closed_cell_mass_matches_count_formula(n, m):
    masses = M.discrete_measure(n).cell_masses(m, "closed")
    np.testing.assert_allclose(masses, M.predicted_cell_mass(n, m), rtol=1e-12)


def test_predicted_mass_needs_coarser_cells():
    with pytest.raises(ValueError):
        M.predicted_cell_mass(3, 3)


@pytest.mark.parametrize("name", list(C.SYMMETRIES))
def test_measure_symmetric(name):
    mu = M.discrete_measure(3)
    np.testing.assert_array_equal(mu.pushforward(C.SYMMETRIES[name]), mu.weights)


def test_energy_measure_total_and_aggregation():
    g = build_point_graph(4)
    f = np.random.default_rng(2).uniform(size=g.n_vertices)
    rho = 1.25
    cm = M.energy_measure(g, f, 2, 2.0, rho)
    assert cm.total == pytest.approx(rho ** 4 * energy(g, f, 2.0), rel=1e-12)
    coarse = M.energy_measure(g, f, 1, 2.0, rho)
    np.testing.assert_allclose(cm.aggregate(1).masses, coarse.masses, rtol=1e-12)
    assert cm.aggregate(0).total == pytest.approx(cm.total, rel=1e-12)


def test_energy_measure_needs_modified_graph():
    g = build_point_graph(3, "simple")
    with pytest.raises(Exception):
        M.energy_measure(g, np.zeros(g.n_vertices), 1, 2.0)


def test_chain_rule_affine_is_exact():
    g = build_point_graph(3)
    f = _harmonic(g)
    rep = M.chain_rule_check(g, f, lambda t: 2 * t + 1, lambda t: 2 + 0 * t, 2.0, [1, 2])
    for row in rep.levels:
        assert row.max_discrepancy <= 1e-12


def test_chain_rule_discrepancy_shrinks():
    g = build_point_graph(5)
    f = _harmonic(g)
    rep = M.chain_rule_check(g, f, lambda t: t * t, lambda t: 2 * t, 2.0, [1, 2, 3])
    d = [r.mean_discrepancy for r in rep.levels]
    assert d[0] > d[1] > d[2]


def _besov_brute(g, f, p, n):
    xy = g.xy.astype(np.int64)
    r2 = 288 * 9 ** (g.level - n)
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
    ball = d2 <= r2
    diff = np.abs(f[:, None] - f[None, :]) ** p
    return float(np.mean((diff * ball).sum(1) / ball.sum(1)))


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_besov_inner_matches_brute_force(p):
    g = build_point_graph(4, "simple")
    f = np.random.default_rng(8).uniform(size=g.n_vertices)
    for n in (2, 3):
        assert M.besov_inner(g, f, p, n) == pytest.approx(_besov_brute(g, f, p, n), rel=1e-12)


def test_besov_requires_finer_graph():
    g = build_point_graph(3, "simple")
    with pytest.raises(ValueError):
        M.besov_seminorm(g, np.zeros(g.n_vertices), 2.0, 2.0, 3)


def test_besov_zero_for_constants():
    g = build_point_graph(4, "simple")
    r = M.besov_seminorm(g, np.ones(g.n_vertices), 2.0, 2.0, 2)
    assert r.value == 0.0


def test_critical_exponent_bracket():
    g = build_point_graph(5, "simple")
    ce = M.critical_exponent(g, _harmonic(g), 2.0, [2, 3])
    lo, hi = ce.bracket
    assert lo <= ce.beta_critical <= hi


def test_holder_ratio_finite():
    g = build_point_graph(4)
    f = _harmonic(g)
    e = energy(g, f, 2.0) * 1.25 ** 4
    rep = M.holder_check(g, f, 2.0, 2.09, e, pairs=2000)
    assert 0 < rep.max_ratio < math.inf
