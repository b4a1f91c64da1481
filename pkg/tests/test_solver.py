import numpy as np
import pytest

import oracles
from pcarpet import graphs as G
from pcarpet import solver as S
from pcarpet.energy import energy


def test_conductance_matches_dense_oracle(p2_fixture):
    for n in (1, 2, 3):
        g = G.build_cell_graph(n)
        c = S.conductance(g, g.subset("left"), g.subset("right"), 2.0)
        assert c == pytest.approx(p2_fixture["conductance_lr"][n], rel=1e-10)


def test_cycle_resistance():
    g = G.build_point_graph(1)
    c = S.conductance(g, [0], [1], 2.0)
    assert 1.0 / c == pytest.approx(7.0 / 8.0, rel=1e-12)


def test_constant_boundary_gives_constant():
    g = G.build_cell_graph(2)
    c = S.ConstraintSpec(dirichlet={int(v): 0.3 for v in g.subset("boundary")})
    rep = S.solve_dirichlet(g, c, 3.0)
    np.testing.assert_allclose(rep.values, 0.3, atol=1e-12)
    assert rep.energy == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("p", [1.2, 1.5, 2.0, 3.0, 4.0])
def test_range_within_data_hull(p):
    g = G.build_cell_graph(2)
    rep = S.conductance_report(g, g.subset("left"), g.subset("right"), p)
    assert rep.converged
    assert rep.values.min() >= -1e-12 and rep.values.max() <= 1 + 1e-12


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_newton_and_gauss_seidel_agree(p):
    g = G.build_cell_graph(2)
    A, B = g.subset("left"), g.subset("right")
    a = S.conductance_report(g, A, B, p)
    b = S.conductance_report(g, A, B, p, S.SolverOptions(method="gauss-seidel", tol_kkt=1e-9))
    assert a.energy == pytest.approx(b.energy, rel=1e-6)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_random_initializations_agree(p):
    g = G.build_cell_graph(2)
    c = S.ConstraintSpec.two_sets(g.subset("left"), g.subset("right"))
    rng = np.random.default_rng(4)
    runs = [S.solve_dirichlet(g, c, p, init=rng.uniform(0, 1, g.n_vertices)) for _ in range(2)]
    assert np.max(np.abs(runs[0].values - runs[1].values)) <= 1e-6


def test_sigma_type_instance_matches_kkt_oracle():
    g = G.build_cell_graph(2)
    A = np.arange(8)
    B = np.arange(8, 16)
    c = S.ConstraintSpec().add_mean(A, 1.0).add_mean(B, 0.0)
    rep = S.solve_mean_constrained(g, c, 2.0)
    L = oracles.laplacian(g.n_vertices, g.edges.tolist())
    assert 1.0 / rep.energy == pytest.approx(oracles.sigma_dense(L, A, B), rel=1e-9)


def test_monotone_in_sets():
    g = G.build_cell_graph(2)
    A, B = g.subset("left"), g.subset("right")
    small = S.conductance(g, A[:3], B, 2.5)
    big = S.conductance(g, A, B, 2.5)
    assert small <= big * (1 + 1e-10)


def test_rayleigh_matches_eigen_oracle(p2_fixture):
    g = G.build_cell_graph(2)
    r = S.rayleigh_max(g, np.full(64, 8.0 ** -2), 2.0)
    assert r.value == pytest.approx(p2_fixture["lambda"][2], rel=1e-8)


def test_rayleigh_invariances():
    g = G.build_cell_graph(2)
    w = np.full(64, 1 / 64)
    f = np.random.default_rng(0).standard_normal(64)
    q = S.rayleigh_quotient(g, f, w, 3.0)
    assert S.rayleigh_quotient(g, 2.5 * f + 7.0, w, 3.0) == pytest.approx(q, rel=1e-12)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_gradient_check(p):
    g = G.build_cell_graph(2)
    f = np.random.default_rng(1).uniform(size=64)
    assert S.gradient_check(g, f, p) <= 1e-5


def test_errors():
    g = G.build_cell_graph(1)
    with pytest.raises(S.SolverError):
        S.conductance(g, [0, 1], [1, 2], 2.0)
    with pytest.raises(S.SolverError):
        S.solve_dirichlet(g, S.ConstraintSpec(), 2.0)
    with pytest.raises(ValueError):
        S.SolverOptions(method="cg")
    c = S.ConstraintSpec(dirichlet={0: 1.0}, zero_set=np.array([0]))
    with pytest.raises(S.InfeasibleError):
        S.solve_dirichlet(g, c, 2.0)


def test_underdetermined_component():
    g = G.restrict_subgraph(G.build_cell_graph(2), [0, 1, 40])
    with pytest.raises(S.UnderdeterminedError):
        S.solve_dirichlet(g, S.ConstraintSpec(dirichlet={0: 1.0}), 2.0)


def test_report_json_echoes_options():
    g = G.build_cell_graph(1)
    rep = S.conductance_report(g, [0], [4], 2.0, S.SolverOptions(seed=3))
    data = rep.to_json()
    assert data["seed"] == 3 and data["options_echo"]["tol_kkt"] == 1e-8
    assert data["energy"] == pytest.approx(energy(g, rep.values, 2.0))
