import math

import numpy as np
import pytest

from pcarpet import scaling as S
from pcarpet.solver import SolverOptions


def test_lr_matches_fixture(p2_fixture):
    for n in (1, 2, 3):
        assert S.conductance_lr(n, 2.0) == pytest.approx(p2_fixture["conductance_lr"][n], rel=1e-10)


def test_point_family_level_one():
    assert S.conductance_lr(1, 2.0, "point") == pytest.approx(0.5, rel=1e-12)


def test_estimate_rho_table():
    t = S.estimate_rho(2.0, "lr", 1, 4)
    assert len(t.rows) == 4 and all(r.ok for r in t.rows)
    assert 1.0 < t.rho_hat_ratio < 1.5
    assert len(t.ratios) == 3
    assert t.beta_hat_ratio == pytest.approx(math.log(8 * t.rho_hat_ratio) / math.log(3))
    csv_lines = t.to_csv().strip().splitlines()
    assert csv_lines[0].startswith("family,p,n,value")
    assert len(csv_lines) == 5


def test_rows_fail_independently():
    def value(family, n, p, opts):
        if n == 2:
            raise RuntimeError("boom")
        return 1.0 / n

    t = S.estimate_rho(2.0, "lr", 1, 4, value_fn=value)
    bad = [r for r in t.rows if not r.ok]
    assert [r.n for r in bad] == [2] and "boom" in bad[0].error
    assert t.ratios == [pytest.approx(4 / 3)]


def test_estimate_rho_validates():
    with pytest.raises(ValueError):
        S.estimate_rho(2.0, "lr", 1, 2)
    with pytest.raises(ValueError):
        S.estimate_rho(2.0, "bogus", 1, 4)


def test_submultiplicativity_is_finite():
    t = S.estimate_rho(2.0, "lr", 1, 4)
    assert np.isfinite(t.submultiplicativity)


def test_chain_bounds():
    c3 = S.conductance_chain(2, 3, 2.0)
    c4 = S.conductance_chain(2, 4, 2.0)
    assert c3 <= S.conductance_lr(2, 2.0)
    assert c4 <= c3


def test_half_chain():
    chk = S.half_chain_check(2, 1, 2.0)
    assert chk.min_left_half >= 0.5


def test_neighborhood_level_one():
    r = S.conductance_neighborhood(1, 2.0, 1)
    assert r.value > 0 and r.witness and r.is_lower_bound
    assert sum(c["size"] for c in r.classes) == 8


def test_point_resistance_cycle():
    from pcarpet.graphs import build_point_graph

    g = build_point_graph(1)
    x, y = g.point(0), g.point(1)
    assert S.point_resistance(1, x, y, 2.0) == pytest.approx(7 / 8)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_hn_identity_and_traces(p):
    h = S.build_hn(3, 1, p)
    assert h.identity_error <= 1e-12
    v = h.function.values
    g = h.graph
    np.testing.assert_allclose(v[g.subset("left")], 1.0, atol=1e-12)
    np.testing.assert_allclose(v[g.subset("right")], 0.0, atol=1e-12)
    assert v.min() >= -1e-12 and v.max() <= 1 + 1e-12


def test_hn_rejects_bad_k():
    with pytest.raises(ValueError):
        S.build_hn(2, 2, 2.0)


def test_strictness_small():
    r = S.strictness_gap(3, 2.0)
    assert r.gap > 0
