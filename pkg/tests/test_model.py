import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from strategies import hierarchies
from sflrdt import (
    DomainError,
    LiftParams,
    ModelSpec,
    QuadratureGrid,
    psi_rd_bar,
    spherical_term,
    theta_recursion,
)
from sflrdt.model import psi_bar_parts, psi_bar_value, spherical_gradient

SQ2PI = np.sqrt(2 / np.pi)


def test_theta_level1():
    assert theta_recursion([1.0, 0.0], [1.0, 0.0], 0.5) == pytest.approx([1.0])


def test_theta_level2_table_point():
    th = theta_recursion([1, 0.5315, 0], [1, 1.0056, 0], 0.6941)
    assert th == pytest.approx([1.3882, 1.3882 - 1.0056 * (1 - 0.5315)], abs=1e-12)
    assert th[1] == pytest.approx(0.91708, abs=1e-5)


def test_theta_flat_level():
    th = theta_recursion([1, 1, 0], [1, 5.0, 0], 0.3)
    assert th[1] == th[0]


def test_theta_infeasible_names_level():
    with pytest.raises(DomainError) as err:
        theta_recursion([1, 0.2, 0], [1, 3.0, 0], 0.5)
    assert err.value.index == 2


def test_theta_negative_always_feasible():
    th = theta_recursion([1, 0.2, 0], [1, 30.0, 0], 0.01, s=-1)
    assert np.all(th < 0)


@given(hierarchies())
def test_theta_decreasing(h):
    p, _, c, g = h
    th = theta_recursion(p, c, g)
    for k in range(1, len(th)):
        if c[k] * (p[k - 1] - p[k]) > 1e-12 * th[k - 1]:
            assert th[k] < th[k - 1]


def test_spherical_level1():
    assert spherical_term([1, 0], [1, 0], 0.5) == pytest.approx(0.5)


def test_spherical_level2_merged():
    assert spherical_term([1, 1, 0], [1, 2.3, 0], 0.7, alpha=1.5) == pytest.approx(1.5 / (4 * 0.7))


@settings(max_examples=200)
@given(st.floats(0.0, 1.0), st.floats(0.01, 5.0), st.floats(0.01, 3.0), st.floats(0.1, 4.0))
def test_spherical_level2_closed_form(p2, c2, extra, alpha):
    g = 0.5 * c2 * (1 - p2) + extra
    got = spherical_term([1, p2, 0], [1, c2, 0], g, alpha=alpha)
    assert got == pytest.approx(oracles.spherical_r2(p2, c2, g, alpha), rel=1e-12)


def test_spherical_matches_nested_expectation():
    # frozen from oracles.spherical_nested (order 80 and 120)
    assert spherical_term([1, 0.6, 0.2, 0], [1, 1.5, 0.7, 0], 0.8) == pytest.approx(0.530202527427013, rel=1e-10)
    assert spherical_term([1, 0.85, 0.36, 0], [1, 2.68, 0.5, 0], 0.775) == pytest.approx(
        0.4954033091415896, rel=1e-10)


@given(hierarchies(levels=(2, 3, 4)), st.floats(0.2, 4.0))
def test_spherical_gradient_matches_differences(h, alpha):
    p, _, c, g = h
    dg, dp, dc = spherical_gradient(p, c, g, 1, alpha)
    f = lambda p_, c_, g_: spherical_term(p_, c_, g_, 1, alpha)
    eps = 1e-6
    num_g = (f(p, c, g + eps) - f(p, c, g - eps)) / (2 * eps)
    assert dg == pytest.approx(num_g, rel=1e-6, abs=1e-8)
    r = len(p) - 1
    for k in range(1, r):
        for vec, ana in ((p, dp), (c, dc)):
            up, dn = vec.copy(), vec.copy()
            up[k] += eps
            dn[k] -= eps
            args_up = (up, c, g) if vec is p else (p, up, g)
            args_dn = (dn, c, g) if vec is p else (p, dn, g)
            try:
                num = (f(*args_up) - f(*args_dn)) / (2 * eps)
            except DomainError:
                continue
            assert ana[k] == pytest.approx(num, rel=1e-6, abs=1e-7)


def test_r1_limits():
    params = LiftParams.replica_symmetric(1.0)
    pos = psi_rd_bar(params, ModelSpec(1, 1.0, 1))
    neg = psi_rd_bar(params, ModelSpec(-1, 1.0, 1))
    assert pos.free_energy == pytest.approx(SQ2PI + 1, abs=1e-12)
    assert neg.free_energy == pytest.approx(1 - SQ2PI, abs=1e-12)


def test_table1_level2_point():
    params = LiftParams.from_free(2, [0.5315], [0.6320], [1.0056], 0.6941)
    assert psi_rd_bar(params, ModelSpec(1, 1.0, 2)).free_energy == pytest.approx(1.7801, abs=5e-4)


def test_table1_level3_point():
    params = LiftParams.from_free(3, [0.8504, 0.36], [0.9160, 0.4427], [2.6825, 0.5044], 0.7752)
    assert psi_rd_bar(params, ModelSpec(1, 1.0, 3)).free_energy == pytest.approx(1.7788, abs=5e-4)


def test_collapse_limit():
    g = 0.63
    params = LiftParams(2, [1, 0.4, 0], [1, 0.7, 0], [1, 1e-9, 0], g)
    # with c_2 -> 0 only the r=1 structure survives
    expect = -(SQ2PI + g + 1.0 / (4 * g))
    assert psi_rd_bar(params, ModelSpec(1, 1.0, 2)).psi_bar == pytest.approx(expect, abs=1e-6)


@settings(max_examples=100)
@given(hierarchies(), st.floats(0.2, 4.0))
def test_sign_identity_and_parts(h, alpha):
    p, q, c, g = h
    # the identity is exact at any accuracy, so a fixed grid keeps draws cheap
    grid = QuadratureGrid(40, adaptive=False)
    params = LiftParams(len(p) - 1, p, q, c, g)
    neg = psi_rd_bar(params, ModelSpec(-1, alpha, params.r), grid)
    assert abs(neg.psi_bar + psi_bar_value(p, q, c, -g, 1, alpha, grid)) < 1e-12
    pos = psi_rd_bar(params, ModelSpec(1, alpha, params.r), grid)
    for res in (pos, neg):
        assert sum(res.parts.values()) == pytest.approx(res.psi_bar, rel=1e-12)
        assert res.free_energy == -res.psi_bar
    assert set(pos.parts) == {"quadratic_term", "binary_term", "gamma_term", "spherical_term"}


def test_parts_are_signed_pieces():
    p, q, c, g = [1, 0.5, 0], [1, 0.6, 0], [1, 1.0, 0], 0.7
    parts = psi_bar_parts(p, q, c, g, 1, 1.0)
    assert parts["gamma_term"] == -g
    assert parts["quadratic_term"] == pytest.approx(0.5 * (1 - 0.3) * 1.0)


def test_lift_params_validation():
    with pytest.raises(ValueError):
        LiftParams(2, [1, 0.5, 0], [1, 0.5], [1, 1, 0], 0.5)
    with pytest.raises(ValueError):
        LiftParams(2, [1, 0.5, 0.1], [1, 0.5, 0], [1, 1, 0], 0.5)
    with pytest.raises(ValueError):
        LiftParams(2, [1, 0.2, 0.5, 0][:3], [1, 0.5, 0], [1, 1, 0], 0.5)
    with pytest.raises(ValueError):
        LiftParams(1, [1, 0], [1, 0], [1, 0], -0.1)


def test_padded_and_modes():
    lifted = LiftParams.from_free(2, [0.5], [0.6], [1.0], 0.7).padded(0.4)
    assert lifted.r == 3
    assert list(lifted.p) == [1, 0.5, 0, 0]
    assert list(lifted.c) == [1, 1.0, 0.4, 0]
    assert ModelSpec(1, 1.0, 3, "partial").pinned_levels() == (3,)
    assert ModelSpec(1, 1.0, 3, "full").pinned_levels() == ()
    with pytest.raises(ValueError):
        ModelSpec(1, -1.0, 2)
    with pytest.raises(ValueError):
        ModelSpec(1, 1.0, 2, "mixed")
