import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

import oracles
from strategies import hierarchies
from sflrdt import (
    ArgumentError,
    QuadratureError,
    QuadratureGrid,
    binary_overlaps,
    binary_term,
    hermite_rule,
    inner_abs_layer,
    spherical_term,
    spherical_term_quadrature,
)
from sflrdt.quadrature import binary_term_info

SQ2PI = np.sqrt(2 / np.pi)


def test_hermite_small_rules():
    x, w = hermite_rule(1)
    assert list(x) == [0.0] and list(w) == [1.0]
    x, w = hermite_rule(2)
    assert x == pytest.approx([-1, 1]) and w == pytest.approx([0.5, 0.5])
    with pytest.raises(ArgumentError):
        hermite_rule(0)


@pytest.mark.parametrize("order", [8, 20, 40, 160, 512])
def test_hermite_moments(order):
    x, w = hermite_rule(order)
    assert w.sum() == pytest.approx(1, abs=1e-13)
    assert w @ x**2 == pytest.approx(1, abs=1e-12)
    assert w @ x**4 == pytest.approx(3, abs=1e-10)
    assert np.array_equal(x, -x[::-1])


def test_inner_abs_layer_examples():
    assert inner_abs_layer(0.0, 0.0, 5.0) == 1.0
    assert inner_abs_layer(0.0, 1.0, 1.0) == pytest.approx(2 * np.exp(0.5) * norm.cdf(1), rel=1e-14)
    assert inner_abs_layer(3.0, 1e-12, 2.0) == pytest.approx(np.exp(6), rel=1e-6)


@settings(max_examples=100)
@given(st.floats(-4, 4), st.floats(0.05, 2.0), st.floats(0.0, 3.0))
def test_inner_abs_layer_matches_adaptive_quadrature(a, sigma, c2):
    assert inner_abs_layer(a, sigma, c2) == pytest.approx(oracles.inner_abs(a, sigma, c2), rel=1e-10)


@given(st.floats(-5, 5), st.floats(0, 3), st.floats(0, 3))
def test_inner_abs_layer_jensen(a, sigma, c2):
    assert inner_abs_layer(a, sigma, c2) >= np.exp(c2 * abs(a)) * (1 - 1e-14)


def test_binary_examples():
    assert binary_term([1, 0], [1, 0]) == pytest.approx(SQ2PI, abs=1e-14)
    assert binary_term([1, 0, 0], [1, 1e-9, 0]) == pytest.approx(SQ2PI, abs=1e-8)
    assert binary_term([1, 0, 0], [1, 1, 0]) == pytest.approx(np.log(2 * np.exp(0.5) * norm.cdf(1)), rel=1e-13)
    assert binary_term([1, 1, 0], [1, 2.5, 0]) == pytest.approx(SQ2PI, rel=1e-12)


# frozen from oracles.binary_term (outer orders 200 and 160, adaptive inner layer)
FROZEN_BINARY = [
    ([1, 0.8, 0], [1, 2.7, 0], 1.0160208988011559),
    ([1, 0.8, 0.3, 0], [1, 2.7, 0.5, 0], 1.0764119301535584),
]


@pytest.mark.parametrize("q,c,expect", FROZEN_BINARY)
def test_binary_matches_oracle(q, c, expect):
    assert binary_term(q, c) == pytest.approx(expect, rel=1e-8)


# frozen from oracles.overlaps_by_difference
FROZEN_OVERLAPS = [
    ([1, 0.8, 0], [1, 2.7, 0], [0.7397466]),
    ([1, 0.8, 0.3, 0], [1, 2.7, 0.5, 0], [0.7928966, 0.27402627]),
]


@pytest.mark.parametrize("q,c,expect", FROZEN_OVERLAPS)
def test_overlaps_match_differences(q, c, expect):
    assert binary_overlaps(q, c) == pytest.approx(expect, rel=2e-6)


def test_overlaps_vanish_without_tilt():
    assert binary_overlaps([1, 0, 0], [1, 1e-9, 0]) == pytest.approx([0.0], abs=1e-12)


def test_zero_gap_level_invariance():
    # a level with q_{k-1} = q_k carries no variance and leaves the value unchanged
    base = binary_term([1, 0.6, 0], [1, 1.7, 0])
    assert binary_term([1, 0.6, 0.6, 0], [1, 1.7, 1.7, 0]) == pytest.approx(base, rel=1e-8)
    assert binary_term([1, 0.6, 0.6, 0], [1, 1.7, 0.4, 0]) == pytest.approx(base, rel=1e-8)
    base3 = binary_term([1, 0.7, 0.2, 0], [1, 2.0, 0.8, 0])
    assert binary_term([1, 0.7, 0.2, 0.2, 0], [1, 2.0, 0.8, 0.8, 0]) == pytest.approx(base3, rel=1e-8)


def test_trailing_zero_level_is_not_neutral():
    # appending q_{r+2} = q_{r+1} = 0 with c_{r+1} = c_r turns the outer E log into log E
    base = binary_term([1, 0.6, 0], [1, 1.7, 0])
    assert binary_term([1, 0.6, 0, 0], [1, 1.7, 1.7, 0]) > base + 0.1


@settings(max_examples=30)
@given(hierarchies(levels=(2, 3), c_max=2.5), st.floats(0.01, 0.5))
def test_binary_monotone_in_c2(h, dc):
    _, q, c, _ = h
    grid = QuadratureGrid(max_order=4096)
    c_up = c.copy()
    c_up[1] += dc
    try:
        lo, hi = binary_term(q, c, grid), binary_term(q, c_up, grid)
    except QuadratureError:
        return  # near-kink draw beyond the order cap
    assert hi >= lo - 1e-9


@pytest.mark.parametrize("q,c", [(f[0], f[1]) for f in FROZEN_BINARY] + [([1, 0.9, 0.4, 0], [1, 2.7, 0.5, 0])])
def test_doubling_converged_orders(q, c):
    grid = QuadratureGrid()
    value, orders = binary_term_info(q, c, grid)
    doubled = binary_term(q, c, grid.fixed(tuple(2 * o for o in orders)))
    assert abs(doubled - value) <= 2 * grid.target_rel_err * abs(value)


def test_order_cap_raises():
    with pytest.raises(QuadratureError):
        binary_term([1, 0.8, 0.3, 0], [1, 2.7, 0.5, 0], QuadratureGrid(max_order=8))


def test_grid_validation():
    with pytest.raises(ArgumentError):
        QuadratureGrid(4)
    with pytest.raises(ArgumentError):
        QuadratureGrid(40, max_order=4)
    with pytest.raises(ArgumentError):
        QuadratureGrid((40, 40)).layer_orders(3)


def test_fixed_grid_is_deterministic():
    grid = QuadratureGrid((80, 40), adaptive=False)
    a = binary_term([1, 0.8, 0.3, 0], [1, 2.7, 0.5, 0], grid)
    b = binary_term([1, 0.8, 0.3, 0], [1, 2.7, 0.5, 0], grid)
    assert a == b


@settings(max_examples=100)
@given(hierarchies(levels=(2, 3), c_max=2.0), st.floats(0.3, 3.0))
def test_spherical_closed_form_vs_nested_quadrature(h, alpha):
    p, _, c, g = h
    g = g + 0.5  # keep the quadratic tilt well inside its integrable range
    a = spherical_term(p, c, g, 1, alpha)
    b = spherical_term_quadrature(p, c, g, 1, alpha)
    assert b == pytest.approx(a, rel=1e-6)
