"""Nested Gaussian expectations for the binary (absolute-value) kernel.

The binary part of the functional is built from the recursion::

    M_1(a) = |a|
    M_k(a) = (1/c_k) log E_h exp(c_k M_{k-1}(a + sigma_k h)),   k = 2..r+1

with ``sigma_k = sqrt(q_{k-1} - q_k)`` and ``B = M_{r+1}(0)``.  A vanishing
``c_k`` turns a layer into a plain expectation, which is how the outermost
layer (``c_{r+1} = 0``) and any collapsed level are handled.  Layer 2 is done
in closed form; layers 3..r+1 use a tensor Gauss-Hermite grid and log-domain
reductions so large tilts do not overflow.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr, roots_hermitenorm

from .errors import ArgumentError, QuadratureError

C_COLLAPSE = 1e-8
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


@dataclass(frozen=True)
class QuadratureGrid:
    """Per-layer Gauss-Hermite orders and accuracy controls.

    ``orders`` gives node counts for layers 3..r+1 either as one integer for
    every layer or as a tuple (outermost layer last).  With ``adaptive`` on,
    each non-trivial layer is doubled on its own while that changes the value
    by more than ``target_rel_err``; ``max_order`` caps the doubling.
    """

    orders: int | tuple = 40
    target_rel_err: float = 1e-9
    max_order: int = 512
    adaptive: bool = True

    def __post_init__(self):
        orders = self.orders
        if isinstance(orders, (int, np.integer)):
            if orders < 8:
                raise ArgumentError(f"quadrature orders must be >= 8, got {orders}")
            object.__setattr__(self, "orders", int(orders))
        else:
            orders = tuple(int(o) for o in orders)
            if any(o < 8 for o in orders):
                raise ArgumentError(f"quadrature orders must be >= 8, got {orders}")
            object.__setattr__(self, "orders", orders)
        if not self.target_rel_err > 0:
            raise ArgumentError("target_rel_err must be positive")
        if self.max_order < 8:
            raise ArgumentError("max_order must be >= 8")

    def layer_orders(self, n_layers):
        if isinstance(self.orders, int):
            return [self.orders] * n_layers
        if len(self.orders) != n_layers:
            raise ArgumentError(f"grid has {len(self.orders)} orders but {n_layers} layers are needed")
        return list(self.orders)

    def fixed(self, orders):
        """Same settings, given orders, no adaptivity."""
        return QuadratureGrid(tuple(orders) if not isinstance(orders, int) else orders,
                              self.target_rel_err, self.max_order, adaptive=False)


DEFAULT_GRID = QuadratureGrid()


@lru_cache(maxsize=None)
def _rule(order):
    x, w = roots_hermitenorm(order)
    w = w / w.sum()
    x = 0.5 * (x - x[::-1])  # exact symmetry
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def hermite_rule(order):
    """Gauss-Hermite nodes and weights for the standard normal density."""
    if int(order) != order or order < 1:
        raise ArgumentError(f"quadrature order must be a positive integer, got {order}")
    if order == 1:
        return np.zeros(1), np.ones(1)
    return _rule(int(order))


@lru_cache(maxsize=None)
def _folded_rule(order):
    # for even integrands: keep x >= 0, double the weight of x > 0
    x, w = _rule(order)
    keep = x >= 0
    xf, wf = x[keep].copy(), w[keep].copy()
    wf[xf > 0] *= 2.0
    xf.setflags(write=False)
    wf.setflags(write=False)
    return xf, wf


def log_inner_abs_layer(a, sigma, c2):
    """log E_h exp(c2 |a + sigma h|), vectorized over ``a``."""
    a = np.asarray(a, dtype=float)
    if sigma == 0:
        return c2 * np.abs(a)
    t1 = c2 * a + log_ndtr(a / sigma + c2 * sigma)
    t2 = -c2 * a + log_ndtr(-a / sigma + c2 * sigma)
    return 0.5 * (c2 * sigma) ** 2 + np.logaddexp(t1, t2)


def inner_abs_layer(a, sigma, c2):
    """E_h exp(c2 |a + sigma h|) over a standard normal h, in closed form.

    ``exp(c2^2 sigma^2 / 2) * [e^{c2 a} Phi(a/sigma + c2 sigma)
    + e^{-c2 a} Phi(-a/sigma + c2 sigma)]``; ``sigma = 0`` gives ``e^{c2|a|}``.
    """
    if sigma < 0 or c2 < 0:
        raise ArgumentError("sigma and c2 must be non-negative")
    out = np.exp(log_inner_abs_layer(a, sigma, c2))
    return float(out) if out.ndim == 0 else out


def _abs_layer(a, sigma, c2):
    """M_2 and its derivative in ``a``; collapsed c2 gives E|a + sigma h|."""
    if sigma == 0:
        return np.abs(a), np.sign(a)
    z = a / sigma
    if c2 < C_COLLAPSE:
        m = sigma * _SQRT_2_OVER_PI * np.exp(-0.5 * z * z) + a * (2.0 * ndtr(z) - 1.0)
        return m, 2.0 * ndtr(z) - 1.0
    t1 = c2 * a + log_ndtr(z + c2 * sigma)
    t2 = -c2 * a + log_ndtr(-z + c2 * sigma)
    m = (0.5 * (c2 * sigma) ** 2 + np.logaddexp(t1, t2)) / c2
    return m, np.tanh(0.5 * (t1 - t2))


def _log_weights(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def _log_mean_exp(z, w):
    """log sum_i w_i exp(z[..., i]) along the last axis, mean-centred."""
    mu = z @ w
    d = z - mu[..., None]
    dmax = d.max(axis=-1)
    if np.all(dmax <= 50.0):
        return mu + np.log1p(np.expm1(d) @ w)
    with np.errstate(over="ignore"):
        small = np.log1p(np.expm1(np.minimum(d, 50.0)) @ w)
    big = logsumexp(d + _log_weights(w), axis=-1)
    return mu + np.where(dmax <= 50.0, small, big)


class _Nested:
    """Tensor-grid evaluation of the layer recursion.

    ``layers`` is a list of ``(sigma, c, order)`` from the innermost quadrature
    layer outwards; ``kernel(a)`` returns the innermost ``M`` (and optionally its
    derivative) on the grid of summed outer arguments.
    """

    def __init__(self, kernel, layers, keep=False):
        self.layers = layers
        nontrivial = [i for i, (s, _, _) in enumerate(layers) if s > 0]
        self.outermost = nontrivial[-1] if nontrivial else -1
        rules = []
        for i, (sigma, _, order) in enumerate(layers):
            if sigma == 0:
                rules.append((np.zeros(1), np.ones(1)))
            elif i == self.outermost:
                rules.append(_folded_rule(order))
            else:
                rules.append(_rule(order))
        self.rules = rules
        a = np.zeros(())
        for (sigma, _, _), (x, _) in zip(reversed(layers), reversed(rules)):
            a = a[..., None] + sigma * x
        out = kernel(a)
        m, dm = out if isinstance(out, tuple) else (out, None)
        self.inner = (m, dm)
        self.values = []
        self.weights = []
        for (sigma, c, _), (_, w) in zip(layers, rules):
            if keep:
                self.values.append(m)
            if c < C_COLLAPSE:
                m_next = m @ w
                if keep:
                    self.weights.append(np.broadcast_to(w, m.shape))
            else:
                m_next = _log_mean_exp(c * m, w) / c
                if keep:
                    self.weights.append(np.exp(_log_weights(w) + c * (m - m_next[..., None])))
            m = m_next
        self.value = float(m)


def _binary_layers(q, c, orders):
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    sig = np.sqrt(np.maximum(q[:-1] - q[1:], 0.0))  # sigma_2..sigma_{r+1}
    r = len(q) - 1
    layers = [(float(sig[k - 2]), float(c[k - 1]), orders[k - 3]) for k in range(3, r + 2)]
    return float(sig[0]), float(c[1]), layers


def _check_hierarchy(q, c):
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    if q.shape != c.shape or q.ndim != 1 or len(q) < 2:
        raise ArgumentError("q and c must be vectors of equal length r+1 >= 2")
    if np.any(np.diff(q) > 1e-15) or np.any(c < 0):
        raise ArgumentError("q must be non-increasing and c non-negative")
    return q, c


def _merge_flat_inner(s2, c2, layers):
    """Absorb zero-gap innermost levels into the analytic layer.

    A level with no variance leaves the recursion unchanged, so when
    ``sigma_2 = 0`` the first level with a positive gap becomes the analytic
    one.  This avoids integrating the kinked ``|a|`` numerically.
    """
    if s2 > 0:
        return s2, c2, layers
    for i, (sigma, c, order) in enumerate(layers):
        if sigma > 0:
            layers = list(layers)
            layers[i] = (0.0, c, order)
            return sigma, c, layers
    return s2, c2, layers


def _binary_fixed(q, c, orders, keep=False):
    s2, c2, layers = _binary_layers(q, c, orders)
    if not keep:
        s2, c2, layers = _merge_flat_inner(s2, c2, layers)
    if len(q) == 2:
        # r = 1: a single collapsed layer, E|h| with total variance q_1 - q_2
        return None, float(_abs_layer(np.zeros(()), s2, 0.0)[0])
    nested = _Nested(lambda a: _abs_layer(a, s2, c2), layers, keep=keep)
    return nested, nested.value


def _adaptive(evaluate, q, grid):
    """Run ``evaluate(orders)`` with per-layer order doubling.

    Each pass tries doubling one non-trivial layer at a time and keeps the
    doubling when it moves the value by more than ``target_rel_err``; the
    loop ends after a pass in which no doubling mattered.  Returns
    ``(result, value, orders)``.
    """
    r = len(q) - 1
    n_layers = max(r - 1, 0)
    orders = [min(o, grid.max_order) for o in grid.layer_orders(n_layers)]
    result, value = evaluate(orders)
    if not grid.adaptive or result is None or result.outermost < 0:
        return result, value, orders
    active = [i for i, (sigma, _, _) in enumerate(result.layers) if sigma > 0]
    unresolved = set()
    while True:
        changed = False
        for i in active:
            if orders[i] >= grid.max_order:
                unresolved.add(i)
                continue
            trial = list(orders)
            trial[i] = min(2 * orders[i], grid.max_order)
            result2, value2 = evaluate(trial)
            if abs(value2 - value) > grid.target_rel_err * abs(value2):
                result, value, orders = result2, value2, trial
                changed = True
            else:
                unresolved.discard(i)
        if not changed:
            break
    if unresolved:
        raise QuadratureError(
            f"binary term did not reach relative error {grid.target_rel_err:g} "
            f"with orders capped at {grid.max_order} (layers {sorted(k + 3 for k in unresolved)})"
        )
    return result, value, orders


def binary_term_info(q, c, grid=None):
    """Binary term together with the per-layer orders actually used."""
    grid = DEFAULT_GRID if grid is None else grid
    q, c = _check_hierarchy(q, c)
    _, value, orders = _adaptive(lambda o: _binary_fixed(q, c, o), q, grid)
    return value, tuple(orders)


def binary_term(q, c, grid=None):
    """The nested binary expectation ``B(q, c) = M_{r+1}(0)``.

    ``(1/c_r) E log E ( ... (E exp(c_2 |sum_k sqrt(q_{k-1}-q_k) h_k|))^{c_3/c_2} ... )^{c_r/c_{r-1}}``
    with the innermost layer analytic and the rest by Gauss-Hermite.
    """
    return binary_term_info(q, c, grid)[0]


def binary_overlaps(q, c, grid=None):
    """Tilted overlap averages ``p_hat_2 .. p_hat_r`` of the binary side.

    ``p_hat_j`` is the nested tilted average of ``(M_j')^2`` where ``M_j'`` is
    the tilted average of ``sign(sum_k sqrt(q_{k-1}-q_k) h_k)`` over layers
    2..j.  At a stationary point these reproduce the ``p`` hierarchy.
    """
    grid = DEFAULT_GRID if grid is None else grid
    q, c = _check_hierarchy(q, c)
    r = len(q) - 1
    if r == 1:
        return np.zeros(0)
    nested, _, _ = _adaptive(lambda o: _binary_fixed(q, c, o, keep=True), q, grid)
    out = np.zeros(r - 1)
    if nested.outermost < 0:
        return out
    # derivative of M_k on each level's grid
    derivs = [nested.inner[1]]
    for i in range(nested.outermost):
        derivs.append(np.sum(nested.weights[i] * derivs[-1], axis=-1))
    # derivs[i] is M_{i+2}'; it is zero for levels at or beyond the outermost
    # non-trivial layer (the argument is pinned at 0 there)
    for j in range(2, r + 1):
        i = j - 2
        if i > nested.outermost:
            continue
        t = derivs[i] ** 2
        for layer in range(i, len(nested.layers)):
            t = np.sum(nested.weights[layer] * t, axis=-1)
        out[j - 2] = float(t)
    return out


def spherical_term_quadrature(p, c, gamma_sq, s=1, alpha=1.0, order=160):
    """Spherical term by brute nested Gauss-Hermite of the quadratic kernel.

    Every layer, the innermost included, is integrated numerically; this is
    an independent check on the closed form in :mod:`sflrdt.model`.
    """
    p = np.asarray(p, dtype=float)
    c = np.asarray(c, dtype=float)
    sig = np.sqrt(np.maximum(p[:-1] - p[1:], 0.0))
    r = len(p) - 1
    theta1 = 2.0 * s * gamma_sq
    layers = [(float(sig[k - 2]), float(c[k - 1]), order) for k in range(2, r + 2)]
    nested = _Nested(lambda a: a * a / (2.0 * theta1), layers)
    return alpha * nested.value
