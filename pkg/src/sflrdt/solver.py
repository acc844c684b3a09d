"""Stationary points of the random-dual functional.

The solver works on the objective ``J = -psi_s`` (see :mod:`sflrdt.model`)
which is minimised over the exponents ``c`` and made stationary in
``(p, q, gamma_sq)``.  Free coordinates are laid out as::

    x = [p_free..., q_free..., c_2..c_r, gamma_sq]

Strategy
--------
1. For fixed ``c`` the ``(p, q, gamma_sq)`` subsystem is solved through the
   map ``T``: ``gamma_sq`` from its own equation (a scalar root), ``q`` from the
   analytic spherical partials over ``p`` and ``p`` from the tilted binary
   overlaps.  Newton on ``T(z) - z`` runs first, continued from the last
   accepted point; damped sweeps of ``T`` are the fallback.
2. The reduced objective ``J(c)`` is minimised by coordinate descent with
   golden-section line searches in ``log c``.
3. ``solve_stationary`` finishes with a joint Newton polish of the full
   gradient; ``solve_modulo_m`` keeps c from step 2 and only re-solves the
   subsystem on the final grid, finishing it by Newton at fixed c.

Steps 1-2 run on a fixed search grid; the final orders are chosen
adaptively at the converged point.

When ``c`` grows, a level can merge into the first one (``p_k, q_k -> 1``);
along that branch ``J(c)`` is unbounded below for the negative model, so
subsystem solutions with merged levels are rejected.

Results are memoised per process on (spec, config, grid), which lets a table
of rows share the lower-level and partial-mode solves.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, QuadratureError
from .model import (
    LiftParams,
    ModelSpec,
    psi_bar_value,
    psi_rd_bar,
    quadratic_term,
    spherical_gradient,
    theta_recursion,
)
from .quadrature import DEFAULT_GRID, QuadratureGrid, binary_overlaps, binary_term, binary_term_info

_SEARCH_ORDERS = (128, 48)
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_INNER_TOL = 1e-8
_MERGE_TOL = 1e-6
_TRIVIAL_TOL = 1e-6
# a collapsed full point sits on a degenerate fixed point, so the trailing
# pair decays slowly; the comparison is scaled and looser than 1e-6
_COLLAPSE_TOL = 1e-4
_CHAIN_SCALES = ((0.7, 0.1), (0.5, 0.5), (0.85, 0.85), (0.3, 0.03))


@dataclass(frozen=True)
class SolveConfig:
    """Solver tolerances and restart controls."""

    fd_step: float = 1e-5
    grad_tol: float = 1e-7
    max_iters: int = 500
    restarts: int = 8
    warm_start: LiftParams | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")


@dataclass(frozen=True)
class SolveReport:
    params: LiftParams
    free_energy: float
    residual: float
    mode: str
    iterations: int
    restarts_used: int
    quadrature_orders: tuple
    converged: bool
    collapsed_to_partial: bool = False
    objective: float = float("nan")
    gradient: np.ndarray = field(default=None, repr=False)


class _Layout:
    """Maps free coordinates to full (p, q, c, gamma_sq) vectors."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        r = spec.r
        self.r = r
        pinned = set(spec.pinned_levels())
        self.pq_idx = [k - 1 for k in range(2, r + 1) if k not in pinned]
        self.c_idx = [k - 1 for k in range(2, r + 1)]
        self.n_pq = len(self.pq_idx)
        self.n_c = len(self.c_idx)
        self.size = 2 * self.n_pq + self.n_c + 1

    def slices(self):
        n, m = self.n_pq, self.n_c
        return slice(0, n), slice(n, 2 * n), slice(2 * n, 2 * n + m), 2 * n + m

    def unpack(self, x):
        sp, sq, sc, ig = self.slices()
        r = self.r
        p = np.zeros(r + 1)
        q = np.zeros(r + 1)
        c = np.zeros(r + 1)
        p[0] = q[0] = c[0] = 1.0
        p[self.pq_idx] = x[sp]
        q[self.pq_idx] = x[sq]
        c[self.c_idx] = x[sc]
        return p, q, c, float(x[ig])

    def pack(self, p, q, c, gamma_sq):
        return np.concatenate([
            np.asarray(p, float)[self.pq_idx],
            np.asarray(q, float)[self.pq_idx],
            np.asarray(c, float)[self.c_idx],
            [gamma_sq],
        ])

    def from_params(self, params: LiftParams):
        return self.pack(params.p, params.q, params.c, params.gamma_sq)

    def to_params(self, x):
        p, q, c, g = self.unpack(x)
        return LiftParams(self.r, p, q, c, g)

    def bounds(self, x):
        """Per-coordinate (lo, hi) keeping the chains monotone and c >= 0."""
        p, q, c, _ = self.unpack(x)
        lo = np.empty(self.size)
        hi = np.empty(self.size)
        sp, sq, sc, ig = self.slices()
        for sl, v in ((sp, p), (sq, q)):
            idx = np.array(self.pq_idx, dtype=int)
            lo[sl] = v[idx + 1]
            hi[sl] = v[idx - 1]
        lo[sc] = 0.0
        hi[sc] = np.inf
        lo[ig] = 0.0
        hi[ig] = np.inf
        return lo, hi


def _objective(x, layout, grid):
    p, q, c, g = layout.unpack(x)
    s, alpha = layout.spec.s, layout.spec.alpha
    return -psi_bar_value(p, q, c, g, s, alpha, grid)


def _stencil(f, x0, h, lo, hi):
    """Second-order derivative of a scalar function inside [lo, hi].

    Central when both sides have room, otherwise a one-sided three-point rule
    into the feasible side; the step shrinks to fit and a DomainError is
    raised if it would drop below 1e-12.
    """
    room_lo, room_hi = x0 - lo, hi - x0
    if room_lo >= h and room_hi >= h:
        return (f(x0 + h) - f(x0 - h)) / (2.0 * h)
    if min(room_lo, room_hi) >= 0.25 * h:
        h = min(room_lo, room_hi)
        return (f(x0 + h) - f(x0 - h)) / (2.0 * h)
    side = 1.0 if room_hi >= room_lo else -1.0
    h = min(h, 0.5 * max(room_lo, room_hi))
    if h < 1e-12:
        raise DomainError("finite-difference probe has no feasible room")
    f0, f1, f2 = f(x0), f(x0 + side * h), f(x0 + 2 * side * h)
    return side * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)


def _gradient_parts(x, layout, grid, fd_step):
    """Partials of each piece of J over the free coordinates."""
    spec = layout.spec
    s, alpha = spec.s, spec.alpha
    p, q, c, g = layout.unpack(x)
    sp, sq, sc, ig = layout.slices()
    idx = np.array(layout.pq_idx, dtype=int)
    cid = np.array(layout.c_idx, dtype=int)
    n = layout.size
    quad = np.zeros(n)
    quad[sp] = -0.5 * q[idx] * (c[idx + 1] - c[idx])
    quad[sq] = -0.5 * p[idx] * (c[idx + 1] - c[idx])
    pq = p * q
    quad[sc] = -0.5 * (pq[cid - 1] - pq[cid])

    sph = np.zeros(n)
    d_g, d_p, d_c = spherical_gradient(p, c, g, s, alpha)
    sph[sp] = d_p[idx]
    sph[sc] = d_c[cid]
    sph[ig] = d_g

    gam = np.zeros(n)
    gam[ig] = float(s)

    binr = np.zeros(n)
    lo, hi = layout.bounds(x)

    def probe_q(j):
        def f(t):
            v = q.copy()
            v[j] = t
            return binary_term(v, c, grid)
        return f

    def probe_c(j):
        def f(t):
            v = c.copy()
            v[j] = t
            return binary_term(q, v, grid)
        return f

    for pos, j in zip(range(sq.start, sq.stop), idx):
        h = fd_step * max(1.0, abs(q[j]))
        binr[pos] = _stencil(probe_q(j), q[j], h, lo[pos], hi[pos])
    for pos, j in zip(range(sc.start, sc.stop), cid):
        h = fd_step * max(1.0, abs(c[j]))
        binr[pos] = _stencil(probe_c(j), c[j], h, lo[pos], hi[pos])
    return {"quadratic_term": quad, "binary_term": binr, "gamma_term": gam, "spherical_term": sph}


def _gradient_x(x, layout, grid, fd_step):
    return sum(_gradient_parts(x, layout, grid, fd_step).values())


def gradient_parts(params: LiftParams, spec: ModelSpec, grid: QuadratureGrid | None = None, fd_step=1e-5):
    """Per-piece partials of the minimised objective ``J = -psi_s``.

    Keys match :attr:`EvalResult.parts`.  Quadratic, gamma and spherical
    pieces are analytic; the binary piece uses finite differences of
    :func:`binary_term` over ``q`` and ``c``.
    """
    layout = _Layout(spec)
    return _gradient_parts(layout.from_params(params), layout, grid, fd_step)


def gradient(params: LiftParams, spec: ModelSpec, grid: QuadratureGrid | None = None, fd_step=1e-5):
    """Partials of ``J = -psi_s`` over the free coordinates.

    ``J`` is ``-psi_bar`` for the positive model and ``-psi_{+1}`` at
    ``-gamma_sq`` for the negative one; its stationary points are those of
    :func:`sflrdt.model.psi_rd_bar`.  Order: free ``p``, free ``q``,
    ``c_2..c_r``, ``gamma_sq``.
    """
    return sum(gradient_parts(params, spec, grid, fd_step).values())


def free_coordinate_names(spec: ModelSpec):
    layout = _Layout(spec)
    names = [f"p_{j + 1}" for j in layout.pq_idx]
    names += [f"q_{j + 1}" for j in layout.pq_idx]
    names += [f"c_{j + 1}" for j in layout.c_idx]
    return names + ["gamma_sq"]


def overlap_fixed_point_p(params: LiftParams, spec: ModelSpec, grid: QuadratureGrid | None = None):
    """``p`` with every free entry replaced by its tilted binary overlap."""
    layout = _Layout(spec)
    p = np.array(params.p)
    p_hat = binary_overlaps(params.q, params.c, grid)
    p[layout.pq_idx] = p_hat[np.array(layout.pq_idx, dtype=int) - 1]
    return p


# -- fixed-c subsystem ---------------------------------------------------------

def _gamma_root(p, c, s, alpha):
    """gamma_sq solving s + alpha dS/dgamma = 0 on the feasible side."""

    def f(g):
        return s + spherical_gradient(p, c, g, s, alpha)[0]

    if s == 1:
        r = len(p) - 1
        g_min = 0.5 * float(np.sum(c[1:r] * (p[: r - 1] - p[1:r])))
        lo = g_min + max(1e-12, 1e-9 * g_min)
    else:
        lo = 1e-8
    hi = max(1.0, 2 * lo)
    while f(hi) * f(lo) > 0:
        hi *= 2.0
        if hi > 1e8:
            raise DomainError("no stationary gamma_sq found")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


class _Subsystem:
    """The map T on (p_free, q_free) at fixed c."""

    def __init__(self, layout, c, grid):
        self.layout = layout
        self.c = np.asarray(c, float)
        self.grid = grid
        self.idx = np.array(layout.pq_idx, dtype=int)
        self._p_hat = {}
        self._gamma = {}

    def full(self, z):
        n = self.layout.n_pq
        r = self.layout.r
        p = np.zeros(r + 1)
        q = np.zeros(r + 1)
        p[0] = q[0] = 1.0
        p[self.idx] = z[:n]
        q[self.idx] = z[n:]
        return p, q

    def p_hat(self, q):
        key = q.tobytes()
        if key not in self._p_hat:
            if len(self._p_hat) > 64:
                self._p_hat.clear()
            self._p_hat[key] = binary_overlaps(q, self.c, self.grid)
        return self._p_hat[key]

    def gamma(self, z):
        p, _ = self.full(z)
        key = p.tobytes()
        if key not in self._gamma:
            if len(self._gamma) > 64:
                self._gamma.clear()
            spec = self.layout.spec
            self._gamma[key] = _gamma_root(p, self.c, spec.s, spec.alpha)
        return self._gamma[key]

    def raw(self, z):
        """Unprojected images of p and q under T."""
        spec = self.layout.spec
        c = self.c
        p, q = self.full(z)
        g = self.gamma(z)
        _, d_p, _ = spherical_gradient(p, c, g, spec.s, spec.alpha)
        idx = self.idx
        dc = c[idx + 1] - c[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            q_new = np.where(dc != 0, 2.0 * d_p[idx] / dc, q[idx])
        return self.p_hat(q)[idx - 1], q_new

    def residual(self, z):
        """Unprojected T(z) - z; zero exactly at stationary points."""
        p_new, q_new = self.raw(z)
        return np.concatenate([p_new, q_new]) - z

    def stationarity(self, z):
        return float(np.max(np.abs(self.residual(z)), initial=0.0))

    def __call__(self, z):
        p, q = self.full(z)
        idx = self.idx
        p_new, q_new = self.raw(z)
        q_full = q.copy()
        q_full[idx] = q_new
        q_full = np.clip(np.minimum.accumulate(q_full), 0.0, 1.0)
        p_full = p.copy()
        p_full[idx] = p_new
        p_full = np.clip(np.minimum.accumulate(p_full), 0.0, 1.0)
        return np.concatenate([p_full[idx], q_full[idx]])

    def solve(self, z0, tol=1e-11, sweeps=30, newton_iters=30):
        """Fixed point of T near z0.

        Newton on T(z) - z from z0 first, so that continuation in c follows
        the branch it starts on even where damped sweeps would leave it;
        damped sweeps then Newton again as a fallback.
        """
        z = np.array(z0, float)
        if len(z) == 0:
            return z, 0.0
        z, res = self._newton(z, tol, newton_iters)
        if res < tol:
            return self._snap(z, res)
        z = np.array(z0, float)
        for _ in range(sweeps):
            step = self(z) - z
            z = z + 0.5 * step
            if np.max(np.abs(step)) < 1e-4:
                break
        return self._snap(*self._newton(z, tol, newton_iters))

    def _snap(self, z, res):
        """Prefer exactly merged trailing levels when they are as stationary."""
        zs = self._collapsed(z)
        if zs is not None:
            rs = self.stationarity(zs)
            if rs <= max(res, 1e-12):
                return zs, rs
        return z, res

    def _newton(self, z, tol, iters):
        res = self(z) - z
        nr = float(np.max(np.abs(res)))
        slow = 0
        for _ in range(iters):
            if nr < tol:
                break
            jac = self._jacobian(z, res)
            try:
                dz = np.linalg.solve(jac, -res)
            except np.linalg.LinAlgError:
                dz = np.linalg.lstsq(jac, -res, rcond=None)[0]
            t = _max_step(z, dz, self._bounds(z))
            while t > 1e-6:
                zn = z + t * dz
                rn = self(zn) - zn
                nrn = float(np.max(np.abs(rn)))
                if nrn < nr:
                    break
                t *= 0.5
            else:
                break
            slow = slow + 1 if nrn > 0.5 * nr else 0
            if nrn > 0.25 * nr:
                # slow progress: try merging small trailing levels into zero
                zs = self._collapsed(zn)
                if zs is not None:
                    rs = self(zs) - zs
                    nrs = float(np.max(np.abs(rs)))
                    if nrs < nrn:
                        zn, rn, nrn = zs, rs, nrs
            z, res, nr = zn, rn, nrn
            if slow >= 4:
                break
        return z, nr

    def _collapsed(self, z, small=1e-3):
        """z with its trailing small (p_j, q_j) pairs set exactly to zero."""
        n = self.layout.n_pq
        zs = np.array(z)
        hit = False
        for j in range(n - 1, -1, -1):
            if zs[j] < small and zs[n + j] < small and (zs[j] > 0 or zs[n + j] > 0):
                zs[j] = zs[n + j] = 0.0
                hit = True
            elif zs[j] >= small or zs[n + j] >= small:
                break
        return zs if hit else None

    def _bounds(self, z):
        n = self.layout.n_pq
        lo = np.zeros(2 * n)
        hi = np.ones(2 * n)
        p, q = self.full(z)
        for k, v in enumerate((p, q)):
            lo[k * n:(k + 1) * n] = v[self.idx + 1]
            hi[k * n:(k + 1) * n] = v[self.idx - 1]
        return lo, hi

    def _jacobian(self, z, res):
        n = len(z)
        jac = np.empty((n, n))
        lo, hi = self._bounds(z)
        for j in range(n):
            h = 1e-7 * max(1.0, abs(z[j]))
            side = 1.0 if hi[j] - z[j] >= z[j] - lo[j] else -1.0
            for sgn in (side, -side):
                zj = z.copy()
                zj[j] += sgn * h
                try:
                    jac[:, j] = ((self(zj) - zj) - res) / (sgn * h)
                    break
                except DomainError:
                    continue
            else:
                raise DomainError("subsystem Jacobian probe left the feasible region")
        return jac


def _max_step(z, dz, bounds, frac=0.99):
    """Largest t <= 1 keeping z + t dz inside a fraction of the box."""
    lo, hi = bounds
    t = 1.0
    for zi, di, l, u in zip(z, dz, lo, hi):
        if di < 0 and zi > l:
            t = min(t, frac * (zi - l) / -di)
        elif di > 0 and zi < u:
            t = min(t, frac * (u - zi) / di)
        elif (di < 0 and zi <= l) or (di > 0 and zi >= u):
            t = min(t, 0.0) if abs(di) > 1e-14 else t
    return max(t, 0.0)


def _chain_starts(layout):
    """Geometric (p, q) chains used when continuation lands off the lifted branch."""
    r = layout.r
    out = []
    for ps, qs in _CHAIN_SCALES:
        p = np.zeros(r + 1)
        q = np.zeros(r + 1)
        p[: r] = ps ** np.arange(r)
        q[: r] = qs ** np.arange(r)
        out.append(np.concatenate([p[layout.pq_idx], q[layout.pq_idx]]))
    return out


class _Reduced:
    """Reduced objective J(c) with warm-started subsystem solves.

    The subsystem is solved from the anchor (the current outer iterate).  If
    that lands on the trivial branch (free p = q = 0), fails, or merges a
    level into level 1, a few chain starts are tried as well and the valid
    stationary point with the lowest J is kept.
    """

    def __init__(self, layout, grid, z0):
        self.layout = layout
        self.grid = grid
        self.z = np.array(z0, float)
        self.evals = 0
        self._chains = _chain_starts(layout)

    def point(self, c_free, z0=None):
        layout = self.layout
        c = np.zeros(layout.r + 1)
        c[0] = 1.0
        c[layout.c_idx] = c_free
        sub = _Subsystem(layout, c, self.grid)
        z, _ = sub.solve(self.z if z0 is None else z0)
        res = sub.stationarity(z) if len(z) else 0.0
        g = sub.gamma(z)
        p, q = sub.full(z)
        # round-off can leave pinned-at-zero levels a hair negative
        x = layout.pack(np.maximum(p, 0.0), np.maximum(q, 0.0), c, g)
        return x, res

    def _try(self, c_free, z0):
        try:
            x, res = self.point(c_free, z0)
            val = _objective(x, self.layout, self.grid)
        except (DomainError, FloatingPointError, ValueError):
            return np.inf, None
        if not np.isfinite(val) or res > _INNER_TOL:
            return np.inf, None
        n = self.layout.n_pq
        if n and np.max(x[: 2 * n]) > 1.0 - _MERGE_TOL:
            # a level merged into level 1: degenerate branch, not a lift
            return np.inf, None
        return val, x

    def __call__(self, c_free):
        self.evals += 1
        best = self._try(c_free, self.z)
        n = self.layout.n_pq
        if n == 0:
            return best
        if best[1] is None or np.max(best[1][: 2 * n]) < _TRIVIAL_TOL:
            for z0 in self._chains:
                cand = self._try(c_free, z0)
                if cand[0] < best[0]:
                    best = cand
        return best

    def anchor(self, x):
        """Warm-start later subsystem solves from the accepted point x."""
        n = self.layout.n_pq
        self.z = np.array(x[: 2 * n], float)


def _golden_line(fun, u0, f0, step, tol, max_evals=80):
    """Minimise a scalar function near u0: bracket by expansion, then golden section."""
    evals = 0
    a, fa = u0, f0
    b, fb = u0 + step, fun(u0 + step)
    evals += 1
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
    # now fb <= fa, walk downhill from a through b
    cpt = b + (b - a) / _GOLDEN
    fc = fun(cpt)
    evals += 1
    while fc < fb and evals < max_evals:
        a, fa, b, fb = b, fb, cpt, fc
        cpt = b + (b - a) / _GOLDEN
        fc = fun(cpt)
        evals += 1
    lo, hi = min(a, cpt), max(a, cpt)
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    evals += 2
    while hi - lo > tol and evals < max_evals:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = fun(x2)
        evals += 1
    cands = [(fb, b), (f1, x1), (f2, x2), (f0, u0)]
    fbest, ubest = min(cands, key=lambda t: (t[0], abs(t[1] - u0)))
    return ubest, fbest, evals


def _coordinate_descent(reduced, c0, tol_u, max_sweeps):
    """Minimise reduced(c) by golden-section line searches in log c."""
    u = np.log(np.maximum(np.asarray(c0, float), 1e-6))
    cache = {}

    def evaluate(uvec):
        key = tuple(np.round(uvec, 14))
        if key not in cache:
            cache[key] = reduced(np.exp(uvec))
        return cache[key]

    f, x = evaluate(u)
    if not np.isfinite(f):
        return None, np.inf, 0
    reduced.anchor(x)
    step = 0.4
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        u_old = u.copy()
        for i in range(len(u)):
            def line(t, i=i):
                v = u.copy()
                v[i] = t
                return evaluate(v)[0]
            ui, fi, _ = _golden_line(line, u[i], f, step, tol_u)
            if fi <= f:
                u[i] = ui
                f, x = evaluate(u)
                reduced.anchor(x)
        if np.max(np.abs(u - u_old)) < tol_u:
            break
        step = max(min(step, 4 * np.max(np.abs(u - u_old))), 10 * tol_u)
    return x, f, sweeps


# -- joint polish --------------------------------------------------------------

def _joint_bounds(x, layout):
    lo, hi = layout.bounds(x)
    return lo, hi


def _polish(x, layout, grid, cfg, free=None):
    """Newton on the gradient with fraction-to-boundary steps.

    ``free`` restricts both the step and the residual to those coordinates;
    the rest of x stays fixed.
    """
    free = np.arange(len(x)) if free is None else np.asarray(free)

    def grad(v):
        return _gradient_x(v, layout, grid, cfg.fd_step)[free]

    g = grad(x)
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        gn = np.max(np.abs(g))
        if gn <= 0.1 * cfg.grad_tol:
            break
        hess = _fd_jacobian(grad, x, g, layout, cols=free)
        hess = 0.5 * (hess + hess.T)
        try:
            step = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -g, rcond=None)[0]
        dx = np.zeros(len(x))
        dx[free] = step
        t = _max_step(x, dx, _joint_bounds(x, layout))
        accepted = False
        while t > 1e-8:
            xn = x + t * dx
            try:
                theta_recursion(*_pc(xn, layout), layout.spec.s)
                gn_new = grad(xn)
            except DomainError:
                t *= 0.5
                continue
            if np.max(np.abs(gn_new)) < gn:
                x, g, accepted = xn, gn_new, True
                break
            t *= 0.5
        if not accepted:
            break
    return x, g, iters


def _pc(x, layout):
    p, _, c, g = layout.unpack(x)
    return p, c, g


def _fd_jacobian(fun, x, f0, layout, rel=1e-4, cols=None):
    n = len(x)
    cols = range(n) if cols is None else cols
    jac = np.empty((len(f0), len(cols)))
    lo, hi = _joint_bounds(x, layout)
    for k, j in enumerate(cols):
        h = rel * max(1.0, abs(x[j]))
        room_lo, room_hi = x[j] - lo[j], hi[j] - x[j]
        if j == n - 1 and layout.spec.s == 1:
            p, _, c, _ = layout.unpack(x)
            theta = theta_recursion(p, c, x[j], 1)
            room_lo = 0.5 * theta[-1]
        if room_lo >= h and room_hi >= h:
            e = np.zeros(n)
            e[j] = h
            jac[:, k] = (fun(x + e) - fun(x - e)) / (2 * h)
        else:
            side = 1.0 if room_hi >= room_lo else -1.0
            h = min(h, 0.5 * max(room_lo, room_hi))
            e = np.zeros(n)
            e[j] = side * h
            jac[:, k] = side * (-3 * f0 + 4 * fun(x + e) - fun(x + 2 * e)) / (2 * h)
    return jac


# -- starting points -----------------------------------------------------------

def _starts(layout, cfg):
    """Deterministic list of starting (c_free, z) pairs."""
    r = layout.r
    n = layout.n_pq
    spec = layout.spec
    rng = np.random.default_rng(cfg.seed)
    starts = []
    if cfg.warm_start is not None:
        warm = cfg.warm_start
        if warm.r == r - 1:
            c_new = warm.c[r - 2] if r > 2 else 1.0
            warm = warm.padded(c_new=max(c_new, 0.5))
        if warm.r != r:
            raise ValueError(f"warm start is level {cfg.warm_start.r}, need {r - 1} or {r}")
        starts.append(_lifted_start(warm, layout))
    chain = np.array([1.0 - (k - 1) / r for k in range(2, r + 1)])
    c_default = np.array([1.0 + (k - 1) ** 1.5 for k in range(2, r + 1)])
    if spec.s == -1:
        c_default = 2.0 * c_default ** 1.5
    full_chain = np.zeros(r + 1)
    full_chain[1:r] = chain
    z_default = np.concatenate([full_chain[layout.pq_idx], full_chain[layout.pq_idx]])
    starts.append((c_default, z_default))
    while len(starts) < cfg.restarts:
        c = np.exp(rng.uniform(np.log(0.1), np.log(30.0), size=layout.n_c))
        v = np.sort(rng.uniform(0.05, 0.95, size=r - 1))[::-1]
        w = np.sort(rng.uniform(0.05, 0.95, size=r - 1))[::-1]
        fp = np.zeros(r + 1)
        fq = np.zeros(r + 1)
        fp[1:r] = v
        fq[1:r] = w
        starts.append((c, np.concatenate([fp[layout.pq_idx], fq[layout.pq_idx]])))
    return starts[: cfg.restarts]


def _search_grid(grid, r):
    if not grid.adaptive:
        return grid
    n_layers = max(r - 1, 1)
    orders = [_SEARCH_ORDERS[0]] + [_SEARCH_ORDERS[1]] * (n_layers - 1)
    return grid.fixed([min(o, grid.max_order) for o in orders])


def _search(layout, cfg, grid, extra=(), tol_u=1e-4):
    """Nested search over c from every start; candidates sorted by J."""
    sgrid = _search_grid(grid, layout.r)
    candidates = []
    sweeps_total = 0
    for c0, z0 in list(extra) + _starts(layout, cfg):
        reduced = _Reduced(layout, sgrid, z0)
        if layout.n_c == 0:
            f, x = reduced(np.zeros(0))
            sweeps = 0
        else:
            x, f, sweeps = _coordinate_descent(reduced, c0, tol_u, cfg.max_iters)
        sweeps_total += sweeps
        if x is not None and np.isfinite(f):
            candidates.append((f, x))
    return candidates, sweeps_total, sgrid


def _final_orders(x, layout, grid):
    _, q, c, _ = layout.unpack(x)
    _, orders = binary_term_info(q, c, grid)
    return orders


def _report(x, layout, grid, cfg, mode, iterations, restarts, orders, residual_slice=None, partial_x=None):
    spec = layout.spec
    params = layout.to_params(x)
    ev = psi_rd_bar(params, spec, grid)
    g = _gradient_x(x, layout, grid, cfg.fd_step)
    gg = g if residual_slice is None else g[residual_slice]
    residual = float(np.max(np.abs(gg))) if len(gg) else 0.0
    collapsed = partial_x is not None and _gap(x, partial_x) < _COLLAPSE_TOL
    return SolveReport(
        params=params,
        free_energy=ev.free_energy,
        residual=residual,
        mode=mode,
        iterations=iterations,
        restarts_used=restarts,
        quadrature_orders=tuple(orders),
        converged=residual <= cfg.grad_tol,
        collapsed_to_partial=bool(collapsed),
        objective=-spec.s * ev.psi_bar,
        gradient=g,
    )


def _gap(x, y):
    """Max-norm distance, scaled per entry by max(1, |y|)."""
    return float(np.max(np.abs(x - y) / np.maximum(1.0, np.abs(y))))


def _r1(layout, cfg, grid, mode):
    spec = layout.spec
    p = np.array([1.0, 0.0])
    c = np.array([1.0, 0.0])
    g = _gamma_root(p, c, spec.s, spec.alpha)
    x = layout.pack(p, p, c, g)
    return _report(x, layout, grid, cfg, mode, 0, 1, ())


def _lifted_start(params, layout):
    """(c_free, z) from a same-level point with zero free levels nudged off zero."""
    p = np.array(params.p)
    q = np.array(params.q)
    idx = np.array(layout.pq_idx, dtype=int)
    for j in idx:
        if p[j] <= 1e-9:
            p[j] = 0.5 * p[j - 1]
        if q[j] <= 1e-9:
            q[j] = 0.5 * q[j - 1]
    return np.array(params.c)[layout.c_idx], np.concatenate([p[idx], q[idx]])


def _best_effort(fn):
    try:
        return fn()
    except ConvergenceError as err:
        return err.report


def _refine_stationary(x, layout, grid, cfg):
    """Joint Newton polish, re-run until the adaptive orders settle."""
    iters, orders, fgrid = 0, None, grid
    for _ in range(4):
        new_orders = _final_orders(x, layout, grid)
        if new_orders == orders:
            break
        orders = new_orders
        fgrid = grid.fixed(orders) if grid.adaptive else grid
        x, _, it = _polish(x, layout, fgrid, cfg)
        iters += it
    return x, fgrid, orders, iters


def _refine_modulo(x, layout, grid, cfg):
    """Re-solve the subsystem at the located c on the final grid.

    The energy error from the search tolerance in c is second order, so c
    itself is not re-minimised.
    """
    orders = _final_orders(x, layout, grid)
    fgrid = grid.fixed(orders) if grid.adaptive else grid
    if layout.n_c == 0:
        return x, fgrid, orders, 0
    sp, sq, sc, ig = layout.slices()
    reduced = _Reduced(layout, fgrid, x[: 2 * layout.n_pq])
    _, x2 = reduced(x[sc])
    x = x if x2 is None else x2
    # sweeps stall near degenerate trailing levels; finish the subsystem by Newton at fixed c
    free = np.r_[np.arange(sp.start, sq.stop), ig]
    x, _, iters = _polish(x, layout, fgrid, cfg, free)
    return x, fgrid, orders, 1 + iters


_MEMO = {}


def _memo_key(spec, cfg, grid, modulo):
    warm = cfg.warm_start
    warm = None if warm is None else repr(sorted(warm.as_dict().items()))
    return spec, repr(replace(cfg, warm_start=None)), warm, grid, modulo


def _solve(spec, cfg, grid, modulo):
    key = _memo_key(spec, cfg, grid, modulo)
    if key not in _MEMO:
        _MEMO[key] = _solve_uncached(spec, cfg, grid, modulo)
    return _MEMO[key]


def _solve_uncached(spec, cfg, grid, modulo):
    layout = _Layout(spec)
    label = "modulo-m" if modulo else spec.mode
    if spec.r == 1:
        return _r1(layout, cfg, grid, label)
    if cfg.warm_start is None and spec.r >= 3:
        below = ModelSpec(spec.s, spec.alpha, spec.r - 1, "full")
        rep = _best_effort(lambda: _solve(below, cfg, grid, modulo))
        if rep is not None:
            cfg = replace(cfg, warm_start=rep.params)
    extra = []
    partial_x = None
    if spec.mode == "full":
        prep = _best_effort(lambda: _solve(replace(spec, mode="partial"), cfg, grid, modulo))
        if prep is not None:
            partial_x = layout.from_params(prep.params)
            extra.append(_lifted_start(prep.params, layout))
    candidates, sweeps, sgrid = _search(layout, cfg, grid, extra)
    if partial_x is not None:
        candidates.append((_objective(partial_x, layout, sgrid), partial_x))
    if not candidates:
        raise ConvergenceError("no start of the c search reached a stationary subsystem", report=None)
    candidates.sort(key=lambda t: (t[0], tuple(t[1])))
    n_starts = len(extra) + len(_starts(layout, cfg))
    keep = None
    if modulo:
        sp, sq, _, ig = layout.slices()
        keep = np.r_[np.arange(sp.start, sq.stop), ig]
    refine = _refine_modulo if modulo else _refine_stationary
    best = None
    for _, x0 in candidates[:3]:
        x, fgrid, orders, iters = refine(x0, layout, grid, cfg)
        rep = _report(x, layout, fgrid, cfg, label, sweeps + iters, n_starts, orders, keep, partial_x)
        if best is None or _better(rep, best):
            best = rep
        if rep.converged and best is rep:
            break
    return best


def solve_stationary(spec: ModelSpec, cfg: SolveConfig | None = None, grid: QuadratureGrid | None = None):
    """Stationary hierarchy with the lowest objective over restarts.

    Full mode also solves partial mode at the same level and keeps the
    better of the two stationary points, flagging ``collapsed_to_partial``
    when they coincide.  Without a warm start, levels r >= 3 first solve
    level r - 1 (full) and start from it.
    """
    cfg = SolveConfig() if cfg is None else cfg
    grid = DEFAULT_GRID if grid is None else grid
    if spec.mode == "modulo-m":
        return solve_modulo_m(spec, cfg, grid)
    return _checked(_solve(spec, cfg, grid, modulo=False))


def _better(a, b):
    if a.converged != b.converged:
        return a.converged
    return (a.objective, tuple(a.params.c)) < (b.objective, tuple(b.params.c))


def _checked(rep):
    if not rep.converged:
        raise ConvergenceError(
            f"stationarity residual {rep.residual:.3g} above tolerance", report=rep
        )
    return rep


def solve_modulo_m(spec: ModelSpec, cfg: SolveConfig | None = None, grid: QuadratureGrid | None = None):
    """Minimise the reduced objective over c with the (p, q, gamma_sq) subsystem solved.

    A ``modulo-m`` spec uses full lifting.  The reported residual covers the
    subsystem only; c is located by minimisation, not by its stationarity
    equation.
    """
    cfg = SolveConfig() if cfg is None else cfg
    grid = DEFAULT_GRID if grid is None else grid
    if spec.mode == "modulo-m":
        spec = replace(spec, mode="full")
    return _checked(_solve(spec, cfg, grid, modulo=True))
