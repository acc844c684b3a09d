"""Domain types and the assembled random-dual functional.

Conventions
-----------
Vectors ``p``, ``q`` and ``c`` are stored with 0-based numpy indexing but
describe the 1-based hierarchy ``p_1 .. p_{r+1}``; ``p[0]`` is ``p_1 = 1`` and
``p[r]`` is ``p_{r+1} = 0``.  The same holds for ``q`` and ``c``.

The working functional for a model sign ``s`` is::

    psi_s = Q(p, q, c) - B(q, c) - s * gamma_sq - alpha * S_s(p, c, gamma_sq)

where ``Q`` is the quadratic overlap sum, ``B`` the nested binary expectation
(see :mod:`sflrdt.quadrature`) and ``S_s`` the closed-form spherical term
driven by the Theta recursion with ``Theta_1 = 2 s gamma_sq``.  So ``psi_{-1}``
at ``gamma_sq`` is ``psi_{+1}`` at ``-gamma_sq``.  Both solvers minimise
``-psi_s`` over the exponents ``c``.

:func:`psi_rd_bar` reports ``psi_bar = s * psi_s``, i.e. the negative-model
value is ``-psi_{+1}(..., -gamma_sq)``.  With that convention the reported
energy is ``-psi_bar`` for both signs: the asymptotic
``E max_x ||Gx|| / sqrt(n)`` for ``s = +1`` and ``E min_x ||Gx|| / sqrt(n)``
for ``s = -1``.
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DomainError
from .quadrature import QuadratureGrid, binary_term

#: Exponents below this are treated as collapsed (c_k -> 0 limit).
C_COLLAPSE = 1e-8

Mode = Literal["partial", "full", "modulo-m"]
MODES = ("partial", "full", "modulo-m")


def _readonly(values, name, length):
    arr = np.array(values, dtype=float)
    if arr.shape != (length,):
        raise ValueError(f"{name} must have length {length}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LiftParams:
    """Lifting hierarchy ``(p, q, c, gamma_sq)`` at level ``r``."""

    r: int
    p: np.ndarray
    q: np.ndarray
    c: np.ndarray
    gamma_sq: float

    def __post_init__(self):
        r = int(self.r)
        if r < 1:
            raise ValueError(f"lifting level must be >= 1, got {self.r}")
        object.__setattr__(self, "r", r)
        for name in ("p", "q", "c"):
            object.__setattr__(self, name, _readonly(getattr(self, name), name, r + 1))
        object.__setattr__(self, "gamma_sq", float(self.gamma_sq))
        if not (np.isfinite(self.gamma_sq) and self.gamma_sq > 0):
            raise ValueError(f"gamma_sq must be positive, got {self.gamma_sq}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if v[0] != 1.0 or v[-1] != 0.0:
                raise ValueError(f"{name} must start at 1 and end at 0")
            if np.any(np.diff(v) > 0):
                raise ValueError(f"{name} must be non-increasing")
        if self.c[0] != 1.0 or self.c[-1] != 0.0:
            raise ValueError("c must start at 1 and end at 0")
        if np.any(self.c < 0):
            raise ValueError("c must be non-negative")

    @classmethod
    def from_free(cls, r, p_free=(), q_free=(), c_free=(), gamma_sq=0.5):
        """Build from the non-fixed entries ``p_2..p_r``, ``q_2..q_r``, ``c_2..c_r``."""
        def full(v, head):
            v = list(v)
            if len(v) != r - 1:
                raise ValueError(f"expected {r - 1} free entries, got {len(v)}")
            return [head, *v, 0.0]
        return cls(r, full(p_free, 1.0), full(q_free, 1.0), full(c_free, 1.0), gamma_sq)

    @classmethod
    def replica_symmetric(cls, alpha=1.0):
        """The r = 1 solution; gamma_sq = sqrt(alpha)/2 for either sign."""
        return cls(1, [1.0, 0.0], [1.0, 0.0], [1.0, 0.0], np.sqrt(alpha) / 2)

    def spherical_scales(self):
        """``b_k = sqrt(p_{k-1} - p_k)`` for k = 2..r+1."""
        return np.sqrt(-np.diff(self.p))

    def binary_scales(self):
        """``sqrt(q_{k-1} - q_k)`` for k = 2..r+1."""
        return np.sqrt(-np.diff(self.q))

    def padded(self, c_new=0.0):
        """Lift to level r+1 by inserting a zero overlap level.

        The new exponent ``c_{r+1}`` is set to ``c_new``.
        """
        p = [*self.p[:-1], 0.0, 0.0]
        q = [*self.q[:-1], 0.0, 0.0]
        c = [*self.c[:-1], c_new, 0.0]
        return LiftParams(self.r + 1, p, q, c, self.gamma_sq)

    def as_dict(self):
        return {
            "r": self.r,
            "p": self.p.tolist(),
            "q": self.q.tolist(),
            "c": self.c.tolist(),
            "gamma_sq": self.gamma_sq,
        }


@dataclass(frozen=True)
class ModelSpec:
    """Which model and lifting configuration to evaluate or solve."""

    s: int
    alpha: float
    r: int
    mode: Mode = "full"
    partial_cutoff: int | None = None

    def __post_init__(self):
        if self.s not in (1, -1):
            raise ValueError(f"s must be +1 or -1, got {self.s}")
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if int(self.r) < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "r", int(self.r))
        cutoff = max(self.r, 2) if self.partial_cutoff is None else int(self.partial_cutoff)
        if not 2 <= cutoff <= self.r + 1:
            raise ValueError(f"partial_cutoff must lie in [2, r+1], got {cutoff}")
        object.__setattr__(self, "partial_cutoff", cutoff)

    @property
    def model(self):
        return "positive" if self.s == 1 else "negative"

    def pinned_levels(self):
        """1-based levels k whose p_k, q_k are pinned to zero beyond p_{r+1}."""
        if self.mode != "partial":
            return ()
        return tuple(range(self.partial_cutoff, self.r + 1))


@dataclass(frozen=True)
class EvalResult:
    """Value of the functional with its additive breakdown.

    ``parts`` holds signed contributions, so ``psi_bar == sum(parts.values())``.
    """

    psi_bar: float
    free_energy: float
    parts: dict = field(default_factory=dict)


def theta_recursion(p, c, gamma_sq, s=1):
    """Return ``Theta_1..Theta_r`` as an array of length r.

    ``Theta_1 = 2 s gamma_sq`` and ``Theta_k = Theta_{k-1} - c_k (p_{k-1} - p_k)``.
    Raises :class:`DomainError` when some ``Theta_k`` vanishes or leaves the
    sign of ``Theta_1`` (the Gaussian integral behind the closed form diverges).
    """
    p = np.asarray(p, dtype=float)
    c = np.asarray(c, dtype=float)
    r = len(p) - 1
    theta = np.empty(r)
    theta[0] = 2.0 * s * gamma_sq
    if theta[0] == 0:
        raise DomainError("Theta_1 = 0: gamma_sq must be non-zero", index=1)
    for k in range(1, r):
        theta[k] = theta[k - 1] - c[k] * (p[k - 1] - p[k])
        if not theta[k] * theta[0] > 0:
            raise DomainError(
                f"Theta_{k + 1} = {theta[k]:.6g} has left the feasible region "
                f"(Theta_1 = {theta[0]:.6g})",
                index=k + 1,
            )
    return theta


def _h(y):
    """-log(1 - y) / y, continuous at y = 0."""
    if abs(y) < 1e-2:
        return sum(y ** (n - 1) / n for n in range(1, 13))
    return -np.log1p(-y) / y


def _dh(y):
    if abs(y) < 1e-2:
        return sum((n - 1) * y ** (n - 2) / n for n in range(2, 13))
    return (y / (1.0 - y) + np.log1p(-y)) / (y * y)


def _spherical_pieces(p, c, gamma_sq, s):
    theta = theta_recursion(p, c, gamma_sq, s)
    r = len(p) - 1
    pieces = []
    for k in range(1, r):
        delta = p[k - 1] - p[k]
        u = delta / theta[k - 1]
        ck = c[k] if c[k] >= C_COLLAPSE else 0.0
        pieces.append((delta, u, ck * u))
    return theta, pieces


def spherical_term(p, c, gamma_sq, s=1, alpha=1.0):
    """alpha times the closed-form spherical expectation.

    Equals ``alpha * (-sum_k log(Theta_k/Theta_{k-1}) / (2 c_k) + p_r / (2 Theta_r))``;
    a collapsed ``c_k`` contributes its limit ``(p_{k-1}-p_k) / (2 Theta_{k-1})``.
    """
    p = np.asarray(p, dtype=float)
    c = np.asarray(c, dtype=float)
    theta, pieces = _spherical_pieces(p, c, gamma_sq, s)
    r = len(p) - 1
    total = sum(0.5 * u * _h(y) for _, u, y in pieces)
    total += p[r - 1] / (2.0 * theta[r - 1])
    return alpha * total


def spherical_gradient(p, c, gamma_sq, s=1, alpha=1.0):
    """Exact partials of :func:`spherical_term`.

    Returns ``(d_gamma, d_p, d_c)`` where ``d_p`` and ``d_c`` have length r+1
    and hold the partials with respect to every entry (fixed ones included).
    Obtained by reverse accumulation through the Theta recursion.
    """
    p = np.asarray(p, dtype=float)
    c = np.asarray(c, dtype=float)
    theta, pieces = _spherical_pieces(p, c, gamma_sq, s)
    r = len(p) - 1
    pbar = np.zeros(r + 1)
    cbar = np.zeros(r + 1)
    thbar = np.zeros(r)
    pbar[r - 1] += 1.0 / (2.0 * theta[r - 1])
    thbar[r - 1] += -p[r - 1] / (2.0 * theta[r - 1] ** 2)
    for k in range(r - 1, 0, -1):
        delta, u, y = pieces[k - 1]
        h, dh = _h(y), _dh(y)
        ubar = 0.5 * (h + y * dh)
        cbar[k] += 0.5 * u * u * dh
        dbar = ubar / theta[k - 1]
        thbar[k - 1] += -ubar * u / theta[k - 1]
        # Theta_k = Theta_{k-1} - c_k * delta_k
        thbar[k - 1] += thbar[k]
        cbar[k] += -delta * thbar[k]
        dbar += -c[k] * thbar[k]
        pbar[k - 1] += dbar
        pbar[k] -= dbar
    return alpha * 2.0 * s * thbar[0], alpha * pbar, alpha * cbar


def quadratic_term(p, q, c):
    """``(1/2) sum_{k=2}^{r+1} (p_{k-1} q_{k-1} - p_k q_k) c_k``."""
    pq = np.asarray(p, dtype=float) * np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    return 0.5 * float(np.sum((pq[:-1] - pq[1:]) * c[1:]))


def psi_bar_parts(p, q, c, gamma_sq, s, alpha, grid=None):
    """Signed additive pieces of psi_bar for raw vectors.

    ``gamma_sq`` may carry either sign here, which is what allows the
    negative model to be checked against the positive expression at
    ``-gamma_sq``.
    """
    return {
        "quadratic_term": quadratic_term(p, q, c),
        "binary_term": -binary_term(q, c, grid),
        "gamma_term": -s * float(gamma_sq),
        "spherical_term": -float(spherical_term(p, c, gamma_sq, s, alpha)),
    }


def psi_bar_value(p, q, c, gamma_sq, s, alpha, grid=None):
    return float(sum(psi_bar_parts(p, q, c, gamma_sq, s, alpha, grid).values()))


def psi_rd_bar(params: LiftParams, spec: ModelSpec, grid: QuadratureGrid | None = None):
    """Evaluate the functional at ``params`` for the model in ``spec``.

    The negative model goes through the positive expression at
    ``-gamma_sq`` and is negated, so ``free_energy == -psi_bar`` for both.
    """
    if params.r != spec.r:
        raise ValueError(f"params are level {params.r} but spec is level {spec.r}")
    parts = psi_bar_parts(
        params.p, params.q, params.c, spec.s * params.gamma_sq, 1, spec.alpha, grid
    )
    parts = {k: spec.s * v for k, v in parts.items()}
    psi = float(sum(parts.values()))
    return EvalResult(psi_bar=psi, free_energy=-psi, parts=parts)
