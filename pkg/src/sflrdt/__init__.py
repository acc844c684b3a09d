"""Fully lifted random-dual bounds for the square-root Hopfield model.

Evaluates the lifted functional at a hierarchy ``(p, q, c, gamma_sq)``,
solves its stationarity conditions level by level and estimates the
finite-size ground state by exhaustive enumeration.
"""

from .errors import (
    ArgumentError,
    CapError,
    ConvergenceError,
    DomainError,
    ParseError,
    QuadratureError,
    SflrdtError,
)
from .model import (
    EvalResult,
    LiftParams,
    ModelSpec,
    psi_rd_bar,
    quadratic_term,
    spherical_gradient,
    spherical_term,
    theta_recursion,
)
from .oracle import OracleConfig, OracleEstimate, estimate_ground_state, extremal_norm
from .quadrature import (
    DEFAULT_GRID,
    QuadratureGrid,
    binary_overlaps,
    binary_term,
    hermite_rule,
    inner_abs_layer,
    spherical_term_quadrature,
)
from .solver import (
    SolveConfig,
    SolveReport,
    gradient,
    overlap_fixed_point_p,
    solve_modulo_m,
    solve_stationary,
)

__version__ = "0.1.0"
