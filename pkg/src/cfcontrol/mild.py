"""Fixed-point solution of the semilinear integral equation.

A mild trajectory satisfies the variation-of-constants equation

    x(t_i) = op(i, 0) x0
             + int_{tau_0}^{tau_i} op(i, s) [B u(s) + F(s, x(s))] dtau_s

on the grid, with the integral discretized by trapezoid weights in tau.
``picard_solve`` iterates the right-hand side starting from the homogeneous
trajectory (fewer iterations than a cold start, same fixed point whenever
the iteration contracts) and reports the residual of the discrete equation
for the converged iterate.

``contraction_report`` evaluates the small-gain quantity

    lhs = ||B|| * ||H|| * M * gamma * N  +  gamma * M * N

where M bounds the propagator, ||H|| is the estimated norm of the
state-to-control gain, gamma is the (pointwise) growth constant of the
nonlinearity, and N is the horizon factor
``(t2**(2a-1) - t1**(2a-1)) / (2a-1)`` with the removable singularity at
a = 1/2 replaced by ``log(t2/t1)``.  The report is informational; it gates
nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError, DomainError
from .grids import GridFunction, TimeGrid
from .evolution import OperatorFamily, PropagatorTable

__all__ = [
    "ControlProblem",
    "ContractionReport",
    "PicardResult",
    "picard_solve",
    "contraction_report",
    "horizon_factor",
    "estimate_growth_constant",
]

_HALF_ORDER_TOL = 1e-8
_DIVERGENCE_FACTOR = 1e8


@dataclass
class ControlProblem:
    """Data of a semilinear control problem on a fixed grid.

    ``nonlinearity`` maps (t, state) to a state increment; ``None`` means
    zero.  ``control`` is a grid function of input values or ``None``.
    """

    family: OperatorFamily
    grid: TimeGrid
    x0: np.ndarray
    b_matrix: np.ndarray
    nonlinearity: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    control: Optional[GridFunction] = None
    picard_tol: float = 1e-9
    max_iter: int = 50

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.b_matrix = np.atleast_2d(np.asarray(self.b_matrix, dtype=float))
        d = self.family.dim
        if self.x0.shape != (d,):
            raise DomainError(f"x0 has shape {self.x0.shape}, expected ({d},)")
        if self.b_matrix.shape[0] != d:
            raise DomainError(
                f"control matrix has {self.b_matrix.shape[0]} rows, expected {d}"
            )
        if self.control is not None and self.control.dim != self.b_matrix.shape[1]:
            raise DomainError("control width does not match the input matrix")
        if self.picard_tol <= 0.0:
            raise DomainError("picard_tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


@dataclass
class ContractionReport:
    """Numbers entering the small-gain condition, plus the verdict."""

    propagator_bound: float
    horizon_factor: float
    gamma_growth: float
    input_norm: float
    gain_norm: float
    lhs: float
    satisfied: bool


class PicardResult(NamedTuple):
    trajectory: GridFunction
    iterations: int
    residual: float
    update_norms: tuple = ()


def _homogeneous(table: PropagatorTable, x0: np.ndarray) -> np.ndarray:
    n = table.grid.n_nodes
    out = np.zeros((n, x0.size))
    out[0] = x0
    for i in range(1, n):
        out[i] = table.apply(i, 0, x0)
    return out


def _volterra_accumulate(table: PropagatorTable, values: np.ndarray,
                         h: float) -> np.ndarray:
    """Trapezoid accumulation int_0^{tau_i} op(i, r) values[r] dtau_r."""
    n, d = values.shape
    acc = np.zeros((n, d))
    for i in range(1, n):
        row = table.apply_row(i, values[: i + 1])
        acc[i] = h * (0.5 * row[0] + row[1:i].sum(axis=0) + 0.5 * row[i])
    return acc


def picard_solve(problem: ControlProblem,
                 propagator: PropagatorTable,
                 x_init: Optional[np.ndarray] = None) -> PicardResult:
    """Iterate the discrete integral equation to its fixed point.

    Parameters
    ----------
    problem : ControlProblem
        Must share its grid with ``propagator``.
    propagator : PropagatorTable
        Full-pair table on the problem grid.
    x_init : ndarray, optional
        Starting trajectory of shape (n_nodes, dim); defaults to the
        homogeneous trajectory.

    Returns
    -------
    PicardResult
        Converged trajectory, the number of sweeps used, and the sup-norm
        residual of the discrete equation.

    Raises
    ------
    ConvergenceError
        If the update norms fail to reach ``picard_tol`` within
        ``max_iter`` sweeps or grow past a divergence guard.
    """
    if propagator.grid is not problem.grid:
        raise DomainError("propagator and problem must share the same grid")
    grid = problem.grid
    n, d = grid.n_nodes, problem.family.dim
    h = grid.h
    hom = _homogeneous(propagator, problem.x0)

    drive = np.zeros((n, d))
    if problem.control is not None:
        drive = problem.control.values @ problem.b_matrix.T

    fun = problem.nonlinearity

    def rhs_for(x):
        values = drive.copy()
        if fun is not None:
            for r in range(n):
                values[r] += np.asarray(fun(grid.t_nodes[r], x[r]), dtype=float)
        return hom + _volterra_accumulate(propagator, values, h)

    x = hom.copy() if x_init is None else np.array(x_init, dtype=float)
    if x.shape != (n, d):
        raise DomainError(f"x_init has shape {x.shape}, expected {(n, d)}")

    guard = _DIVERGENCE_FACTOR * max(1.0, float(np.linalg.norm(problem.x0)))
    update = math.inf
    updates = []
    for iteration in range(1, problem.max_iter + 1):
        new = rhs_for(x)
        update = float(np.max(np.linalg.norm(new - x, axis=1)))
        updates.append(update)
        x = new
        if not np.isfinite(update) or update > guard:
            raise ConvergenceError(
                f"fixed-point sweep diverged (update norm {update:.3e})",
                last_norm=update,
            )
        if update <= problem.picard_tol:
            residual = float(np.max(np.linalg.norm(rhs_for(x) - x, axis=1)))
            return PicardResult(GridFunction(grid, x), iteration, residual,
                                tuple(updates))
    raise ConvergenceError(
        f"no convergence in {problem.max_iter} sweeps "
        f"(last update norm {update:.3e})",
        last_norm=update,
    )


def horizon_factor(alpha: float, t1: float, t2: float) -> float:
    """Horizon-dependent constant of the small-gain condition.

    ``(t2**(2a-1) - t1**(2a-1)) / (2a-1)``, continuous in alpha; within
    1e-8 of alpha = 1/2 the log limit ``log(t2/t1)`` is used.  Diverges
    (returns inf) when t1 = 0 and the exponent is nonpositive.
    """
    if t2 <= t1 or t1 < 0.0:
        raise DomainError("need 0 <= t1 < t2")
    expo = 2.0 * alpha - 1.0
    if abs(expo) < _HALF_ORDER_TOL:
        return math.inf if t1 == 0.0 else math.log(t2 / t1)
    if t1 == 0.0 and expo < 0.0:
        return math.inf
    return (t2**expo - t1**expo) / expo


def estimate_growth_constant(fun: Callable[[float, np.ndarray], np.ndarray],
                             grid: TimeGrid,
                             dim: int,
                             radius: float = 1.0,
                             n_samples: int = 64,
                             rng: Optional[np.random.Generator] = None) -> float:
    """Sampled estimate of the growth constant sup ||F(t, x)|| / ||x||.

    Draws states in the ball of the given radius and maximizes the ratio
    over grid nodes.  Exact for linear gains; a (random) lower bound in
    general, which is why the report also accepts a user-supplied value.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(n_samples):
        x = rng.standard_normal(dim)
        x *= radius * rng.uniform(0.05, 1.0) / np.linalg.norm(x)
        nx = np.linalg.norm(x)
        for t in grid.t_nodes:
            fx = np.asarray(fun(t, x), dtype=float)
            worst = max(worst, float(np.linalg.norm(fx)) / nx)
    return worst


def contraction_report(problem: ControlProblem,
                       propagator: PropagatorTable,
                       gramian,
                       gamma_growth: Optional[float] = None) -> ContractionReport:
    """Assemble the small-gain report for a problem.

    ``gamma_growth`` should be the (pointwise) growth constant of the
    nonlinearity; when omitted it is estimated by sampling (zero when the
    problem has no nonlinearity).
    """
    if gamma_growth is None:
        if problem.nonlinearity is None:
            gamma_growth = 0.0
        else:
            gamma_growth = estimate_growth_constant(
                problem.nonlinearity, problem.grid, problem.family.dim)
    m_bound = propagator.norm_bound
    b_norm = float(np.linalg.norm(problem.b_matrix, 2))
    h_norm = gramian.gain_norm_est
    n_const = horizon_factor(problem.grid.order.alpha,
                             problem.grid.t_start, problem.grid.t_end)
    if gamma_growth == 0.0:
        lhs = 0.0
    else:
        lhs = gamma_growth * m_bound * n_const * (b_norm * h_norm + 1.0)
    return ContractionReport(
        propagator_bound=m_bound,
        horizon_factor=n_const,
        gamma_growth=gamma_growth,
        input_norm=b_norm,
        gain_norm=h_norm,
        lhs=lhs,
        satisfied=bool(lhs < 1.0),
    )
