"""Tikhonov functional with a tolerance penalty and its subgradient minimization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import LinearOperator, Signal, _check_same_grid, data_norm, format_float
from .penalty import PenaltySpec, _penalty_terms, penalty_subgradient, penalty_value

__all__ = [
    "TikhonovProblem",
    "SolverConfig",
    "SolveResult",
    "SolverError",
    "objective",
    "objective_subgradient",
    "residual_norm",
    "minimize",
    "classical_tikhonov",
    "write_history_csv",
]


class SolverError(RuntimeError):
    """Raised when the iteration produces a non-finite objective."""


@dataclass(frozen=True, eq=False)
class TikhonovProblem:
    """Forward operator, noisy data and the tolerance penalty.

    With ``scaling=True`` (default) the functional is

        J(u) = 1/2 ||K u - v||^2 + (alpha / q) R(u),

    otherwise ``||K u - v||^p + alpha R(u)``.  The data-term norm carries the
    grid weight ``h`` like every signal norm, so ``alpha`` balances two
    quantities of the same scale.
    """

    operator: LinearOperator
    data: Signal
    alpha: float
    penalty: PenaltySpec
    p: float = 2.0
    scaling: bool = True

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not 1.0 <= self.p <= 2.0:
            raise ValueError(f"p must lie in [1, 2], got {self.p}")
        _check_same_grid(self.operator.range_grid, self.data.grid)
        _check_same_grid(self.operator.domain_grid, self.penalty.grid)

    @property
    def grid(self):
        return self.operator.domain_grid

    def with_alpha(self, alpha: float) -> "TikhonovProblem":
        return replace(self, alpha=float(alpha))

    def with_tolerance(self, eps) -> "TikhonovProblem":
        return replace(self, penalty=self.penalty.with_tolerance(eps))

    def with_data(self, data: Signal) -> "TikhonovProblem":
        return replace(self, data=data)

    def _weights(self):
        """(data-term coefficient, penalty coefficient)."""
        if self.scaling:
            return 0.5, self.alpha / self.penalty.q
        return 1.0, self.alpha


def _data_term(problem: TikhonovProblem, r: np.ndarray) -> float:
    h = problem.operator.range_grid.h
    c, _ = problem._weights()
    if problem.scaling or problem.p == 2.0:
        return c * h * float(np.dot(r, r))
    return float((h * np.dot(r, r)) ** (problem.p / 2.0))


def objective(problem: TikhonovProblem, u: Signal) -> float:
    _check_same_grid(problem.grid, u.grid)
    r = problem.operator.matvec(u.values) - problem.data.values
    _, c_pen = problem._weights()
    pen = penalty_value(u, problem.penalty) if c_pen else 0.0
    return _data_term(problem, r) + c_pen * pen


def objective_subgradient(problem: TikhonovProblem, u: Signal) -> Signal:
    """An element of the subdifferential of the objective at ``u`` (p = 2 only)."""
    if problem.p != 2.0:
        raise NotImplementedError("subgradients are only provided for p = 2")
    _check_same_grid(problem.grid, u.grid)
    op = problem.operator
    r = op.matvec(u.values) - problem.data.values
    c_data, c_pen = problem._weights()
    g = 2.0 * c_data * op.range_grid.h * op.rmatvec(r)
    if c_pen:
        g = g + c_pen * penalty_subgradient(u, problem.penalty).element.values
    return u.with_values(g)


def residual_norm(problem: TikhonovProblem, u: Signal) -> float:
    """Discrepancy ``||K u - v||`` in the data norm (Euclidean)."""
    return data_norm(problem.operator.matvec(u.values) - problem.data.values)


@dataclass(frozen=True)
class SolverConfig:
    """Step schedule and stopping rule of :func:`minimize`.

    Step ``k`` is ``t0 * s / sqrt(1 + k / decay_horizon)``, where ``s``
    starts at 1 and is multiplied by ``shrink_factor`` whenever the best
    objective has not improved for ``patience`` consecutive iterations.
    ``initial_step=None`` takes ``t0`` as the inverse Lipschitz constant of
    the smooth part.  The run stops when the best objective improves by less
    than ``objective_tol`` (relative) over ``window`` iterations.
    """

    max_iters: int = 200_000
    initial_step: Optional[float] = None
    decay_horizon: float = 1000.0
    shrink_factor: float = 0.5
    patience: int = 50
    objective_tol: float = 1e-10
    window: int = 100

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError("shrink_factor must lie in (0, 1)")
        if not self.decay_horizon > 0:
            raise ValueError("decay_horizon must be positive")
        if self.objective_tol < 0 or self.patience < 1 or self.window < 1:
            raise ValueError("objective_tol >= 0, patience >= 1 and window >= 1 required")


@dataclass(frozen=True, eq=False)
class SolveResult:
    solution: Signal
    objective_history: np.ndarray
    residual_history: np.ndarray
    penalty_history: np.ndarray
    iterations_used: int
    converged: bool
    subgradient_norm: float = field(default=float("nan"))
    initial_step: float = field(default=float("nan"))

    @property
    def objective(self) -> float:
        return float(np.min(self.objective_history))


def default_step(problem: TikhonovProblem) -> float:
    """Inverse Lipschitz constant of the data term (plus the q = 2 penalty)."""
    c_data, c_pen = problem._weights()
    h = problem.operator.range_grid.h
    lip = 2.0 * c_data * h * problem.operator.norm**2
    if problem.penalty.q == 2.0:
        lip += 2.0 * c_pen * problem.grid.h
    return 1.0 / lip


def minimize(
    problem: TikhonovProblem,
    config: Optional[SolverConfig] = None,
    u0: Optional[Signal] = None,
) -> SolveResult:
    """Subgradient descent with a diminishing, adaptively shrunk step.

    Returns the best iterate by objective value.  Deterministic.
    """
    if problem.p != 2.0:
        raise NotImplementedError("the solver handles p = 2 only")
    config = config or SolverConfig()
    if u0 is None:
        u0 = problem.penalty.reference
    _check_same_grid(problem.grid, u0.grid)

    op = problem.operator
    v = problem.data.values
    ref = problem.penalty.reference.values
    eps = problem.penalty.tolerance.values
    q = problem.penalty.q
    h_dom = problem.grid.h
    h_rng = op.range_grid.h
    c_data, c_pen = problem._weights()

    def evaluate(u):
        r = op.matvec(u) - v
        pen, pen_grad = _penalty_terms(u - ref, eps, q, h_dom)
        f = c_data * h_rng * float(np.dot(r, r)) + c_pen * pen
        g = (2.0 * c_data * h_rng) * op.rmatvec(r)
        if c_pen:
            g += c_pen * pen_grad
        return f, g, r, pen

    t0 = config.initial_step if config.initial_step is not None else default_step(problem)
    n_max = config.max_iters
    obj = np.empty(n_max + 1)
    res = np.empty(n_max + 1)
    pen_hist = np.empty(n_max + 1)
    best_hist = np.empty(n_max + 1)

    u = np.array(u0.values, dtype=float)
    f, g, r, pen = evaluate(u)
    if not math.isfinite(f):
        raise SolverError("objective is not finite at the initial guess")
    obj[0], res[0], pen_hist[0] = f, np.linalg.norm(r), pen
    best_f, best_u, best_g = f, u.copy(), g
    best_hist[0] = best_f

    scale = 1.0
    stall = 0
    converged = False
    k = 0
    for k in range(1, n_max + 1):
        step = t0 * scale / math.sqrt(1.0 + (k - 1) / config.decay_horizon)
        u = u - step * g
        f, g, r, pen = evaluate(u)
        if not math.isfinite(f):
            raise SolverError(f"objective became non-finite at iteration {k} (step {step:.3g})")
        obj[k], res[k], pen_hist[k] = f, np.linalg.norm(r), pen
        if f < best_f:
            best_f, best_u, best_g = f, u.copy(), g
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                scale *= config.shrink_factor
                stall = 0
        best_hist[k] = best_f
        if k >= config.window:
            before = best_hist[k - config.window]
            if before - best_f <= config.objective_tol * abs(before):
                converged = True
                break

    n_used = k
    return SolveResult(
        solution=problem.penalty.reference.with_values(best_u),
        objective_history=obj[: n_used + 1].copy(),
        residual_history=res[: n_used + 1].copy(),
        penalty_history=pen_hist[: n_used + 1].copy(),
        iterations_used=n_used,
        converged=converged,
        subgradient_norm=float(np.linalg.norm(best_g)),
        initial_step=t0,
    )


def classical_tikhonov(problem: TikhonovProblem) -> Signal:
    """Direct normal-equations solve of the quadratic case (q = 2, eps = 0).

    Minimizes ``1/2 ||K u - v||^2 + alpha/2 ||u - u*||^2``; the grid weights
    cancel when domain and range share the spacing.
    """
    spec = problem.penalty
    if spec.q != 2.0 or np.any(np.asarray(spec.tolerance.values) != 0):
        raise ValueError("the direct solve covers q = 2 without tolerance only")
    K = problem.operator.matrix
    h_ratio = problem.operator.range_grid.h / problem.grid.h
    lhs = h_ratio * (K.T @ K) + problem.alpha * np.eye(problem.grid.n)
    rhs = h_ratio * (K.T @ problem.data.values) + problem.alpha * spec.reference.values
    return spec.reference.with_values(np.linalg.solve(lhs, rhs))


def write_history_csv(path, result: SolveResult) -> None:
    with open(path, "w", newline="") as f:
        f.write("iter,objective,residual,penalty\n")
        for i, (o, r, p) in enumerate(
            zip(result.objective_history, result.residual_history, result.penalty_history)
        ):
            f.write(f"{i},{format_float(o)},{format_float(r)},{format_float(p)}\n")
