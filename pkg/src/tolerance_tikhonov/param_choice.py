"""Choosing the regularization weight: L-curve corner and discrepancy principle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import Signal, format_float
from .experiments import _run_tasks, _solver_config
from .penalty import eps_measure
from .solver import SolverConfig, TikhonovProblem, minimize, residual_norm

__all__ = [
    "AlphaGrid",
    "LCurvePoint",
    "LCurveResult",
    "DiscrepancyReport",
    "log_alpha_grid",
    "menger_curvature",
    "lcurve",
    "morozov_select",
    "largest_feasible",
]


@dataclass(frozen=True, eq=False)
class AlphaGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.size == 0:
            raise ValueError("alpha grid is empty")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("alpha values must be positive and finite")
        if np.any(np.diff(v) <= 0):
            raise ValueError("alpha values must be strictly increasing")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)


def log_alpha_grid(lo: float = 1e-12, hi: float = 1.0, count: int = 40) -> AlphaGrid:
    return AlphaGrid(np.logspace(math.log10(lo), math.log10(hi), count))


@dataclass(frozen=True)
class LCurvePoint:
    alpha: float
    residual_norm: float
    penalty_norm: float


@dataclass(frozen=True, eq=False)
class LCurveResult:
    points: List[LCurvePoint]
    corner_alpha: Optional[float]
    curvature: np.ndarray  # nan where undefined

    header = ("alpha", "residual", "penalty")

    def rows(self):
        return [(p.alpha, p.residual_norm, p.penalty_norm) for p in self.points]


def menger_curvature(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Signed curvature of the circle through each interior triple of points.

    Entry ``i`` belongs to point ``i + 1``.  Positive for counter-clockwise
    turns.
    """
    p1 = np.stack([x[:-2], y[:-2]], axis=1)
    p2 = np.stack([x[1:-1], y[1:-1]], axis=1)
    p3 = np.stack([x[2:], y[2:]], axis=1)
    d12, d23, d13 = p2 - p1, p3 - p2, p3 - p1
    cross = d12[:, 0] * d23[:, 1] - d12[:, 1] * d23[:, 0]
    denom = (
        np.linalg.norm(d12, axis=1) * np.linalg.norm(d23, axis=1) * np.linalg.norm(d13, axis=1)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, 2.0 * cross / denom, np.nan)


def _solve_at(task):
    problem, alpha, config = task
    return minimize(problem.with_alpha(alpha), config).solution


def _solutions(problem, alphas, config, max_workers) -> List[Signal]:
    tasks = [(problem, float(a), config) for a in alphas]
    return _run_tasks(_solve_at, tasks, max_workers)


def lcurve(
    problem: TikhonovProblem,
    alphas: AlphaGrid,
    config: Optional[SolverConfig] = None,
    max_workers: int = 1,
) -> LCurveResult:
    """One solve per alpha; corner = maximum curvature of the log-log curve.

    Points whose residual or penalty measure is zero have no logarithm; they
    are reported but left out of the corner search.
    """
    config = _solver_config(config)
    spec = problem.penalty
    points = []
    for alpha, u in zip(alphas, _solutions(problem, alphas, config, max_workers)):
        points.append(
            LCurvePoint(
                float(alpha),
                residual_norm(problem, u),
                eps_measure(u - spec.reference, spec.q, spec.tolerance),
            )
        )
    curvature = np.full(len(points), np.nan)
    usable = [i for i, p in enumerate(points) if p.residual_norm > 0 and p.penalty_norm > 0]
    corner = None
    if len(usable) >= 3:
        x = np.log([points[i].residual_norm for i in usable])
        y = np.log([points[i].penalty_norm for i in usable])
        kappa = menger_curvature(x, y)
        curvature[usable[1:-1]] = kappa
        if np.any(np.isfinite(kappa)):
            corner = points[usable[1 + int(np.nanargmax(kappa))]].alpha
    return LCurveResult(points, corner, curvature)


@dataclass(frozen=True, eq=False)
class DiscrepancyReport:
    alpha_grid: AlphaGrid
    g_values: np.ndarray
    threshold: float
    alpha_opt: Optional[float]
    monotone: bool
    use_tolerance: bool
    tolerance_solution: Optional[Signal] = None
    classical_solution: Optional[Signal] = None

    @property
    def feasible(self) -> np.ndarray:
        return self.g_values <= self.threshold

    header = ("alpha", "G", "threshold", "feasible")

    def rows(self):
        return [
            (a, g, self.threshold, int(f))
            for a, g, f in zip(self.alpha_grid.values, self.g_values, self.feasible)
        ]

    def summary(self) -> dict:
        return {
            "alpha_opt": None if self.alpha_opt is None else format_float(self.alpha_opt),
            "monotone": self.monotone,
            "threshold": format_float(self.threshold),
            "use_tolerance": self.use_tolerance,
        }


def largest_feasible(alphas: AlphaGrid, g_values, threshold: float) -> Optional[int]:
    """Index of the largest alpha with ``G <= threshold``, or None.

    Works on any G sequence; no monotonicity is assumed.
    """
    idx = np.flatnonzero(np.asarray(g_values) <= threshold)
    return int(idx[-1]) if idx.size else None


def morozov_select(
    problem: TikhonovProblem,
    alphas: AlphaGrid,
    tau: float,
    delta: float,
    use_tolerance: bool = False,
    config: Optional[SolverConfig] = None,
    max_workers: int = 1,
) -> DiscrepancyReport:
    """Largest grid alpha with ``||K u_alpha - v|| <= tau * delta``.

    With ``use_tolerance=False`` the scan uses the classical functional
    (eps = 0) and the tolerance problem is then solved at the selected
    alpha; otherwise the scan uses the tolerance functional directly.  The
    discrepancy need not be monotone in alpha once tolerances enter, so the
    whole grid is scanned rather than bisected.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    config = _solver_config(config)
    scan_problem = problem if use_tolerance else problem.with_tolerance(0.0)
    sols = _solutions(scan_problem, alphas, config, max_workers)
    g = np.array([residual_norm(scan_problem, u) for u in sols])
    threshold = tau * delta
    best = largest_feasible(alphas, g, threshold)
    alpha_opt = None if best is None else float(alphas.values[best])
    monotone = bool(np.all(np.diff(g) >= 0))

    tol_sol = cls_sol = None
    if alpha_opt is not None:
        chosen = sols[best]
        if use_tolerance:
            tol_sol = chosen
            cls_sol = minimize(problem.with_tolerance(0.0).with_alpha(alpha_opt), config).solution
        else:
            cls_sol = chosen
            tol_sol = minimize(problem.with_alpha(alpha_opt), config).solution
    return DiscrepancyReport(
        alphas, g, threshold, alpha_opt, monotone, use_tolerance, tol_sol, cls_sol
    )
