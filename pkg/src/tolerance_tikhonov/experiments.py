"""Numerical studies: noisy differentiation with tolerances, error sweeps,
empirical convergence rates and the Fourier sparsity example.

Randomness is derived from one integer seed through named substreams, so a
run is reproducible given ``(seed, stream, index)`` alone.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .core import Grid, Signal, apply, data_norm, integration_operator, make_grid, weighted_norm
from .penalty import (
    PenaltySpec,
    _modulus,
    bregman_distance,
    eps_measure,
    penalty_subgradient,
)
from .solver import SolverConfig, TikhonovProblem, minimize

log = logging.getLogger(__name__)

__all__ = [
    "NoiseModel",
    "TubeSampler",
    "substream_seed",
    "add_noise",
    "sample_tube",
    "sin2pi_reference",
    "ComparisonConfig",
    "Comparison",
    "compare_reconstructions",
    "make_problem_data",
    "SweepConfig",
    "SweepReport",
    "error_sweep",
    "RateConfig",
    "RateReport",
    "rate_study",
    "rate_c_sweep",
    "FourierTable",
    "fourier_coefficients",
    "fourier_demo",
    "loglog_slope",
]

_STREAMS = {"noise": 1, "tube": 2, "run": 3}


def substream_seed(seed: int, stream: str, index: int = 0) -> int:
    """Independent integer seed for a named substream of ``seed``."""
    ss = np.random.SeedSequence([int(seed), _STREAMS[stream], int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian noise rescaled to Euclidean norm exactly ``delta``."""

    delta: float
    seed: int = 0
    mode: str = "fixed-norm-gaussian"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"noise level must be positive, got {self.delta}")
        if self.mode != "fixed-norm-gaussian":
            raise ValueError(f"unknown noise mode {self.mode!r}")


def add_noise(v: Signal, model: NoiseModel) -> Signal:
    rng = np.random.default_rng(model.seed)
    g = rng.standard_normal(v.grid.n)
    while not np.any(g):
        g = rng.standard_normal(v.grid.n)
    return v.with_values(v.values + g * (model.delta / data_norm(g)))


@dataclass(frozen=True, eq=False)
class TubeSampler:
    """Smooth random perturbations of ``reference`` confined to its tube."""

    reference: Signal
    eps: float
    sigma: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def smooth_perturbation(grid: Grid, sigma: float, seed: int):
    """White noise and its Gaussian-smoothed, sup-normalized version."""
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(grid.n)
    smooth = gaussian_filter1d(white, sigma / grid.h, mode="reflect", truncate=4.0)
    return white, smooth / np.max(np.abs(smooth))


def sample_tube(sampler: TubeSampler) -> Signal:
    """``u* + eps * eta`` with smooth ``eta``, ``max |eta| = 1``."""
    ref = sampler.reference
    _, eta = smooth_perturbation(ref.grid, sampler.sigma, sampler.seed)
    return ref.with_values(ref.values + sampler.eps * eta)


def sin2pi_reference(grid: Grid) -> Signal:
    return Signal.from_function(grid, lambda x: np.sin(2 * np.pi * x))


def _solver_config(config: Optional[SolverConfig]) -> SolverConfig:
    return config if config is not None else SolverConfig(max_iters=20_000)


def _run_tasks(func: Callable, tasks: Sequence, max_workers: int) -> list:
    if max_workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(func, tasks))


# -- noisy differentiation, tolerance versus classical ------------------------

@dataclass(frozen=True)
class ComparisonConfig:
    n: int = 600
    eps: float = 0.3
    delta: float = 0.001
    alpha: float = 0.001
    q: float = 1.0
    sigma: float = 0.08
    seed: int = 0
    run: int = 0
    true_eps: Optional[float] = None
    solver: Optional[SolverConfig] = None


@dataclass(frozen=True, eq=False)
class Comparison:
    truth: Signal
    reference: Signal
    data: Signal
    tolerance_solution: Signal
    classical_solution: Signal
    tolerance_result: object
    classical_result: object

    @property
    def tolerance_error(self) -> float:
        return weighted_norm(self.tolerance_solution - self.truth, 2)

    @property
    def classical_error(self) -> float:
        return weighted_norm(self.classical_solution - self.truth, 2)


def make_problem_data(n: int, eps_true: float, delta: float, sigma: float, seed: int, run: int):
    """Reference, ground truth in its tube and noisy data for one run."""
    grid = make_grid(n, 0.0, 1.0)
    op = integration_operator(grid)
    ref = sin2pi_reference(grid)
    truth = sample_tube(TubeSampler(ref, eps_true, sigma, substream_seed(seed, "tube", run)))
    data = add_noise(apply(op, truth), NoiseModel(delta, substream_seed(seed, "noise", run)))
    return op, ref, truth, data


def compare_reconstructions(config: ComparisonConfig) -> Comparison:
    """Solve the same noisy data with the tolerance penalty and with eps = 0."""
    eps_true = config.eps if config.true_eps is None else config.true_eps
    op, ref, truth, data = make_problem_data(
        config.n, eps_true, config.delta, config.sigma, config.seed, config.run
    )
    solver = _solver_config(config.solver)
    problem = TikhonovProblem(op, data, config.alpha, PenaltySpec(config.q, ref, config.eps))
    tol = minimize(problem, solver)
    classical = minimize(problem.with_tolerance(0.0), solver)
    return Comparison(truth, ref, data, tol.solution, classical.solution, tol, classical)


# -- mean error versus tolerance ---------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    n: int = 600
    q: float = 1.0
    eps_values: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2)
    runs: int = 50
    delta: float = 0.005
    alpha: float = 0.001
    sigma: float = 0.08
    seed: int = 0
    solver: Optional[SolverConfig] = None
    max_workers: int = 1


@dataclass(frozen=True, eq=False)
class SweepReport:
    """Per-eps error statistics; ``errors_*`` have shape (len(eps), runs)."""

    eps_values: np.ndarray
    q: float
    runs: int
    errors_tol: np.ndarray
    errors_classical: np.ndarray
    l2_errors_tol: np.ndarray
    l2_errors_classical: np.ndarray

    @property
    def mean_error_tol(self) -> np.ndarray:
        return self.errors_tol.mean(axis=1)

    @property
    def mean_error_classical(self) -> np.ndarray:
        return self.errors_classical.mean(axis=1)

    @staticmethod
    def _stderr(a: np.ndarray) -> np.ndarray:
        if a.shape[1] < 2:
            return np.zeros(a.shape[0])
        return a.std(axis=1, ddof=1) / math.sqrt(a.shape[1])

    @property
    def stderr_tol(self) -> np.ndarray:
        return self._stderr(self.errors_tol)

    @property
    def stderr_classical(self) -> np.ndarray:
        return self._stderr(self.errors_classical)

    def rows(self):
        cols = (
            self.eps_values,
            self.mean_error_tol,
            self.mean_error_classical,
            self.stderr_tol,
            self.stderr_classical,
            self.l2_errors_tol.mean(axis=1),
            self.l2_errors_classical.mean(axis=1),
        )
        return list(zip(*cols))

    header = (
        "eps",
        "mean_error_tol",
        "mean_error_classical",
        "stderr_tol",
        "stderr_classical",
        "mean_l2_error_tol",
        "mean_l2_error_classical",
    )


def _sweep_task(task):
    config, eps, run = task
    op, ref, truth, data = make_problem_data(
        config.n, eps, config.delta, config.sigma, config.seed, run
    )
    solver = _solver_config(config.solver)
    problem = TikhonovProblem(op, data, config.alpha, PenaltySpec(config.q, ref, eps))
    try:
        u_tol = minimize(problem, solver).solution
        # eps = 0 is already the classical problem; the solver is deterministic
        u_cls = u_tol if eps == 0 else minimize(problem.with_tolerance(0.0), solver).solution
    except Exception as exc:
        raise RuntimeError(f"sweep run {run} at eps={eps} failed: {exc}") from exc
    return (
        eps_measure(u_tol - truth, config.q, eps),
        eps_measure(u_cls - truth, config.q, eps),
        weighted_norm(u_tol - truth, 2),
        weighted_norm(u_cls - truth, 2),
    )


def error_sweep(config: SweepConfig) -> SweepReport:
    """Mean epsilon-insensitive reconstruction error over ``runs`` draws per eps.

    Each draw samples a truth in the tube, adds noise, then solves once with
    the tolerance penalty and once with eps = 0 on the same data.  Both
    errors are measured in the epsilon-insensitive measure of that eps.
    """
    eps_values = np.asarray(config.eps_values, dtype=float)
    tasks = [(config, float(e), r) for e in eps_values for r in range(config.runs)]
    out = np.array(_run_tasks(_sweep_task, tasks, config.max_workers)).reshape(
        eps_values.size, config.runs, 4
    )
    return SweepReport(
        eps_values=eps_values,
        q=config.q,
        runs=config.runs,
        errors_tol=out[:, :, 0],
        errors_classical=out[:, :, 1],
        l2_errors_tol=out[:, :, 2],
        l2_errors_classical=out[:, :, 3],
    )


# -- convergence rates -------------------------------------------------------

@dataclass(frozen=True)
class RateConfig:
    n: int = 600
    q: float = 2.0
    eps: float = 0.3
    delta0: float = 0.05
    levels: int = 7
    c: float = 0.1
    sigma: float = 0.08
    seed: int = 0
    solver: Optional[SolverConfig] = None

    @property
    def deltas(self) -> np.ndarray:
        return self.delta0 * 2.0 ** -np.arange(self.levels)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x over positive pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if np.count_nonzero(~keep):
        log.warning("dropping %d non-positive values from the log-log fit", np.count_nonzero(~keep))
    if np.count_nonzero(keep) < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass(frozen=True, eq=False)
class RateReport:
    deltas: np.ndarray
    alphas: np.ndarray
    residual_values: np.ndarray
    bregman_values: np.ndarray

    @property
    def residual_slope(self) -> float:
        return loglog_slope(self.deltas, self.residual_values)

    @property
    def bregman_slope(self) -> float:
        return loglog_slope(self.deltas, self.bregman_values)

    header = ("delta", "alpha", "residual", "bregman")

    def rows(self):
        return list(zip(self.deltas, self.alphas, self.residual_values, self.bregman_values))


def rate_study(config: RateConfig) -> RateReport:
    """Residual and Bregman distance to the truth along a halving noise ladder.

    The truth is drawn once; the same noise direction is rescaled to each
    level and ``alpha = c * delta``.
    """
    grid = make_grid(config.n, 0.0, 1.0)
    op = integration_operator(grid)
    ref = sin2pi_reference(grid)
    truth = sample_tube(TubeSampler(ref, config.eps, config.sigma, substream_seed(config.seed, "tube")))
    v = apply(op, truth)
    spec = PenaltySpec(config.q, ref, config.eps)
    xi = penalty_subgradient(truth, spec)
    solver = _solver_config(config.solver)
    deltas = config.deltas
    alphas = config.c * deltas
    residuals, bregman = [], []
    noise_seed = substream_seed(config.seed, "noise")
    for delta, alpha in zip(deltas, alphas):
        data = add_noise(v, NoiseModel(float(delta), noise_seed))
        problem = TikhonovProblem(op, data, float(alpha), spec)
        u = minimize(problem, solver).solution
        residuals.append(data_norm(apply(op, u) - data))
        bregman.append(bregman_distance(u, truth, spec, xi))
    return RateReport(deltas, alphas, np.array(residuals), np.array(bregman))


def rate_c_sweep(config: RateConfig, c_values: Sequence[float] = (0.01, 0.1, 1.0)) -> list:
    """Repeat :func:`rate_study` for several constants ``c`` in ``alpha = c * delta``.

    Returns ``(c, residual_slope, bregman_slope)`` rows; a robustness check
    on the otherwise arbitrary choice of ``c``.
    """
    rows = []
    for c in c_values:
        report = rate_study(replace(config, c=float(c)))
        rows.append((float(c), report.residual_slope, report.bregman_slope))
    return rows


# -- Fourier coefficients of u and d_eps(u) -----------------------------------

@dataclass(frozen=True, eq=False)
class FourierTable:
    """Cosine/sine coefficients ``a_n, b_n`` for ``n = 0 .. n_terms-1``."""

    eps: float
    orders: np.ndarray
    a_u: np.ndarray
    b_u: np.ndarray
    a_d: np.ndarray
    b_d: np.ndarray
    threshold: float = 1e-8
    refinement_change: float = field(default=float("nan"))

    @property
    def nonzero_u(self) -> int:
        return int(np.count_nonzero(np.abs(np.concatenate([self.a_u, self.b_u])) > self.threshold))

    @property
    def nonzero_d(self) -> int:
        return int(np.count_nonzero(np.abs(np.concatenate([self.a_d, self.b_d])) > self.threshold))

    header = ("n", "a_u", "b_u", "a_d", "b_d")

    def rows(self):
        return list(zip(self.orders, self.a_u, self.b_u, self.a_d, self.b_d))


def _gauss_panels(breaks: np.ndarray, samples: int, order: int = 8):
    """Composite Gauss-Legendre nodes/weights with panel edges at ``breaks``."""
    x_ref, w_ref = np.polynomial.legendre.leggauss(order)
    lengths = np.diff(breaks)
    total_panels = max(samples // order, breaks.size - 1)
    counts = np.maximum(1, np.round(total_panels * lengths / lengths.sum()).astype(int))
    nodes, weights = [], []
    for lo, hi, m in zip(breaks[:-1], breaks[1:], counts):
        edges = np.linspace(lo, hi, m + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        half = 0.5 * np.diff(edges)[:, None]
        nodes.append((mid + half * x_ref).ravel())
        weights.append((half * w_ref).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def fourier_coefficients(
    func: Callable[[np.ndarray], np.ndarray],
    n_terms: int,
    interval=(-2 * np.pi, 2 * np.pi),
    breakpoints: Sequence[float] = (),
    samples: int = 4096,
):
    """Fourier coefficients of a 2pi-periodic ``func`` sampled over ``interval``.

    ``a_n = (2/L) int f(t) cos(n t) dt`` and likewise ``b_n`` with sine, where
    ``L`` is the interval length (a whole number of periods).  Panels are
    split at ``breakpoints`` so kinks do not spoil the quadrature.
    """
    lo, hi = interval
    breaks = np.unique(np.concatenate([[lo, hi], [b for b in breakpoints if lo < b < hi]]))
    t, w = _gauss_panels(breaks, samples)
    f = func(t) * w
    orders = np.arange(n_terms)
    scale = 2.0 / (hi - lo)
    a = scale * (np.cos(np.outer(orders, t)) @ f)
    b = scale * (np.sin(np.outer(orders, t)) @ f)
    return a, b


def _sin_kinks(eps: float, interval) -> np.ndarray:
    lo, hi = interval
    k = np.arange(math.floor(lo / np.pi) - 1, math.ceil(hi / np.pi) + 2)
    pts = [k * np.pi]
    if 0 < eps < 1:
        s = math.asin(eps)
        pts += [k * np.pi + s, k * np.pi - s]
    return np.concatenate(pts)


def fourier_demo(eps: float = 0.75, n_terms: int = 20, samples: int = 4096) -> FourierTable:
    """Coefficients of ``sin`` and ``d_eps(sin)`` on two periods ``[-2pi, 2pi]``."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    interval = (-2 * np.pi, 2 * np.pi)
    kinks = _sin_kinks(eps, interval)

    def d_eps(t):
        return _modulus(np.sin(t), eps)

    a_u, b_u = fourier_coefficients(np.sin, n_terms, interval, kinks, samples)
    a_d, b_d = fourier_coefficients(d_eps, n_terms, interval, kinks, samples)
    a_d2, b_d2 = fourier_coefficients(d_eps, n_terms, interval, kinks, 2 * samples)
    change = float(max(np.max(np.abs(a_d2 - a_d)), np.max(np.abs(b_d2 - b_d))))
    return FourierTable(eps, np.arange(n_terms), a_u, b_u, a_d, b_d, refinement_change=change)
