import numpy as np
import pytest

from tolerance_tikhonov.core import Signal, apply, integration_operator, make_grid
from tolerance_tikhonov.experiments import add_noise, NoiseModel
from tolerance_tikhonov.param_choice import (
    AlphaGrid,
    largest_feasible,
    lcurve,
    log_alpha_grid,
    menger_curvature,
    morozov_select,
)
from tolerance_tikhonov.penalty import PenaltySpec
from tolerance_tikhonov.solver import SolverConfig, TikhonovProblem, classical_tikhonov, residual_norm

FAST = SolverConfig(max_iters=20_000)


def small_problem(n=60, eps=0.2, q=2, delta=0.01, seed=0):
    g = make_grid(n)
    K = integration_operator(g)
    ref = Signal.from_function(g, lambda x: np.sin(2 * np.pi * x))
    truth = ref + 0.5 * np.cos(2.5 * np.pi * g.nodes)
    data = add_noise(apply(K, truth), NoiseModel(delta, seed))
    return TikhonovProblem(K, data, 1.0, PenaltySpec(q, ref, eps))


def test_alpha_grid_validation():
    assert len(AlphaGrid([1e-3, 1e-2, 1.0])) == 3
    for bad in ([], [1.0, 1.0], [1.0, 0.5], [0.0, 1.0], [-1.0, 1.0], [1.0, np.inf]):
        with pytest.raises(ValueError):
            AlphaGrid(bad)


def test_log_alpha_grid_defaults():
    grid = log_alpha_grid()
    assert len(grid) == 40
    assert grid.values[0] == pytest.approx(1e-12)
    assert grid.values[-1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        grid.values[0] = 3.0


@pytest.mark.parametrize("radius", [0.5, 2.0, 10.0])
def test_menger_curvature_of_circle(radius):
    t = np.linspace(0, np.pi, 9)
    kappa = menger_curvature(radius * np.cos(t), radius * np.sin(t))
    assert np.allclose(kappa, 1.0 / radius, rtol=1e-12)
    kappa_cw = menger_curvature(radius * np.cos(-t), radius * np.sin(-t))
    assert np.allclose(kappa_cw, -1.0 / radius, rtol=1e-12)


def test_menger_curvature_collinear_and_degenerate():
    x = np.array([0.0, 1.0, 2.0, 2.0])
    y = np.array([0.0, 1.0, 2.0, 2.0])
    kappa = menger_curvature(x, y)
    assert kappa[0] == 0.0
    assert np.isnan(kappa[1])


def test_largest_feasible_does_not_assume_monotonicity():
    grid = AlphaGrid([1e-4, 1e-3, 1e-2, 1e-1, 1.0])
    g = np.array([0.5, 2.0, 0.7, 3.0, 5.0])  # dips back under the threshold
    assert largest_feasible(grid, g, 1.0) == 2
    assert largest_feasible(grid, g, 0.1) is None
    assert largest_feasible(grid, g, 10.0) == 4


def test_classical_lcurve_traces_monotone_tradeoff():
    problem = small_problem(eps=0.0)
    alphas = AlphaGrid(np.logspace(-3, 0, 7))
    result = lcurve(problem, alphas, FAST)
    res = np.array([p.residual_norm for p in result.points])
    pen = np.array([p.penalty_norm for p in result.points])
    # oracle: direct normal-equation solves
    direct = [classical_tikhonov(problem.with_alpha(a)) for a in alphas]
    res_direct = np.array([residual_norm(problem, u) for u in direct])
    assert np.allclose(res, res_direct, rtol=1e-3, atol=1e-6)
    assert np.all(np.diff(res_direct) >= 0)
    assert np.all(np.diff(res) >= -1e-6)
    assert np.all(np.diff(pen) <= 1e-6)
    assert result.corner_alpha in alphas.values
    assert len(result.rows()) == 7 and result.header == ("alpha", "residual", "penalty")


def test_lcurve_wider_tolerance_gives_smaller_penalty():
    alphas = AlphaGrid([1e-4, 1e-3, 1e-2])
    narrow = lcurve(small_problem(eps=0.1), alphas, FAST)
    wide = lcurve(small_problem(eps=0.3), alphas, FAST)
    for a, b in zip(narrow.points, wide.points):
        assert b.penalty_norm <= a.penalty_norm + 1e-9


def test_lcurve_huge_alpha_pins_penalty_to_zero():
    alphas = AlphaGrid([1e4, 1e5, 1e6])
    result = lcurve(small_problem(eps=0.2, q=1), alphas, SolverConfig(max_iters=5000))
    assert all(p.penalty_norm <= 1e-6 for p in result.points)
    assert result.corner_alpha is None


def test_morozov_all_feasible_returns_largest_alpha():
    problem = small_problem()
    alphas = AlphaGrid([1e-3, 1e-2, 1e-1])
    report = morozov_select(problem, alphas, tau=1e6, delta=1.0, config=FAST)
    assert report.alpha_opt == 1e-1
    assert report.feasible.all()
    assert report.tolerance_solution is not None and report.classical_solution is not None


def test_morozov_selection_is_maximal_feasible():
    problem = small_problem(delta=0.05)
    alphas = AlphaGrid(np.logspace(-3, 0, 7))
    report = morozov_select(problem, alphas, tau=2.0, delta=0.05, config=FAST)
    assert report.alpha_opt is not None
    idx = int(np.flatnonzero(alphas.values == report.alpha_opt)[0])
    assert report.g_values[idx] <= report.threshold
    assert np.all(report.g_values[idx + 1:] > report.threshold)
    # classical scan: G agrees with the direct solve and is monotone in alpha
    direct = [residual_norm(problem, classical_tikhonov(problem.with_tolerance(0.0).with_alpha(a))) for a in alphas]
    assert np.allclose(report.g_values, direct, rtol=1e-3, atol=1e-6)
    assert report.monotone
    rows = report.rows()
    assert rows[idx][3] == 1 and report.header[-1] == "feasible"


def test_morozov_nothing_feasible():
    problem = small_problem(delta=0.1)
    alphas = AlphaGrid([1e-2, 1e-1, 1.0])
    report = morozov_select(problem, alphas, tau=1.0, delta=1e-6, config=FAST)
    assert report.alpha_opt is None
    assert not report.feasible.any()
    assert report.tolerance_solution is None and report.classical_solution is None
    assert report.summary()["alpha_opt"] is None


def test_morozov_direct_protocol_uses_tolerance_functional():
    problem = small_problem(eps=0.3, delta=0.01)
    alphas = AlphaGrid([1e-2, 1e-1, 1.0])
    direct = morozov_select(problem, alphas, 4.0, 0.01, use_tolerance=True, config=FAST)
    transfer = morozov_select(problem, alphas, 4.0, 0.01, use_tolerance=False, config=FAST)
    # the wider tube can only lower the discrepancy at fixed alpha
    assert np.all(direct.g_values <= transfer.g_values * (1 + 1e-3) + 1e-9)


def test_morozov_argument_validation():
    problem = small_problem()
    alphas = AlphaGrid([1.0])
    with pytest.raises(ValueError):
        morozov_select(problem, alphas, tau=0.5, delta=0.1)
    with pytest.raises(ValueError):
        morozov_select(problem, alphas, tau=2.0, delta=0.0)
