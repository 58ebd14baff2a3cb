import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tolerance_tikhonov.core import Signal, make_grid, weighted_norm
from tolerance_tikhonov.penalty import (
    PenaltySpec,
    Subgradient,
    ToleranceProfile,
    bregman_distance,
    eps_measure,
    eps_modulus,
    penalty_subgradient,
    penalty_value,
    read_tolerance_csv,
    write_tolerance_csv,
)

GRID = make_grid(64, 0, 1)


def rand_signal(rng, scale=1.0, grid=GRID):
    return Signal(grid, scale * rng.standard_normal(grid.n))


def brute_penalty(u, ref, eps, q, h):
    total = 0.0
    for ui, ri, ei in zip(u, ref, np.broadcast_to(eps, len(u))):
        total += max(abs(ui - ri) - ei, 0.0) ** q
    return h * total


def test_eps_modulus_examples():
    g = make_grid(1)
    assert eps_modulus(Signal(g, [0.5]), 0.3).values[0] == pytest.approx(0.2)
    x = Signal(GRID, np.linspace(-0.3, 0.3, GRID.n))
    assert np.all(eps_modulus(x, 0.3).values == 0)
    y = rand_signal(np.random.default_rng(0))
    assert np.array_equal(eps_modulus(y, 0.0).values, np.abs(y.values))


def test_eps_modulus_per_sample_and_errors():
    g = make_grid(3)
    x = Signal(g, [1.0, -2.0, 0.5])
    np.testing.assert_allclose(eps_modulus(x, [0.5, 0.5, 1.0]).values, [0.5, 1.5, 0.0])
    with pytest.raises(ValueError):
        eps_modulus(x, [0.1, 0.2])
    with pytest.raises(ValueError):
        eps_modulus(x, -0.1)
    with pytest.raises(ValueError):
        ToleranceProfile([0.1, np.inf])


def test_eps_measure_examples():
    ones = Signal(GRID, np.ones(GRID.n))
    assert eps_measure(ones, 1, 0.3) == pytest.approx(0.7, rel=1e-14)
    u = rand_signal(np.random.default_rng(1))
    assert eps_measure(u, 2, np.max(np.abs(u.values))) == 0.0
    with pytest.raises(ValueError):
        eps_measure(u, 3, 0.1)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_eps_measure_is_norm_of_modulus(q):
    rng = np.random.default_rng(2)
    u = rand_signal(rng)
    eps = np.abs(rng.standard_normal(GRID.n)) * 0.5
    assert eps_measure(u, q, eps) == pytest.approx(weighted_norm(eps_modulus(u, eps), q), rel=1e-12)


def test_penalty_value_examples():
    rng = np.random.default_rng(3)
    ref = rand_signal(rng)
    for q in (1, 1.5, 2):
        for eps in (0.0, 0.2):
            assert penalty_value(ref, PenaltySpec(q, ref, eps)) == 0.0
    inside = ref + rng.uniform(-0.3, 0.3, GRID.n)
    assert penalty_value(inside, PenaltySpec(1, ref, 0.3)) == 0.0
    assert penalty_value(inside, PenaltySpec(2, ref, 0.3)) == 0.0


@pytest.mark.parametrize("q", [1.0, 1.25, 2.0])
def test_penalty_value_matches_direct_summation(q):
    rng = np.random.default_rng(4)
    ref = rand_signal(rng)
    eps = np.abs(rng.standard_normal(GRID.n)) * 0.3
    for _ in range(20):
        u = rand_signal(rng, 2.0)
        spec = PenaltySpec(q, ref, eps)
        expected = brute_penalty(u.values, ref.values, eps, q, GRID.h)
        assert penalty_value(u, spec) == pytest.approx(expected, rel=1e-12)


def test_penalty_spec_validation():
    ref = Signal.zeros(GRID)
    with pytest.raises(ValueError):
        PenaltySpec(2.5, ref, 0.1)
    with pytest.raises(ValueError):
        PenaltySpec(1, ref, np.ones(GRID.n + 1))
    with pytest.raises(ValueError):
        penalty_value(Signal.zeros(make_grid(5)), PenaltySpec(1, ref, 0.1))


def test_subgradient_examples():
    g = make_grid(4)
    h = g.h
    ref = Signal.zeros(g)
    # q = 1 at the kink |w| = eps: the admissible interval is [0, 1], we pick 0
    xi = penalty_subgradient(Signal(g, [0.3, -0.3, 0.5, -0.5]), PenaltySpec(1, ref, 0.3))
    np.testing.assert_allclose(xi.element.values, [0.0, 0.0, h, -h])
    assert xi.selection_rule == "zero-at-kink"
    xi2 = penalty_subgradient(Signal(g, [0.5, -0.5, 0.2, -0.3]), PenaltySpec(2, ref, 0.3))
    np.testing.assert_allclose(xi2.element.values, [0.4 * h, -0.4 * h, 0.0, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        PenaltySpec(0.9, ref, 0.3)


def test_subgradient_shifted_by_reference_and_per_sample_eps():
    g = make_grid(3)
    ref = Signal(g, [1.0, 1.0, 1.0])
    spec = PenaltySpec(2, ref, [0.1, 0.5, 0.0])
    xi = penalty_subgradient(Signal(g, [1.5, 1.5, 0.0]), spec)
    np.testing.assert_allclose(xi.element.values, 2 * g.h * np.array([0.4, 0.0, -1.0]))


def test_bregman_examples():
    rng = np.random.default_rng(5)
    ref = rand_signal(rng)
    spec = PenaltySpec(1.5, ref, 0.2)
    u = rand_signal(rng)
    xi = penalty_subgradient(u, spec)
    assert bregman_distance(u, u, spec, xi) == 0.0

    zero = Signal.zeros(GRID)
    quad = PenaltySpec(2, zero, 0.0)
    a, b = rand_signal(rng), rand_signal(rng)
    d = bregman_distance(a, b, quad, penalty_subgradient(b, quad))
    assert d == pytest.approx(weighted_norm(a - b, 2) ** 2, rel=1e-12)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_bregman_random_pairs_nonnegative_and_match_formula(q):
    rng = np.random.default_rng(6)
    ref = rand_signal(rng)
    eps = 0.3
    spec = PenaltySpec(q, ref, eps)
    for _ in range(200):
        a, b = rand_signal(rng), rand_signal(rng)
        xi = penalty_subgradient(b, spec)
        d = bregman_distance(a, b, spec, xi)
        direct = (
            brute_penalty(a.values, ref.values, eps, q, GRID.h)
            - brute_penalty(b.values, ref.values, eps, q, GRID.h)
            - sum(x * (ai - bi) for x, ai, bi in zip(xi.element.values, a.values, b.values))
        )
        assert d >= -1e-12
        assert d == pytest.approx(direct, rel=1e-9, abs=1e-12)


samples = st.tuples(
    st.integers(0, 2**31), st.sampled_from([1.0, 1.5, 2.0]), st.floats(0.0, 2.0)
)


@given(samples)
def test_measure_inequalities(sample):
    seed, q, eps_scale = sample
    rng = np.random.default_rng(seed)
    u = rand_signal(rng, 2.0)
    eps = Signal(GRID, eps_scale * rng.uniform(0, 1, GRID.n))
    m = eps_measure(u, q, eps)
    assert m <= weighted_norm(u, q) + 1e-10
    assert weighted_norm(u, q) <= m + weighted_norm(eps, q) + 1e-10


@given(samples)
def test_measure_decreases_with_tolerance(sample):
    seed, q, eps_scale = sample
    rng = np.random.default_rng(seed)
    u = rand_signal(rng)
    e1 = eps_scale * rng.uniform(0, 1, GRID.n)
    e2 = e1 + rng.uniform(0, 0.5, GRID.n)
    assert eps_measure(u, q, e1) >= eps_measure(u, q, e2)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_penalty_midpoint_convexity(q):
    rng = np.random.default_rng(7)
    spec = PenaltySpec(q, rand_signal(rng), 0.4)
    for _ in range(1000):
        u, w = rand_signal(rng), rand_signal(rng)
        mid = (u + w) * 0.5
        assert penalty_value(mid, spec) <= 0.5 * (penalty_value(u, spec) + penalty_value(w, spec)) + 1e-12


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_penalty_coercive_along_rays(q):
    rng = np.random.default_rng(8)
    spec = PenaltySpec(q, rand_signal(rng), 0.5)
    for _ in range(50):
        d = rand_signal(rng)
        d = d * (1.0 / weighted_norm(d, q))
        assert penalty_value(d * 1e3, spec) > penalty_value(d * 10.0, spec)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_subgradient_inequality(q):
    rng = np.random.default_rng(9)
    ref = rand_signal(rng)
    eps = np.abs(rng.standard_normal(GRID.n)) * 0.3
    spec = PenaltySpec(q, ref, eps)
    for _ in range(20):
        u = rand_signal(rng)
        # put a few samples exactly on the kinks
        vals = u.values.copy()
        vals[:5] = ref.values[:5] + eps[:5]
        vals[5:10] = ref.values[5:10] - eps[5:10]
        u = u.with_values(vals)
        xi = penalty_subgradient(u, spec)
        r_u = penalty_value(u, spec)
        for _ in range(50):
            w = rand_signal(rng, 1.5)
            lower = r_u + float(np.dot(xi.element.values, w.values - u.values))
            assert penalty_value(w, spec) - lower >= -1e-10


def test_subgradient_matches_finite_differences_in_smooth_region():
    rng = np.random.default_rng(10)
    ref = rand_signal(rng)
    eps = np.abs(rng.standard_normal(GRID.n)) * 0.2
    signs = rng.choice([-1.0, 1.0], GRID.n)
    u = ref + signs * (eps + 0.1 + rng.uniform(0, 1, GRID.n))
    spec = PenaltySpec(2, ref, eps)
    xi = penalty_subgradient(u, spec).element.values
    step = 1e-6
    fd = np.empty(GRID.n)
    for i in range(GRID.n):
        e = np.zeros(GRID.n)
        e[i] = step
        fd[i] = (penalty_value(u + e, spec) - penalty_value(u - e, spec)) / (2 * step)
    assert np.linalg.norm(fd - xi) <= 1e-6 * np.linalg.norm(xi)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0])
def test_zero_tolerance_gives_classical_penalty(q):
    rng = np.random.default_rng(11)
    ref, u = rand_signal(rng), rand_signal(rng)
    assert penalty_value(u, PenaltySpec(q, ref, 0.0)) == pytest.approx(
        weighted_norm(u - ref, q) ** q, rel=1e-12
    )


def test_tolerance_csv_round_trip(tmp_path):
    eps = np.random.default_rng(12).uniform(0, 1, GRID.n)
    write_tolerance_csv(tmp_path / "eps.csv", GRID, eps)
    back = read_tolerance_csv(tmp_path / "eps.csv", GRID)
    assert np.array_equal(back.values, eps)
    with pytest.raises(ValueError):
        read_tolerance_csv(tmp_path / "eps.csv", make_grid(3))
