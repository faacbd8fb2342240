import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from hklapse import (
    Constant,
    ConstantOne,
    CustomInfluence,
    DomainError,
    OpinionState,
    RadialPower,
    SpecError,
    diameter,
)
from hklapse.assignment import solve_assignment
from hklapse.errors import BudgetError
from hklapse.meanfield import (
    MAX_ATOMS,
    EmpiricalMeasure,
    PointMass,
    UniformBox,
    empirical,
    lipschitz_constant,
    meanfield_decay_study,
    support_diameter,
    wasserstein1,
)

# --- empirical measures ------------------------------------------------------


def test_empirical_two_agents():
    mu = empirical(OpinionState(0.0, [[0.0], [1.0]]))
    np.testing.assert_array_equal(mu.points[:, 0], [0.0, 1.0])
    np.testing.assert_array_equal(mu.weights, [0.5, 0.5])


def test_empirical_coinciding_atoms():
    mu = empirical(OpinionState(0.0, [[2.0, 1.0]] * 3))
    assert mu.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert support_diameter(mu) == 0.0


def test_empirical_four_agents():
    mu = empirical(OpinionState(0.0, np.arange(8.0).reshape(4, 2)))
    assert mu.size == 4 and np.all(mu.weights == 0.25)


@pytest.mark.parametrize("points, weights", [
    ([[0.0], [1.0]], [0.5, 0.6]),
    ([[0.0], [1.0]], [1.5, -0.5]),
    ([[0.0], [np.nan]], None),
    (np.empty((0, 1)), None),
    ([[0.0], [1.0]], [1.0]),
])
def test_measure_validation(points, weights):
    with pytest.raises(DomainError):
        EmpiricalMeasure(points, weights)


def test_weights_sum_tolerance():
    EmpiricalMeasure([[0.0], [1.0]], [0.5, 0.5 + 5e-13])
    with pytest.raises(DomainError):
        EmpiricalMeasure([[0.0], [1.0]], [0.5, 0.5 + 5e-12])


# --- support diameter --------------------------------------------------------


def test_support_diameter_examples():
    assert support_diameter(EmpiricalMeasure([[4.0]])) == 0.0
    assert support_diameter(EmpiricalMeasure([[0.0], [3.0]])) == 3.0
    assert support_diameter(EmpiricalMeasure([[0, 0], [3, 4], [1, 1]])) == 5.0


def test_support_ignores_massless_atoms():
    mu = EmpiricalMeasure([[0.0], [3.0], [100.0]], [0.5, 0.5, 0.0])
    assert support_diameter(mu) == 3.0


@settings(max_examples=40)
@given(seed=st.integers(0, 2**31), N=st.integers(2, 40), d=st.integers(1, 4))
def test_support_diameter_equals_state_diameter(seed, N, d):
    x = np.random.default_rng(seed).normal(size=(N, d))
    state = OpinionState(0.0, x)
    assert support_diameter(empirical(state)) == diameter(state)


# --- Wasserstein-1 -----------------------------------------------------------


def test_w1_examples():
    mu = EmpiricalMeasure([[0.0], [1.0]])
    assert wasserstein1(mu, mu) == 0.0
    assert wasserstein1(EmpiricalMeasure([[0.0]]), EmpiricalMeasure([[1.0]])) == 1.0
    assert wasserstein1(mu, EmpiricalMeasure([[0.5], [0.5]])) == 0.5


def test_w1_brute_force_two_atoms():
    # both couplings of two uniform atoms enumerated by hand
    a, b = np.array([0.0, 1.0]), np.array([0.5, 0.5])
    brute = min(np.mean(np.abs(a - b[list(p)])) for p in itertools.permutations(range(2)))
    assert brute == 0.5


def test_w1_dimension_mismatch():
    with pytest.raises(DomainError):
        wasserstein1(EmpiricalMeasure([[0.0]]), EmpiricalMeasure([[0.0, 0.0]]))


def test_w1_size_cap():
    rng = np.random.default_rng(0)
    big = EmpiricalMeasure(rng.normal(size=(MAX_ATOMS + 1, 2)))
    with pytest.raises(BudgetError):
        wasserstein1(big, big)
    # the 1-D routes have no cap
    line = EmpiricalMeasure(rng.normal(size=(MAX_ATOMS + 1, 1)))
    assert wasserstein1(line, line) == 0.0


def test_w1_method_preconditions():
    mu = EmpiricalMeasure([[0.0], [1.0]], [0.25, 0.75])
    nu = EmpiricalMeasure([[0.0], [1.0]])
    with pytest.raises(DomainError):
        wasserstein1(mu, nu, method="sorted")
    with pytest.raises(DomainError):
        wasserstein1(EmpiricalMeasure([[0, 0]]), EmpiricalMeasure([[1, 1]]), method="cdf")
    with pytest.raises(DomainError):
        wasserstein1(nu, nu, method="bogus")


def _pair(rng, n, d=1):
    return EmpiricalMeasure(rng.normal(size=(n, d))), EmpiricalMeasure(rng.normal(size=(n, d)))


def test_sorted_matches_assignment_1d():
    rng = np.random.default_rng(7)
    for _ in range(100):
        mu, nu = _pair(rng, int(rng.integers(1, 60)))
        a = wasserstein1(mu, nu, method="sorted")
        b = wasserstein1(mu, nu, method="assignment")
        assert abs(a - b) <= 1e-10


def test_cdf_matches_sorted_and_lp():
    rng = np.random.default_rng(8)
    for _ in range(30):
        mu, nu = _pair(rng, int(rng.integers(1, 25)))
        s = wasserstein1(mu, nu, method="sorted")
        assert wasserstein1(mu, nu, method="cdf") == pytest.approx(s, abs=1e-10)
        assert wasserstein1(mu, nu, method="lp") == pytest.approx(s, abs=1e-8)


def test_weighted_cdf_matches_lp():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n, m = rng.integers(1, 15, size=2)
        mu = EmpiricalMeasure(rng.normal(size=(n, 1)), rng.dirichlet(np.ones(n)))
        nu = EmpiricalMeasure(rng.normal(size=(m, 1)), rng.dirichlet(np.ones(m)))
        assert wasserstein1(mu, nu) == pytest.approx(wasserstein1(mu, nu, method="lp"), abs=1e-8)


def test_assignment_matches_lp_in_2d():
    rng = np.random.default_rng(10)
    for _ in range(20):
        mu, nu = _pair(rng, int(rng.integers(1, 20)), d=2)
        a = wasserstein1(mu, nu, method="assignment")
        assert wasserstein1(mu, nu, method="lp") == pytest.approx(a, abs=1e-8)


def test_metric_axioms():
    rng = np.random.default_rng(11)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 30))
        a, b, c = (EmpiricalMeasure(rng.normal(size=(n, d))) for _ in range(3))
        ab, ba = wasserstein1(a, b), wasserstein1(b, a)
        assert abs(ab - ba) <= 1e-12
        assert wasserstein1(a, c) <= ab + wasserstein1(b, c) + 1e-10
        assert wasserstein1(a, a) == 0.0


def test_translation_moves_mass_exactly():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(25, 2))
    shift = np.array([3.0, 4.0])
    w = wasserstein1(EmpiricalMeasure(x), EmpiricalMeasure(x + shift))
    assert w == pytest.approx(5.0, rel=1e-12)


# --- assignment solver -------------------------------------------------------


@pytest.mark.parametrize("shape", [(1, 1), (5, 5), (40, 40), (7, 12), (12, 7), (150, 150)])
def test_assignment_matches_scipy(shape):
    rng = np.random.default_rng(sum(shape))
    for _ in range(5):
        cost = rng.uniform(0, 10, size=shape)
        rows, cols, total = solve_assignment(cost)
        r, c = linear_sum_assignment(cost)
        assert total == pytest.approx(cost[r, c].sum(), rel=1e-12)
        assert cost[rows, cols].sum() == pytest.approx(total, rel=1e-12)
        assert len(set(rows)) == len(rows) == min(shape) == len(set(cols))


def test_assignment_integer_ties():
    rng = np.random.default_rng(3)
    cost = rng.integers(0, 3, size=(30, 30)).astype(float)
    _, _, total = solve_assignment(cost)
    r, c = linear_sum_assignment(cost)
    assert total == cost[r, c].sum()


def test_assignment_brute_force_small():
    rng = np.random.default_rng(4)
    for _ in range(20):
        cost = rng.normal(size=(5, 5))
        brute = min(cost[range(5), list(p)].sum() for p in itertools.permutations(range(5)))
        assert solve_assignment(cost)[2] == pytest.approx(brute, abs=1e-12)


def test_assignment_rejects_bad_input():
    with pytest.raises(DomainError):
        solve_assignment(np.array([[0.0, np.inf]]))
    with pytest.raises(DomainError):
        solve_assignment(np.zeros(3))


# --- decay study -------------------------------------------------------------


def test_lipschitz_families():
    assert lipschitz_constant(Constant(2.0)) == 0.0
    assert lipschitz_constant(RadialPower(1.0, 1.0)) > 0
    with pytest.raises(SpecError):
        lipschitz_constant(CustomInfluence(lambda y, z: np.ones(len(y)), K_sup=1.0))


def test_study_point_mass_stays_collapsed():
    rep = meanfield_decay_study(RadialPower(1.0, 1.0), ConstantOne(), [2, 5, 9],
                                PointMass((0.3, -0.2)), t_end=3.0, n_times=31)
    assert rep.passed
    assert all(r["d_X"] == 0.0 for r in rep.rows)
    assert all(t["max_w1"] == 0.0 for t in rep.w1_trend)


class _TwoPoint:
    d = 1
    radius = 1.0

    def sample(self, n, rng):
        return np.array([[0.0], [1.0]] + [[0.5]] * (n - 2))


def test_study_two_agent_analytic():
    rep = meanfield_decay_study(Constant(1.0), ConstantOne(), [2], _TwoPoint(), h=1e-3,
                                t_end=4.0, n_times=41)
    rows = [r for r in rep.rows if r["N"] == 2]
    t = np.array([r["t"] for r in rows])
    dX = np.array([r["d_X"] for r in rows])
    np.testing.assert_allclose(dX, np.exp(-2.0 * t), atol=1e-10)
    assert rep.per_n[0]["fitted_rate"] == pytest.approx(2.0, rel=1e-6)
    assert rep.passed


def test_study_uniform_box_constant_influence():
    rep = meanfield_decay_study(Constant(1.0), ConstantOne(), [8, 16, 32, 64],
                                UniformBox(1), seed=3, t_end=6.0, n_times=61)
    assert rep.passed
    for row in rep.per_n:
        assert row["fitted_rate"] >= row["gamma_env"]
    assert [t["N"] for t in rep.w1_trend] == [8, 16, 32]


def test_study_is_deterministic_and_parallel_safe(tmp_path):
    args = (RadialPower(1.0, 1.0), ConstantOne(), [4, 8], UniformBox(2))
    a = meanfield_decay_study(*args, seed=5, t_end=2.0, n_times=11)
    b = meanfield_decay_study(*args, seed=5, t_end=2.0, n_times=11, workers=2)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "N,t,d_X,envelope,w1_to_next_N"


def test_study_samples_are_nested():
    rep = meanfield_decay_study(Constant(1.0), ConstantOne(), [3, 6], UniformBox(1), seed=1,
                                t_end=1.0, n_times=3)
    # the first three of six draws are the three-agent sample, so the gap at t=0 is finite
    assert math.isfinite(rep.w1_trend[0]["w1_at_0"])


def test_study_budget():
    with pytest.raises(BudgetError):
        meanfield_decay_study(Constant(1.0), ConstantOne(), [500, 600], UniformBox(1),
                              t_end=100.0, budget=1e5)


def test_study_rejects_non_lipschitz():
    with pytest.raises(SpecError):
        meanfield_decay_study(CustomInfluence(lambda y, z: np.ones(len(y)), K_sup=1.0),
                              ConstantOne(), [4], UniformBox(1))
