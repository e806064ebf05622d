import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from oracles import lp_w2_squared, permutation_w2_squared
from wasserforms.errors import DimensionMismatch, ValidationError
from wasserforms.measures import dilation, dirac, make_measure, pushforward
from wasserforms.transport import (
    barycentric_projection,
    dual_potentials,
    geodesic,
    optimal_plan,
    transport_simplex,
    w2_distance,
)


def _check_plan(plan):
    em, en = plan.marginal_errors()
    assert em <= 1e-9 and en <= 1e-9
    assert np.all(plan.gamma >= 0)
    assert abs(plan.cost - plan.recomputed_cost()) <= 1e-9 * (1 + plan.cost)
    assert plan.dual_value == pytest.approx(plan.cost, rel=1e-8, abs=1e-12)


def test_forced_coupling():
    plan = optimal_plan(dirac([0.0, 0.0]), dirac([3.0, 4.0]))
    np.testing.assert_array_equal(plan.gamma, [[1.0]])
    assert plan.cost == 25.0
    assert w2_distance(dirac([0.0, 0.0]), dirac([3.0, 4.0])) == 5.0


def test_monotone_plan_on_line():
    mu = make_measure([0, 2], [0.5, 0.5])
    nu = make_measure([1, 3], [0.5, 0.5])
    plan = optimal_plan(mu, nu)
    np.testing.assert_allclose(plan.gamma, [[0.5, 0.0], [0.0, 0.5]])
    assert plan.cost == pytest.approx(1.0)
    crossing = 0.5 * (3**2) + 0.5 * (1**2)
    assert crossing == 5.0 and plan.cost < crossing


def test_uniform_five_atoms_matches_permutations(rng):
    for _ in range(5):
        x, y = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
        plan = optimal_plan(make_measure(x), make_measure(y))
        assert plan.cost == pytest.approx(permutation_w2_squared(x, y), rel=1e-9)
        _check_plan(plan)


@settings(max_examples=30)
@given(
    st.integers(1, 6),
    st.integers(1, 6),
    st.integers(1, 4),
    st.integers(0, 2**32 - 1),
)
def test_matches_linear_program(n, m, D, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((n, D)), r.standard_normal((m, D))
    a, b = r.uniform(0.1, 1, n), r.uniform(0.1, 1, m)
    a, b = a / a.sum(), b / b.sum()
    plan = optimal_plan(make_measure(x, a), make_measure(y, b))
    _check_plan(plan)
    assert plan.cost == pytest.approx(lp_w2_squared(x, a, y, b), rel=1e-9, abs=1e-12)


def test_support_is_two_cycle_monotone(rng):
    x, y = rng.standard_normal((6, 2)), rng.standard_normal((7, 2))
    a, b = rng.uniform(0.1, 1, 6), rng.uniform(0.1, 1, 7)
    plan = optimal_plan(make_measure(x, a / a.sum()), make_measure(y, b / b.sum()))
    C = ((x[:, None] - y[None]) ** 2).sum(-1)
    supp = plan.support()
    for i, j in supp:
        for k, l in supp:
            assert C[i, j] + C[k, l] <= C[i, l] + C[k, j] + 1e-12


def test_dilation_scales_distance_to_origin(rng):
    mu = make_measure(rng.standard_normal((4, 3)), [0.1, 0.2, 0.3, 0.4])
    origin = dirac(np.zeros(3))
    base = w2_distance(mu, origin)
    for s in (0.1, 0.5, 1.0):
        assert w2_distance(pushforward(dilation(s), mu), origin) == pytest.approx(s * base, rel=1e-12)


def test_radial_increment(rng):
    mu = make_measure(rng.standard_normal((4, 2)))
    s, h = 0.4, 0.25
    d = w2_distance(pushforward(dilation(s), mu), pushforward(dilation(s + h), mu))
    assert d == pytest.approx(h * w2_distance(mu, dirac([0.0, 0.0])), rel=1e-9)


def test_dual_potentials_diracs():
    u, v = dual_potentials(dirac([1.0, 1.0]), dirac([4.0, 5.0]))
    assert u[0] == 0.0 and v[0] == 25.0


def test_dual_potentials_identical():
    mu = make_measure([[0.0, 1.0], [2.0, 2.0], [1.0, -1.0]])
    plan = optimal_plan(mu, mu)
    np.testing.assert_array_equal(plan.u, 0.0)
    np.testing.assert_array_equal(plan.v, 0.0)
    assert plan.cost == 0.0
    np.testing.assert_allclose(plan.gamma, np.diag(mu.weights))


def test_dual_feasible_and_strong(rng):
    for _ in range(10):
        x, y = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
        mu, nu = make_measure(x, [0.1, 0.2, 0.3, 0.4]), make_measure(y)
        plan = optimal_plan(mu, nu)
        C = ((x[:, None] - y[None]) ** 2).sum(-1)
        assert (plan.u[:, None] + plan.v[None] - C).max() <= 1e-9
        assert plan.dual_value == pytest.approx(lp_w2_squared(x, mu.weights, y, nu.weights), rel=1e-8)


def test_barycentric_projection_examples():
    plan = optimal_plan(dirac([1.0, 2.0]), dirac([4.0, 0.0]))
    np.testing.assert_allclose(barycentric_projection(plan), [[3.0, -2.0]])
    mu = make_measure([[0.0], [5.0]])
    np.testing.assert_allclose(barycentric_projection(optimal_plan(mu, mu)), 0.0)
    split = optimal_plan(dirac([0.0]), make_measure([-1, 1]))
    np.testing.assert_allclose(barycentric_projection(split), [[0.0]])


def test_geodesic_diracs_and_endpoints():
    x, y = np.array([1.0, 0.0]), np.array([-1.0, 2.0])
    c = geodesic(dirac(x), dirac(y), np.linspace(0, 1, 5))
    for k, t in enumerate(c.times):
        np.testing.assert_allclose(c.positions[k, 0], (1 - t) * x + t * y)
    mu = make_measure([[0.0], [1.0]], [0.3, 0.7])
    nu = make_measure([[2.0], [5.0], [6.0]], [0.5, 0.25, 0.25])
    g = geodesic(mu, nu, np.linspace(0, 1, 3))
    from wasserforms.measures import same_measure

    assert same_measure(g.measure(0), mu)
    assert same_measure(g.measure(2), nu)


def test_geodesic_constant_speed(rng):
    mu, nu = make_measure(rng.standard_normal((3, 2))), make_measure(rng.standard_normal((3, 2)))
    total = w2_distance(mu, nu)
    c = geodesic(mu, nu, np.linspace(0, 1, 5))
    for i in range(5):
        for j in range(i + 1, 5):
            d = w2_distance(c.measure(i), c.measure(j))
            assert d == pytest.approx((c.times[j] - c.times[i]) * total, abs=1e-8)


def test_geodesic_grid_validation():
    with pytest.raises(ValidationError):
        geodesic(dirac([0.0]), dirac([1.0]), [0.0, 0.5])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        optimal_plan(dirac([0.0]), dirac([0.0, 1.0]))


def test_deterministic_vertex_on_ties():
    square = np.array([[0.0, 0.0], [1.0, 1.0]])
    other = np.array([[1.0, 0.0], [0.0, 1.0]])
    p1 = optimal_plan(make_measure(square), make_measure(other))
    p2 = optimal_plan(make_measure(square), make_measure(other))
    np.testing.assert_array_equal(p1.gamma, p2.gamma)
    assert p1.cost == pytest.approx(1.0)


def test_repeated_atoms():
    mu = make_measure([[0.0], [0.0], [1.0]])
    nu = make_measure([[0.0], [1.0]], [2 / 3, 1 / 3])
    plan = optimal_plan(mu, nu)
    assert plan.cost == pytest.approx(0.0, abs=1e-15)


def test_larger_assignment(rng):
    n = 120
    x, y = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    C = ((x[:, None] - y[None]) ** 2).sum(-1)
    r, c = linear_sum_assignment(C)
    plan = optimal_plan(make_measure(x), make_measure(y))
    assert plan.cost == pytest.approx(C[r, c].sum() / n, rel=1e-10)


def test_simplex_direct_small():
    C = np.array([[0.0, 2.0], [2.0, 0.0]])
    X, u, v = transport_simplex([0.5, 0.5], [0.5, 0.5], C)
    np.testing.assert_allclose(X, np.eye(2) / 2)
    assert u[0] == 0.0


def test_plan_export():
    d = optimal_plan(dirac([0.0]), dirac([2.0])).to_dict()
    assert d == {"gamma": [[1.0]], "cost": 4.0}
