import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wasserforms.calculus import (
    continuity_order,
    continuity_residual,
    curve_length,
    divergence_pairing,
    holder_constant,
    metric_derivative,
    reparametrize,
    tangent_projection,
    wasserstein_gradient,
)
from wasserforms.curves import MeasureCurve
from wasserforms.errors import CoincidentAtoms, LengthMismatch, NonMonotone, OutOfRange, ValidationError
from wasserforms.forms import line_integral, linear_pseudo_one_form
from wasserforms.library import named_form, scalar_function, twist_field
from wasserforms.measures import (
    Functional,
    constant_functional,
    dirac,
    l2_norm,
    linear_functional,
    linear_functional_of,
    make_measure,
)
from wasserforms.transport import geodesic, w2_distance


def _line_curve(K=10):
    t = np.linspace(0, 1, K + 1)
    pos = np.stack([t, np.zeros_like(t)], -1)[:, None, :]
    vel = np.tile([1.0, 0.0], (K + 1, 1))[:, None, :]
    return MeasureCurve(t, pos, [1.0], vel)


def _wobble(K, T=1.0):
    t = np.linspace(0, T, K + 1)
    pos = np.stack(
        [np.stack([np.cos(3 * t), np.sin(t)], -1), np.stack([t**3, np.exp(-t)], -1), np.stack([np.sin(2 * t), t], -1)],
        axis=1,
    )
    vel = np.stack(
        [
            np.stack([-3 * np.sin(3 * t), np.cos(t)], -1),
            np.stack([3 * t**2, -np.exp(-t)], -1),
            np.stack([2 * np.cos(2 * t), np.ones_like(t)], -1),
        ],
        axis=1,
    )
    return MeasureCurve(t, pos, [0.2, 0.3, 0.5], vel)


def test_divergence_pairing_examples():
    f = scalar_function("x0", 2)
    assert divergence_pairing(dirac([0.0, 0.0]), [[1.0, 0.0]], f) == -1.0
    mu = make_measure([[0.3, 1.0], [2.0, -1.0]])
    assert divergence_pairing(mu, np.zeros((2, 2)), scalar_function("cubic", 2)) == 0.0
    with pytest.raises(LengthMismatch):
        divergence_pairing(mu, np.zeros((3, 2)), f)


def test_divergence_pairing_bound_and_derivative(rng):
    f = scalar_function("gaussian", 2)
    for _ in range(10):
        mu = make_measure(rng.standard_normal((4, 2)), rng.dirichlet(np.ones(4)))
        X = rng.standard_normal((4, 2))
        val = divergence_pairing(mu, X, f)
        assert abs(val) <= l2_norm(mu, f.gradient(mu.atoms)) * l2_norm(mu, X) + 1e-14
        h = 1e-5
        fd = (linear_functional(f, mu.with_atoms(mu.atoms + h * X)) - linear_functional(f, mu.with_atoms(mu.atoms - h * X))) / (2 * h)
        assert val == pytest.approx(-fd, abs=1e-8)


def test_tangent_projection():
    mu = make_measure([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    X = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(tangent_projection(mu, X), X)
    np.testing.assert_array_equal(tangent_projection(mu, np.zeros((3, 2))), 0.0)
    with pytest.raises(CoincidentAtoms):
        tangent_projection(make_measure([[0.0, 0.0], [0.0, 0.0]]), np.zeros((2, 2)))


def test_gradient_of_linear_functional(rng):
    f = scalar_function("cubic", 2)
    mu = make_measure(rng.standard_normal((4, 2)), [0.1, 0.2, 0.3, 0.4])
    F = Functional(lambda m: linear_functional(f, m))
    np.testing.assert_allclose(wasserstein_gradient(F, mu), f.gradient(mu.atoms), atol=1e-8)
    np.testing.assert_allclose(wasserstein_gradient(F, mu, richardson=True), f.gradient(mu.atoms), atol=1e-9)


def test_gradient_of_constant_and_second_moment(rng):
    mu = make_measure(rng.standard_normal((3, 2)))
    np.testing.assert_allclose(wasserstein_gradient(constant_functional(2.0), mu), 0.0)
    origin = dirac([0.0, 0.0])
    F = Functional(lambda m: w2_distance(m, origin) ** 2)
    np.testing.assert_allclose(wasserstein_gradient(F, mu), 2 * mu.atoms, atol=1e-7)


def test_gradient_linearity(rng):
    mu = make_measure(rng.standard_normal((3, 2)), [0.5, 0.3, 0.2])
    F = Functional(lambda m: linear_functional(scalar_function("gaussian", 2), m))
    G = Functional(lambda m: float(np.sum(m.weights * m.atoms[:, 0] ** 3)))
    lhs = wasserstein_gradient(F + G, mu)
    rhs = wasserstein_gradient(F, mu) + wasserstein_gradient(G, mu)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_gradient_first_order_expansion(rng):
    mu = make_measure(rng.standard_normal((3, 2)), [0.5, 0.3, 0.2])
    F = Functional(lambda m: float(np.sum(m.weights * np.sin(m.atoms).sum(1))))
    g = wasserstein_gradient(F, mu)
    X = rng.standard_normal((3, 2))
    for t in (1e-2, 1e-3):
        rem = F(mu.with_atoms(mu.atoms + t * X)) - F(mu) - t * np.sum(mu.weights * np.sum(g * X, 1))
        assert abs(rem) < 5 * t**2 * l2_norm(mu, X) ** 2


def test_gradient_validation():
    mu = make_measure([[0.0], [0.0]])
    with pytest.raises(CoincidentAtoms):
        wasserstein_gradient(constant_functional(), mu)
    with pytest.raises(ValidationError):
        wasserstein_gradient(constant_functional(), dirac([0.0]), h=0.0)


def test_metric_derivative_examples():
    assert metric_derivative(_line_curve(), 0.5) == pytest.approx(1.0)
    const = MeasureCurve(np.linspace(0, 1, 5), np.ones((5, 2, 1)) * [[0.0], [1.0]], [0.5, 0.5], np.zeros((5, 2, 1)))
    assert metric_derivative(const, 0.25) == 0.0
    with pytest.raises(OutOfRange):
        metric_derivative(_line_curve(), 0.0)
    with pytest.raises(OutOfRange):
        metric_derivative(_line_curve(), 0.55)


def test_metric_derivative_on_geodesic(rng):
    mu, nu = make_measure(rng.standard_normal((3, 2))), make_measure(rng.standard_normal((3, 2)))
    c = geodesic(mu, nu, np.linspace(0, 1, 9))
    d = w2_distance(mu, nu)
    for t in c.times[1:-1]:
        assert metric_derivative(c, t) == pytest.approx(d, rel=1e-9)


def test_geodesic_length(rng):
    mu = make_measure(rng.standard_normal((4, 2)), [0.1, 0.2, 0.3, 0.4])
    nu = make_measure(rng.standard_normal((3, 2)))
    c = geodesic(mu, nu, np.linspace(0, 1, 11))
    assert curve_length(c) == pytest.approx(w2_distance(mu, nu), abs=1e-6)


def test_holder_bound():
    c = _wobble(100)
    const = holder_constant(c)
    for i, j in [(0, 100), (10, 40), (50, 51), (3, 97)]:
        d2 = w2_distance(c.measure(i), c.measure(j)) ** 2
        assert d2 <= const * abs(c.times[j] - c.times[i]) + 1e-12


def test_reparametrize_identity_and_doubling():
    c = _wobble(20)
    same = reparametrize(c, lambda s: s, lambda s: np.ones_like(s), c.times)
    np.testing.assert_array_equal(same.positions, c.positions)
    np.testing.assert_array_equal(same.velocities, c.velocities)
    s = c.times / 2
    half = reparametrize(c, lambda s: 2 * s, lambda s: 2 * np.ones_like(s), s)
    np.testing.assert_allclose(half.times, s)
    np.testing.assert_allclose(half.velocities, 2 * c.velocities, rtol=1e-12)


def test_reparametrize_preserves_line_integral():
    K = 10_000
    c = _wobble(K)
    form = linear_pseudo_one_form(twist_field(2))
    s = np.linspace(0, 1, K + 1)
    r = reparametrize(c, lambda s: s**2, lambda s: 2 * s, s)
    assert line_integral(form, r) == pytest.approx(line_integral(form, c), abs=1e-6)


def test_reparametrize_rejects_bad_maps():
    c = _wobble(10)
    s = np.linspace(0, 1, 11)
    with pytest.raises(NonMonotone):
        reparametrize(c, lambda s: 1 - s, lambda s: -np.ones_like(s), s)
    with pytest.raises(NonMonotone):
        reparametrize(c, lambda s: s / 2, lambda s: np.ones_like(s) / 2, s)


def test_continuity_residual_second_order():
    f = scalar_function("gaussian", 2)
    r1, r2 = continuity_residual(_wobble(50), f), continuity_residual(_wobble(100), f)
    assert r2 < r1
    assert continuity_order(_wobble(50), _wobble(100), f) == pytest.approx(2.0, abs=0.1)


def test_gradient_form_line_integral_fundamental_theorem():
    f = scalar_function("cubic", 2)
    form = named_form("gradient:cubic", 2)
    c = _wobble(4000)
    expected = linear_functional(f, c.measure(c.n_times - 1)) - linear_functional(f, c.measure(0))
    assert line_integral(form, c) == pytest.approx(expected, abs=1e-6)


@given(st.floats(0.1, 3.0))
def test_linear_functional_gradient_matches_fd(scale):
    f = scalar_function("gaussian", 2)
    mu = make_measure(np.array([[0.2, -0.1], [1.0, 0.5]]) * scale, [0.3, 0.7])
    F = linear_functional_of(f)
    np.testing.assert_allclose(wasserstein_gradient(Functional(F.eval), mu), F.gradient(mu), atol=1e-8)
