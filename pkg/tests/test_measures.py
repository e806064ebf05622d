import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wasserforms.errors import (
    CoincidentAtoms,
    DimensionMismatch,
    LengthMismatch,
    NonpositiveWeight,
    ValidationError,
    WeightSumOutOfRange,
)
from wasserforms.library import scalar_function
from wasserforms.measures import (
    AnalyticField,
    affine_field,
    constant_scalar,
    dilation,
    dirac,
    fd_jacobian,
    l2_norm,
    lie_bracket,
    linear_functional,
    linear_functional_of,
    load_measure,
    make_measure,
    measure_from_dict,
    merge_atoms,
    mixture,
    pushforward,
    quadratic_scalar,
    require_distinct,
    same_measure,
    save_measure,
)

finite = st.floats(-10, 10, allow_nan=False)


def test_single_dirac():
    mu = make_measure([(0.0, 0.0)], [1.0])
    assert mu.n == 1 and mu.dimension == 2
    np.testing.assert_array_equal(mu.atoms, [[0.0, 0.0]])


def test_one_dimensional_pair():
    mu = make_measure([0, 2], [0.5, 0.5])
    assert mu.dimension == 1 and mu.n == 2
    np.testing.assert_array_equal(mu.atoms[:, 0], [0.0, 2.0])


def test_weight_sum_out_of_range():
    with pytest.raises(WeightSumOutOfRange):
        make_measure([0, 2], [0.5, 0.6])


def test_small_mass_error_is_renormalized():
    mu = make_measure([0, 1], [0.5, 0.5 + 5e-10])
    assert abs(mu.weights.sum() - 1) < 1e-15


@pytest.mark.parametrize("weights", [[1.0, 0.0], [1.5, -0.5], [float("nan"), 1.0]])
def test_nonpositive_weight(weights):
    with pytest.raises(NonpositiveWeight):
        make_measure([0, 1], weights)


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        make_measure([0, 1, 2], [0.5, 0.5])
    with pytest.raises(LengthMismatch):
        make_measure(np.zeros((0, 2)))


def test_measure_is_read_only():
    mu = make_measure([[0.0, 1.0]])
    with pytest.raises(ValueError):
        mu.atoms[0, 0] = 3.0


def test_rejects_infinite_atoms():
    with pytest.raises(ValidationError):
        make_measure([[np.inf, 0.0]])


def test_pushforward_identity_and_dilation():
    mu = make_measure([[1.0, 2.0], [3.0, -1.0]], [0.25, 0.75])
    same = pushforward(lambda x: x, mu)
    np.testing.assert_array_equal(same.atoms, mu.atoms)
    np.testing.assert_array_equal(same.weights, mu.weights)
    d = pushforward(dilation(0.5), dirac([2.0, -4.0]))
    np.testing.assert_array_equal(d.atoms, [[1.0, -2.0]])


def test_pushforward_does_not_merge():
    mu = make_measure([[1.0, 0.0], [-1.0, 0.0]])
    img = pushforward(lambda x: x**2, mu)
    assert img.n == 2


def test_pushforward_functorial(rng):
    mu = make_measure(rng.standard_normal((5, 3)))
    phi = affine_field(rng.standard_normal((3, 3)), rng.standard_normal(3))
    psi = lambda x: np.sin(x)  # noqa: E731
    a = pushforward(lambda x: phi(psi(x)), mu)
    b = pushforward(phi, pushforward(psi, mu))
    np.testing.assert_array_equal(a.atoms, b.atoms)


def test_linear_functional_examples():
    one = constant_scalar(1.0)
    mu = make_measure([[0.3, 1.0], [2.0, 5.0], [1.0, 1.0]], [0.2, 0.3, 0.5])
    assert linear_functional(one, mu) == pytest.approx(1.0, abs=1e-15)
    sq = scalar_function("x0**2", 1)
    assert linear_functional(sq, make_measure([0, 2], [0.5, 0.5])) == pytest.approx(2.0)
    x1 = scalar_function("x0", 2)
    assert linear_functional(x1, make_measure([[1, 0], [3, 0]])) == pytest.approx(2.0)


def test_linear_functional_affine_in_measure(rng):
    f = scalar_function("cubic", 2)
    mu = make_measure(rng.standard_normal((3, 2)), [0.2, 0.3, 0.5])
    nu = make_measure(rng.standard_normal((4, 2)))
    lam = 0.3
    mix = mixture(mu, nu, lam)
    expected = lam * linear_functional(f, mu) + (1 - lam) * linear_functional(f, nu)
    assert linear_functional(f, mix) == pytest.approx(expected, rel=1e-13)


def test_merge_exact_duplicates():
    mu = make_measure([[0.0], [0.0]], [0.5, 0.5])
    merged = merge_atoms(mu, 0.0)
    assert merged.n == 1 and merged.weights[0] == pytest.approx(1.0)


def test_merge_near_atoms_at_barycenter():
    mu = make_measure([[0.0], [1e-14], [5.0]], [0.25, 0.25, 0.5])
    merged = merge_atoms(mu, 1e-12)
    assert merged.n == 2
    np.testing.assert_allclose(merged.atoms[0], [5e-15])
    assert merged.weights[0] == pytest.approx(0.5)


def test_merge_distinct_is_noop():
    mu = make_measure([[0.0, 1.0], [2.0, 3.0]])
    assert merge_atoms(mu, 0.0) is mu


def test_merge_negative_tol():
    with pytest.raises(ValidationError):
        merge_atoms(dirac([0.0]), -1.0)


@given(arrays(float, (6, 2), elements=st.floats(-1, 1)), st.floats(0, 0.5))
def test_merge_leaves_separated_atoms(atoms, tol):
    merged = merge_atoms(make_measure(atoms), tol)
    assert merged.weights.sum() == pytest.approx(1.0)
    if merged.n > 1:
        d = np.linalg.norm(merged.atoms[:, None] - merged.atoms[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        assert d.min() > tol


def test_require_distinct():
    with pytest.raises(CoincidentAtoms):
        require_distinct(make_measure([[1.0, 1.0], [1.0, 1.0]]))
    require_distinct(make_measure([[1.0, 1.0], [1.0, 1.0 + 1e-12]]))


@given(arrays(float, (4, 2), elements=finite), st.permutations(range(4)))
def test_norm_permutation_invariant(X, perm):
    atoms = np.arange(8.0).reshape(4, 2)
    w = np.array([0.1, 0.2, 0.3, 0.4])
    mu = make_measure(atoms, w)
    p = list(perm)
    nu = make_measure(atoms[p], w[p])
    assert l2_norm(mu, X) == pytest.approx(l2_norm(nu, X[p]), rel=1e-12, abs=1e-300)


def test_same_measure_ignores_order_and_duplicates():
    mu = make_measure([[0.0], [1.0], [1.0]], [0.5, 0.25, 0.25])
    nu = make_measure([[1.0], [0.0]], [0.5, 0.5])
    assert same_measure(mu, nu)
    assert not same_measure(mu, make_measure([[1.0], [0.1]]))


def test_json_roundtrip(tmp_path, rng):
    mu = make_measure(rng.standard_normal((4, 3)), [0.1, 0.2, 0.3, 0.4])
    path = tmp_path / "m.json"
    save_measure(mu, path)
    back = load_measure(path)
    np.testing.assert_array_equal(back.atoms, mu.atoms)
    np.testing.assert_array_equal(back.weights, mu.weights)


def test_json_field_order_and_defaults():
    mu = measure_from_dict(json.loads('{"weights": [0.5, 0.5], "atoms": [[0, 1], [2, 3]], "dimension": 2}'))
    assert mu.n == 2
    assert measure_from_dict({"atoms": [[0.0], [1.0]]}).weights[0] == 0.5
    with pytest.raises(DimensionMismatch):
        measure_from_dict({"dimension": 3, "atoms": [[0.0, 1.0]], "weights": [1.0]})
    with pytest.raises(ValidationError):
        measure_from_dict({"points": []})


def test_fd_jacobian_matches_analytic(rng):
    M = rng.standard_normal((3, 3))
    field = affine_field(M)
    x = rng.standard_normal((5, 3))
    np.testing.assert_allclose(fd_jacobian(field, x), field.jac(x), atol=1e-9)


def test_analytic_field_fallback_jacobian(rng):
    field = AnalyticField(lambda x: np.stack([np.sin(x[:, 0]) * x[:, 1], x[:, 0] ** 2], axis=-1))
    assert field.jacobian_kind == "finite-difference"
    x = rng.standard_normal((4, 2))
    exact = np.zeros((4, 2, 2))
    exact[:, 0, 0] = np.cos(x[:, 0]) * x[:, 1]
    exact[:, 0, 1] = np.sin(x[:, 0])
    exact[:, 1, 0] = 2 * x[:, 0]
    J = field.jac(x)
    assert np.all(np.abs(J - exact) <= 1e-8 * (1 + np.abs(exact)))


def test_quadratic_scalar_and_compose(rng):
    Q = rng.standard_normal((2, 2))
    Q = Q + Q.T
    f = quadratic_scalar(Q, [1.0, -1.0], 0.5)
    M, b = rng.standard_normal((2, 2)), rng.standard_normal(2)
    g = f.compose_affine(M, b)
    x = rng.standard_normal((3, 2))
    np.testing.assert_allclose(g(x), f(x @ M.T + b))
    np.testing.assert_allclose(g.gradient(x), fd_jacobian(lambda y: g(y)[:, None], x)[:, 0, :], atol=1e-7)
    np.testing.assert_allclose(g.hessian(x), np.broadcast_to(M.T @ Q @ M, (3, 2, 2)), atol=1e-12)


def test_lie_bracket_of_linear_fields(rng):
    A, B = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
    x = rng.standard_normal((3, 2))
    # [Ax, Bx] = B A x - A B x
    np.testing.assert_allclose(lie_bracket(affine_field(A), affine_field(B), x), x @ (B @ A - A @ B).T, atol=1e-12)


def test_linear_functional_gradient():
    f = scalar_function("gaussian", 2)
    F = linear_functional_of(f)
    mu = make_measure([[0.1, 0.2], [1.0, -1.0]])
    np.testing.assert_allclose(F.gradient(mu), f.gradient(mu.atoms))
