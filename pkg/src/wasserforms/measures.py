"""Finitely-atomic probability measures on R^D and the fields acting on them.

A tangent field at a measure with ``n`` atoms is represented as a plain
``(n, D)`` array aligned with the atoms; no wrapper type is needed for it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import (
    CoincidentAtoms,
    DimensionMismatch,
    LengthMismatch,
    NonpositiveWeight,
    ValidationError,
    WeightSumOutOfRange,
)

WEIGHT_SUM_TOL = 1e-9

TangentField = np.ndarray


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure ``sum_i a_i delta_{x_i}``.

    Construct through :func:`make_measure` unless the inputs are already
    known to be valid; the constructor itself only freezes the arrays.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", _frozen(np.atleast_2d(self.atoms)))
        object.__setattr__(self, "weights", _frozen(np.ravel(self.weights)))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]

    def second_moment(self) -> float:
        return float(np.sum(self.weights * np.sum(self.atoms**2, axis=1)))

    def with_atoms(self, atoms) -> "DiscreteMeasure":
        """Same weights, new atom positions (no validation)."""
        return DiscreteMeasure(atoms, self.weights)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "atoms": self.atoms.tolist(),
            "weights": self.weights.tolist(),
        }

    def __repr__(self):
        return f"DiscreteMeasure(n={self.n}, D={self.dimension})"


def make_measure(atoms, weights=None) -> DiscreteMeasure:
    """Validate and build a measure; ``weights=None`` means uniform.

    One-dimensional inputs like ``[0, 2]`` are read as points on R^1.
    Weights within 1e-9 of unit mass are renormalized.
    """
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    if atoms.ndim != 2 or atoms.shape[0] == 0:
        raise LengthMismatch("atoms must be a non-empty list of points")
    n = atoms.shape[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    weights = np.ravel(np.asarray(weights, dtype=float))
    if weights.shape[0] != n:
        raise LengthMismatch(f"{n} atoms but {weights.shape[0]} weights")
    if not np.all(np.isfinite(atoms)):
        raise ValidationError("atoms must be finite")
    if np.any(~(weights > 0)):
        raise NonpositiveWeight(f"weights must be strictly positive, got min {weights.min()}")
    total = weights.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise WeightSumOutOfRange(f"weights sum to {total!r}, not 1")
    return DiscreteMeasure(atoms, weights / total)


def dirac(x) -> DiscreteMeasure:
    return make_measure(np.atleast_2d(np.asarray(x, dtype=float)), [1.0])


def uniform(atoms) -> DiscreteMeasure:
    return make_measure(atoms)


def check_same_dimension(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.dimension != nu.dimension:
        raise DimensionMismatch(f"dimension {mu.dimension} vs {nu.dimension}")


def as_field(mu: DiscreteMeasure, X) -> np.ndarray:
    """Coerce ``X`` to an ``(n, D)`` array aligned with ``mu``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and mu.n == 1:
        X = X[None, :]
    if X.shape != mu.atoms.shape:
        raise LengthMismatch(f"field of shape {X.shape} does not match atoms {mu.atoms.shape}")
    return X


def l2_norm(mu: DiscreteMeasure, X) -> float:
    """``||X||_mu = (sum_i a_i |X_i|^2)^{1/2}``."""
    X = as_field(mu, X)
    return float(np.sqrt(np.sum(mu.weights * np.sum(X * X, axis=1))))


def l2_inner(mu: DiscreteMeasure, X, Y) -> float:
    X, Y = as_field(mu, X), as_field(mu, Y)
    return float(np.sum(mu.weights * np.sum(X * Y, axis=1)))


def min_separation(atoms) -> float:
    atoms = np.atleast_2d(atoms)
    if atoms.shape[0] < 2:
        return np.inf
    return float(pdist(atoms).min())


def require_distinct(mu: DiscreteMeasure, tol: float = 0.0):
    """Raise :class:`CoincidentAtoms` unless atoms are pairwise more than ``tol`` apart."""
    if min_separation(mu.atoms) <= tol:
        raise CoincidentAtoms("atoms are not pairwise distinct; call merge_atoms first")


def fd_step(x) -> np.ndarray:
    """Scale-aware central-difference step ``1e-5 * (1 + |x|)`` per point."""
    x = np.atleast_2d(x)
    return 1e-5 * (1.0 + np.linalg.norm(x, axis=-1))


def fd_jacobian(fn, x, h=None) -> np.ndarray:
    """Central-difference Jacobian of a vectorized map ``(n, D) -> (n, D')``.

    Returns ``(n, D', D)`` with entry ``[i, a, b] = d fn_a / d x_b`` at point i.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, D = x.shape
    h = fd_step(x) if h is None else np.broadcast_to(np.asarray(h, dtype=float), (n,))
    cols = []
    for b in range(D):
        e = np.zeros_like(x)
        e[:, b] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h[:, None]))
    return np.stack(cols, axis=-1)


def _broadcast_rows(val, n, tail=()):
    val = np.asarray(val, dtype=float)
    return np.broadcast_to(val, (n,) + tuple(tail)).copy() if val.shape != (n,) + tuple(tail) else val


@dataclass(frozen=True)
class ScalarField:
    """Smooth function ``f: R^D -> R`` with its gradient and optional Hessian.

    All callables are vectorized over a leading point axis: ``value`` maps
    ``(n, D) -> (n,)``, ``grad`` to ``(n, D)``, ``hess`` to ``(n, D, D)``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "f"

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _broadcast_rows(self.value(x), x.shape[0])

    def gradient(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _broadcast_rows(self.grad(x), x.shape[0], x.shape[1:])

    def hessian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.hess is None:
            return fd_jacobian(self.gradient, x)
        D = x.shape[1]
        return _broadcast_rows(self.hess(x), x.shape[0], (D, D))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        hess = None
        if self.hess is not None and other.hess is not None:
            hess = lambda x: self.hessian(x) + other.hessian(x)  # noqa: E731
        return ScalarField(
            lambda x: self(x) + other(x),
            lambda x: self.gradient(x) + other.gradient(x),
            hess,
            name=f"({self.name})+({other.name})",
        )

    def scaled(self, c: float) -> "ScalarField":
        hess = None if self.hess is None else (lambda x: c * self.hessian(x))
        return ScalarField(lambda x: c * self(x), lambda x: c * self.gradient(x), hess, f"{c}*{self.name}")

    def compose_affine(self, M, b=None) -> "ScalarField":
        """``x -> f(M x + b)`` with chain-rule gradient and Hessian."""
        M = np.asarray(M, dtype=float)
        b = np.zeros(M.shape[0]) if b is None else np.asarray(b, dtype=float)
        y = lambda x: np.atleast_2d(x) @ M.T + b  # noqa: E731
        hess = None
        if self.hess is not None:
            hess = lambda x: np.einsum("ka,nkl,lb->nab", M, self.hessian(y(x)), M)  # noqa: E731
        return ScalarField(
            lambda x: self(y(x)),
            lambda x: self.gradient(y(x)) @ M,
            hess,
            name=f"{self.name}o(affine)",
        )


def constant_scalar(c: float = 0.0, dimension: Optional[int] = None) -> ScalarField:
    return ScalarField(
        lambda x: np.full(np.atleast_2d(x).shape[0], float(c)),
        lambda x: np.zeros_like(np.atleast_2d(x), dtype=float),
        lambda x: np.zeros(np.atleast_2d(x).shape + (np.atleast_2d(x).shape[1],)),
        name=f"const({c})",
    )


def quadratic_scalar(Q, b=None, c: float = 0.0) -> ScalarField:
    """``f(x) = 1/2 x^T Q x + b^T x + c`` with ``Q`` symmetrized."""
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    b = np.zeros(Q.shape[0]) if b is None else np.asarray(b, dtype=float)

    def value(x):
        x = np.atleast_2d(x)
        return 0.5 * np.einsum("na,ab,nb->n", x, Q, x) + x @ b + c

    return ScalarField(
        value,
        lambda x: np.atleast_2d(x) @ Q + b,
        lambda x: np.broadcast_to(Q, (np.atleast_2d(x).shape[0],) + Q.shape).copy(),
        name="quadratic",
    )


@dataclass(frozen=True)
class AnalyticField:
    """Vector field ``R^D -> R^D`` with an optional analytic Jacobian.

    When ``jacobian`` is missing, :meth:`jac` falls back to central
    differences with step ``1e-5 * (1 + |x|)``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "A"

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _broadcast_rows(self.value(x), x.shape[0], x.shape[1:])

    @property
    def jacobian_kind(self) -> str:
        return "analytic" if self.jacobian is not None else "finite-difference"

    def jac(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.jacobian is None:
            return fd_jacobian(self, x)
        D = x.shape[1]
        return _broadcast_rows(self.jacobian(x), x.shape[0], (D, D))

    def __add__(self, other: "AnalyticField") -> "AnalyticField":
        jac = None
        if self.jacobian is not None and other.jacobian is not None:
            jac = lambda x: self.jac(x) + other.jac(x)  # noqa: E731
        return AnalyticField(lambda x: self(x) + other(x), jac, f"({self.name})+({other.name})")

    def compose(self, other: "AnalyticField") -> "AnalyticField":
        """``self o other`` with the chain-rule Jacobian."""
        return AnalyticField(
            lambda x: self(other(x)),
            lambda x: self.jac(other(x)) @ other.jac(x),
            f"{self.name}o{other.name}",
        )


def affine_field(M, b=None) -> AnalyticField:
    M = np.asarray(M, dtype=float)
    b = np.zeros(M.shape[0]) if b is None else np.asarray(b, dtype=float)
    return AnalyticField(
        lambda x: np.atleast_2d(x) @ M.T + b,
        lambda x: np.broadcast_to(M, (np.atleast_2d(x).shape[0],) + M.shape).copy(),
        name="affine",
    )


def identity_field(dimension: int) -> AnalyticField:
    return affine_field(np.eye(dimension))


def constant_field(c) -> AnalyticField:
    c = np.asarray(c, dtype=float)
    D = c.shape[0]
    return AnalyticField(
        lambda x: np.broadcast_to(c, np.atleast_2d(x).shape).copy(),
        lambda x: np.zeros((np.atleast_2d(x).shape[0], D, D)),
        name="constant",
    )


def gradient_field(f: ScalarField) -> AnalyticField:
    """``grad f`` as a vector field, Jacobian = Hessian of f."""
    return AnalyticField(f.gradient, f.hessian if f.hess is not None else None, name=f"grad({f.name})")


def lie_bracket(X: AnalyticField, Y: AnalyticField, x) -> np.ndarray:
    """``[X, Y](x) = DY(x) X(x) - DX(x) Y(x)`` at the given points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.einsum("nab,nb->na", Y.jac(x), X(x)) - np.einsum("nab,nb->na", X.jac(x), Y(x))


@dataclass(frozen=True)
class Functional:
    """``F: measures -> R`` with an optional analytic Wasserstein gradient."""

    eval: Callable[[DiscreteMeasure], float]
    gradient: Optional[Callable[[DiscreteMeasure], np.ndarray]] = None
    name: str = "F"

    def __call__(self, mu: DiscreteMeasure) -> float:
        return float(self.eval(mu))

    def __add__(self, other: "Functional") -> "Functional":
        grad = None
        if self.gradient is not None and other.gradient is not None:
            grad = lambda mu: self.gradient(mu) + other.gradient(mu)  # noqa: E731
        return Functional(lambda mu: self(mu) + other(mu), grad, f"{self.name}+{other.name}")


def linear_functional(f: ScalarField, mu: DiscreteMeasure) -> float:
    """``int f dmu``."""
    return float(np.sum(mu.weights * f(mu.atoms)))


def linear_functional_of(f: ScalarField) -> Functional:
    """The functional ``mu -> int f dmu``; its Wasserstein gradient is ``grad f``."""
    return Functional(
        lambda mu: linear_functional(f, mu),
        lambda mu: f.gradient(mu.atoms),
        name=f"int {f.name}",
    )


def constant_functional(c: float = 0.0) -> Functional:
    return Functional(lambda mu: float(c), lambda mu: np.zeros_like(mu.atoms), name=f"const({c})")


def pushforward(phi, mu: DiscreteMeasure) -> DiscreteMeasure:
    """``phi # mu``: atoms mapped through ``phi``, weights kept, images never merged."""
    y = np.asarray(phi(mu.atoms), dtype=float)
    if y.shape[0] != mu.n:
        raise LengthMismatch("map must return one image per atom")
    return DiscreteMeasure(y, mu.weights)


def dilation(s: float):
    """The map ``D_s(x) = s x``."""
    return lambda x: s * np.asarray(x, dtype=float)


def mixture(mu: DiscreteMeasure, nu: DiscreteMeasure, lam: float) -> DiscreteMeasure:
    """``lam mu + (1 - lam) nu`` by concatenating atoms (no merging)."""
    check_same_dimension(mu, nu)
    return make_measure(
        np.vstack([mu.atoms, nu.atoms]),
        np.concatenate([lam * mu.weights, (1 - lam) * nu.weights]),
    )


def merge_atoms(mu: DiscreteMeasure, tol: float = 0.0) -> DiscreteMeasure:
    """Combine atoms closer than ``tol`` at their weight barycenter.

    Closest pairs are merged first and the loop repeats until every pair of
    remaining atoms is more than ``tol`` apart. ``tol=0`` merges exact
    duplicates only.
    """
    if tol < 0:
        raise ValidationError("tol must be nonnegative")
    atoms = [np.array(a) for a in mu.atoms]
    weights = list(mu.weights)
    changed = False
    while len(atoms) > 1:
        A = np.array(atoms)
        d = squareform(pdist(A))
        np.fill_diagonal(d, np.inf)
        i, j = sorted(np.unravel_index(int(np.argmin(d)), d.shape))
        dmin = d[i, j]
        if dmin > tol:
            break
        wi, wj = weights[i], weights[j]
        atoms[i] = (wi * atoms[i] + wj * atoms[j]) / (wi + wj) if dmin > 0 else atoms[i]
        weights[i] = wi + wj
        del atoms[j], weights[j]
        changed = True
    if not changed:
        return mu
    return DiscreteMeasure(np.array(atoms), np.array(weights))


def same_measure(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-12) -> bool:
    """Equality as measures: merge duplicates, then match atoms and weights."""
    if mu.dimension != nu.dimension:
        return False
    a, b = merge_atoms(mu, tol), merge_atoms(nu, tol)
    if a.n != b.n:
        return False
    used = np.zeros(b.n, dtype=bool)
    for x, w in zip(a.atoms, a.weights):
        d = np.linalg.norm(b.atoms - x, axis=1)
        d[used] = np.inf
        k = int(np.argmin(d))
        if d[k] > tol or abs(b.weights[k] - w) > 1e-9:
            return False
        used[k] = True
    return True


def measure_from_dict(data: dict) -> DiscreteMeasure:
    """Inverse of :meth:`DiscreteMeasure.to_dict`; missing weights mean uniform."""
    if not isinstance(data, dict) or "atoms" not in data:
        raise ValidationError("measure JSON needs an 'atoms' array")
    try:
        atoms = np.asarray(data["atoms"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"atoms are not a numeric array: {exc}") from exc
    if atoms.ndim == 1:
        atoms = atoms[:, None]
    mu = make_measure(atoms, data.get("weights"))
    dim = data.get("dimension", mu.dimension)
    if int(dim) != mu.dimension:
        raise DimensionMismatch(f"declared dimension {dim} but atoms have {mu.dimension}")
    return mu


def load_measure(path) -> DiscreteMeasure:
    with open(path) as fh:
        return measure_from_dict(json.load(fh))


def save_measure(mu: DiscreteMeasure, path):
    with open(path, "w") as fh:
        json.dump(mu.to_dict(), fh)
