"""Symplectic structure on measures over R^{2d} and Hamiltonian flows of atoms.

Coordinates are ``(q, p)`` with ``J = [[0, -I], [I, 0]]``. The pairing is
``omega_mu(X, Y) = int <J X, Y> dmu``, the Hamiltonian field of ``F`` is
``X_F = -J grad_mu F`` and ``{F, G} = omega(X_F, X_G) = int <grad F, -J grad G> dmu``.
With these signs ``{x, y} = 1`` and ``d/dt F(mu_t) = {F, H}`` along the
flow of ``H``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .calculus import wasserstein_gradient
from .curves import MeasureCurve
from .errors import AtomCollision, OddDimension, StepRejected, ValidationError
from .measures import (
    AnalyticField,
    DiscreteMeasure,
    Functional,
    ScalarField,
    as_field,
    min_separation,
    require_distinct,
)

COLLISION_TOL = 1e-10
SCHEMES = ("rk4", "implicit-midpoint")


def complex_structure(dimension: int) -> np.ndarray:
    """``J = [[0, -I], [I, 0]]`` on ``R^dimension``."""
    if dimension % 2:
        raise OddDimension(f"symplectic structure needs even dimension, got {dimension}")
    d = dimension // 2
    J = np.zeros((dimension, dimension))
    J[:d, d:] = -np.eye(d)
    J[d:, :d] = np.eye(d)
    return J


@dataclass(frozen=True)
class SymplecticContext:
    """Canonical structure on ``R^{2d}``: ``J`` and ``omega(u, v) = <J u, v>``."""

    half_dim: int

    @classmethod
    def for_dimension(cls, dimension: int) -> "SymplecticContext":
        complex_structure(dimension)
        return cls(dimension // 2)

    @property
    def dimension(self) -> int:
        return 2 * self.half_dim

    @property
    def J(self) -> np.ndarray:
        return complex_structure(self.dimension)

    def omega(self, u, v) -> np.ndarray:
        """Row-wise ``<J u, v>``."""
        return _skew_rows(np.atleast_2d(u), np.atleast_2d(v))


def _skew_rows(u, v) -> np.ndarray:
    # <J u, v> = sum_k u_q v_p - u_p v_q, written so swapping u and v negates exactly
    d = u.shape[-1] // 2
    return np.sum(u[..., :d] * v[..., d:] - u[..., d:] * v[..., :d], axis=-1)


def omega_pairing(mu: DiscreteMeasure, X, Y) -> float:
    """``sum_i a_i <J X_i, Y_i>``."""
    complex_structure(mu.dimension)
    X, Y = as_field(mu, X), as_field(mu, Y)
    return float(np.sum(mu.weights * _skew_rows(X, Y)))


def hamiltonian_field(grad) -> np.ndarray:
    """``-J g`` applied row-wise to gradients ``g`` of shape ``(n, D)``."""
    grad = np.atleast_2d(np.asarray(grad, dtype=float))
    J = complex_structure(grad.shape[1])
    return -grad @ J.T


def ham_field(f: ScalarField) -> AnalyticField:
    """``X_f = -J grad f`` with Jacobian ``-J Hess f``."""

    def value(x):
        return hamiltonian_field(f.gradient(x))

    def jac(x):
        x = np.atleast_2d(x)
        J = complex_structure(x.shape[1])
        return np.einsum("ab,nbc->nac", -J, f.hessian(x))

    return AnalyticField(value, jac, f"X[{f.name}]")


def symplectic_form(mu: DiscreteMeasure, f: ScalarField, g: ScalarField) -> float:
    """``sum_i a_i omega(X_f(x_i), X_g(x_i))``."""
    return omega_pairing(mu, ham_field(f)(mu.atoms), ham_field(g)(mu.atoms))


def functional_gradient(F: Functional, mu: DiscreteMeasure) -> np.ndarray:
    if F.gradient is not None:
        return np.asarray(F.gradient(mu), dtype=float).reshape(mu.atoms.shape)
    return wasserstein_gradient(F, mu, richardson=True)


def hamiltonian_vector_field(F, mu: DiscreteMeasure) -> np.ndarray:
    """``X_F = -J grad_mu F`` for a :class:`Functional` or :class:`HamiltonianSystem`.

    Uses the analytic gradient when present, finite differences otherwise.
    Atoms must be distinct.
    """
    require_distinct(mu)
    if isinstance(F, HamiltonianSystem):
        return F.velocity(mu.atoms, mu.weights)
    return hamiltonian_field(functional_gradient(F, mu))


def poisson_bracket(F: Functional, G: Functional, mu: DiscreteMeasure) -> float:
    """``{F, G}(mu) = omega_mu(X_F, X_G)``."""
    return omega_pairing(mu, hamiltonian_vector_field(F, mu), hamiltonian_vector_field(G, mu))


def bracket_function(f: ScalarField, g: ScalarField) -> ScalarField:
    """Pointwise bracket ``{f, g}(x) = <grad f, -J grad g>`` with exact gradient.

    ``int {f, g} dmu`` is the bracket of the linear functionals of ``f`` and
    ``g``. The gradient is ``H_f (-J grad g) + H_g J grad f``.
    """

    def value(x):
        x = np.atleast_2d(x)
        return np.sum(f.gradient(x) * hamiltonian_field(g.gradient(x)), axis=1)

    def grad(x):
        x = np.atleast_2d(x)
        J = complex_structure(x.shape[1])
        gf, gg = f.gradient(x), g.gradient(x)
        return np.einsum("nab,nb->na", f.hessian(x), -gg @ J.T) + np.einsum("nab,nb->na", g.hessian(x), gf @ J.T)

    return ScalarField(value, grad, name=f"{{{f.name},{g.name}}}")


def linear_bracket(f: ScalarField, g: ScalarField, mu: DiscreteMeasure) -> float:
    """``{int f, int g}(mu) = sum_i a_i {f, g}(x_i)``."""
    return float(np.sum(mu.weights * bracket_function(f, g)(mu.atoms)))


def poisson_bracket_linear(f: ScalarField, g: ScalarField, mu: DiscreteMeasure) -> float:
    """``{F_f, F_g}(mu) = int {f, g} dmu``; same value as :func:`symplectic_form`."""
    return linear_bracket(f, g, mu)


def is_symplectic(M, tol: float = 1e-12) -> bool:
    M = np.asarray(M, dtype=float)
    J = complex_structure(M.shape[0])
    return bool(np.abs(M.T @ J @ M - J).max() <= tol * max(1.0, np.abs(M).max() ** 2))


def symplectic_rotation(dimension: int, angle: float) -> np.ndarray:
    """``exp(angle J) = cos(angle) I + sin(angle) J``."""
    J = complex_structure(dimension)
    return np.cos(angle) * np.eye(dimension) + np.sin(angle) * J


def random_symplectic(dimension: int, rng, scale: float = 0.5) -> np.ndarray:
    """``exp(J S)`` for a random symmetric ``S``; always symplectic."""
    J = complex_structure(dimension)
    S = rng.standard_normal((dimension, dimension)) * scale
    return expm(J @ (S + S.T) / 2)


@dataclass(frozen=True)
class HamiltonianSystem:
    """Energy ``H(mu)`` with its Wasserstein gradient as a function of atoms.

    ``gradient(atoms, weights)`` returns ``(n, D)``.
    """

    energy: Callable[[DiscreteMeasure], float]
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "H"

    def functional(self) -> Functional:
        return Functional(self.energy, lambda mu: self.gradient(mu.atoms, mu.weights), self.name)

    def velocity(self, atoms, weights) -> np.ndarray:
        return hamiltonian_field(self.gradient(atoms, weights))


def constant_hamiltonian(c: float = 0.0) -> HamiltonianSystem:
    return HamiltonianSystem(lambda mu: float(c), lambda x, a: np.zeros_like(x, dtype=float), "constant")


def oscillator() -> HamiltonianSystem:
    """``H = int |x|^2 / 2``; each atom rotates clockwise in every (q, p) plane."""
    return HamiltonianSystem(
        lambda mu: 0.5 * float(np.sum(mu.weights * np.sum(mu.atoms**2, axis=1))),
        lambda x, a: np.array(x, dtype=float),
        "oscillator",
    )


def potential_energy(f: ScalarField) -> HamiltonianSystem:
    """``H = int f dmu``."""
    return HamiltonianSystem(
        lambda mu: float(np.sum(mu.weights * f(mu.atoms))),
        lambda x, a: f.gradient(x),
        f"linear:{f.name}",
    )


def interaction_energy(W: ScalarField) -> HamiltonianSystem:
    """``H = 1/2 sum_ij a_i a_j W(x_i - x_j)`` for an even kernel ``W``.

    The gradient at atom ``i`` is ``sum_j a_j grad W(x_i - x_j)``.
    """

    def energy(mu):
        x, a = mu.atoms, mu.weights
        diff = (x[:, None, :] - x[None, :, :]).reshape(-1, x.shape[1])
        return 0.5 * float(a @ W(diff).reshape(mu.n, mu.n) @ a)

    def gradient(x, a):
        n, D = x.shape
        diff = (x[:, None, :] - x[None, :, :]).reshape(-1, D)
        return np.einsum("j,ijd->id", a, W.gradient(diff).reshape(n, n, D))

    return HamiltonianSystem(energy, gradient, f"interaction:{W.name}")


def _rk4_step(system, x, a, dt):
    k1 = system.velocity(x, a)
    k2 = system.velocity(x + 0.5 * dt * k1, a)
    k3 = system.velocity(x + 0.5 * dt * k2, a)
    k4 = system.velocity(x + dt * k3, a)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _midpoint_step(system, x, a, dt, max_iter=100):
    y = x + dt * system.velocity(x, a)
    tol = 1e-15 * (1.0 + float(np.abs(x).max()))
    prev = np.inf
    change = np.inf
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            y_new = x + dt * system.velocity(0.5 * (x + y), a)
            change = float(np.abs(y_new - y).max())
        if not np.isfinite(change):
            raise StepRejected("implicit midpoint iteration diverged; reduce dt")
        y = y_new
        if change <= tol:
            return y
        # stagnation at round-off level also counts as converged
        if change >= prev and change <= 1e3 * tol:
            return y
        prev = change
    raise StepRejected(f"implicit midpoint iteration did not converge (last change {change:.3g})")


def hamiltonian_flow(
    system: HamiltonianSystem,
    mu0: DiscreteMeasure,
    T: float,
    dt: float,
    scheme: str = "rk4",
    record_every: int = 1,
) -> MeasureCurve:
    """Integrate ``dx_i/dt = -J (grad_mu H)_i`` from ``mu0`` up to time ``T``.

    The number of steps is ``ceil(T / dt)`` with the step shrunk to land on
    ``T`` exactly. Raises :class:`AtomCollision` if two atoms come within
    ``1e-10`` (relative) of each other; the flow is not continued through
    collisions.
    """
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")
    if T < 0 or dt <= 0:
        raise ValidationError("need T >= 0 and dt > 0")
    complex_structure(mu0.dimension)
    require_distinct(mu0)
    n_steps = max(1, int(np.ceil(T / dt - 1e-9))) if T > 0 else 0
    h = T / n_steps if n_steps else 0.0
    x = np.array(mu0.atoms, dtype=float)
    a = mu0.weights
    scale = 1.0 + float(np.abs(x).max())
    times, traj, vels = [0.0], [x.copy()], [system.velocity(x, a)]
    step = _rk4_step if scheme == "rk4" else _midpoint_step
    for k in range(1, n_steps + 1):
        x = step(system, x, a, h)
        if not np.all(np.isfinite(x)):
            raise StepRejected(f"non-finite state at t={k * h}")
        if mu0.n > 1 and min_separation(x) < COLLISION_TOL * scale:
            raise AtomCollision(k * h)
        if k % record_every == 0 or k == n_steps:
            times.append(k * h)
            traj.append(x.copy())
            vels.append(system.velocity(x, a))
    return MeasureCurve(np.array(times), np.array(traj), a, np.array(vels))


def energy_drift(system: HamiltonianSystem, curve: MeasureCurve) -> float:
    """``max_t |H(mu_t) - H(mu_0)|`` along a flow."""
    H = np.array([system.energy(curve.measure(k)) for k in range(curve.n_times)])
    return float(np.abs(H - H[0]).max())


def named_hamiltonian(name: str, dimension: int) -> HamiltonianSystem:
    """``oscillator``, ``linear:<f>`` or ``interaction:<W>``."""
    from .library import scalar_function

    if name == "oscillator":
        return oscillator()
    if name.startswith("linear:"):
        return potential_energy(scalar_function(name.split(":", 1)[1], dimension))
    if name.startswith("interaction:"):
        return interaction_energy(scalar_function(name.split(":", 1)[1], dimension))
    raise ValidationError(f"unknown Hamiltonian {name!r}; use oscillator, linear:<f> or interaction:<W>")


HAMILTONIAN_NAMES = ("oscillator", "linear:<f>", "interaction:<W>")
