"""Divergence pairing, tangent projection, Wasserstein gradients and curve calculus.

Everything here lives on the distinct-atom stratum, where every L^2(mu)
field is tangent and the tangent projection is the identity.
"""

from __future__ import annotations

import numpy as np

from .curves import MeasureCurve, trajectory_velocities
from .errors import NonMonotone, OutOfRange, ValidationError
from .measures import (
    DiscreteMeasure,
    Functional,
    ScalarField,
    as_field,
    fd_step,
    l2_norm,
    require_distinct,
)
from .transport import w2_distance

__all__ = [
    "MeasureCurve",
    "trajectory_velocities",
    "divergence_pairing",
    "tangent_projection",
    "wasserstein_gradient",
    "metric_derivative",
    "reparametrize",
    "curve_length",
    "continuity_residual",
    "continuity_order",
]


def divergence_pairing(mu: DiscreteMeasure, X, f: ScalarField) -> float:
    """``<div_mu X, f> = -sum_i a_i <grad f(x_i), X_i>``."""
    X = as_field(mu, X)
    return -float(np.sum(mu.weights * np.sum(f.gradient(mu.atoms) * X, axis=1)))


def tangent_projection(mu: DiscreteMeasure, X) -> np.ndarray:
    """Projection onto the tangent space, the identity when atoms are distinct."""
    X = as_field(mu, X)
    require_distinct(mu)
    return X.copy()


def _fd_gradient(F, mu, h):
    x = mu.atoms
    n, D = x.shape
    grad = np.empty_like(x)
    for i in range(n):
        for d in range(D):
            xp = x.copy()
            xm = x.copy()
            xp[i, d] += h[i]
            xm[i, d] -= h[i]
            grad[i, d] = (F(mu.with_atoms(xp)) - F(mu.with_atoms(xm))) / (2 * h[i])
    return grad / mu.weights[:, None]


def wasserstein_gradient(F: Functional, mu: DiscreteMeasure, h=None, richardson: bool = False) -> np.ndarray:
    """Finite-difference Wasserstein gradient ``(1/a_i) dF/dx_i``.

    ``h`` defaults to ``1e-5 * (1 + |x_i|)`` per atom. With ``richardson``
    the steps ``h`` and ``h/2`` are combined to cancel the O(h^2) term.
    """
    require_distinct(mu)
    if h is None:
        h = fd_step(mu.atoms)
    h = np.broadcast_to(np.asarray(h, dtype=float), (mu.n,))
    if np.any(h <= 0):
        raise ValidationError("finite-difference step must be positive")
    g = _fd_gradient(F, mu, h)
    if richardson:
        g = (4 * _fd_gradient(F, mu, h / 2) - g) / 3
    return g


def _grid_index(times, t, tol=1e-12):
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > tol * max(1.0, abs(t)):
        raise OutOfRange(f"t={t} is not a grid time")
    return k


def metric_derivative(curve: MeasureCurve, t: float) -> float:
    """``W2(sigma_{t+h}, sigma_{t-h}) / 2h`` using the neighbouring grid times."""
    k = _grid_index(curve.times, t)
    if k == 0 or k == curve.n_times - 1:
        raise OutOfRange(f"t={t} is not an interior grid time")
    dist = w2_distance(curve.measure(k + 1), curve.measure(k - 1))
    return dist / (curve.times[k + 1] - curve.times[k - 1])


def curve_length(curve: MeasureCurve) -> float:
    """Trapezoid integral of the metric derivative over interior times.

    Endpoint values use one-sided quotients.
    """
    t = curve.times
    K = curve.n_times
    speed = np.empty(K)
    for k in range(K):
        lo, hi = max(k - 1, 0), min(k + 1, K - 1)
        speed[k] = w2_distance(curve.measure(hi), curve.measure(lo)) / (t[hi] - t[lo])
    return float(np.trapezoid(speed, t))


def reparametrize(curve: MeasureCurve, r, r_dot, s_grid) -> MeasureCurve:
    """``sigma_bar_s = sigma_{r(s)}`` with velocities ``r'(s) v_{r(s)}``.

    ``r`` must be increasing on ``s_grid`` and map its endpoints onto the
    endpoints of the curve's time interval. Off-grid times are filled by
    cubic Hermite interpolation of the trajectories.
    """
    curve.require_velocities()
    s = np.asarray(s_grid, dtype=float)
    rs = np.asarray(r(s), dtype=float)
    if np.any(np.diff(rs) <= 0) or np.any(np.diff(s) <= 0):
        raise NonMonotone("reparametrization must be strictly increasing")
    t0, t1 = curve.times[0], curve.times[-1]
    tol = 1e-12 * max(1.0, abs(t0), abs(t1))
    if abs(rs[0] - t0) > tol or abs(rs[-1] - t1) > tol:
        raise NonMonotone("reparametrization must map onto the curve's time interval")
    rs = np.clip(rs, t0, t1)
    shape = (s.size, curve.n, curve.dimension)
    on_grid = np.isin(rs, curve.times)
    if on_grid.all():
        idx = np.searchsorted(curve.times, rs)
        pos, vel = curve.positions[idx], curve.velocities[idx]
    else:
        spl = curve.interpolant()
        pos = spl(rs).reshape(shape)
        vel = spl.derivative()(rs).reshape(shape)
    rd = np.asarray(r_dot(s), dtype=float).reshape(-1, 1, 1)
    return MeasureCurve(s, pos, curve.weights, rd * vel)


def continuity_residual(curve: MeasureCurve, f: ScalarField) -> float:
    """Max over interior times of ``|d/dt int f dsigma - int <grad f, v> dsigma|``.

    The time derivative is a central difference on the curve grid, so the
    residual is O(dt^2) for consistent velocities.
    """
    curve.require_velocities()
    K, n, D = curve.positions.shape
    flat = curve.positions.reshape(-1, D)
    F = (f(flat).reshape(K, n) * curve.weights).sum(axis=1)
    g = f.gradient(flat).reshape(K, n, D)
    pairing = np.einsum("i,kid,kid->k", curve.weights, g, curve.velocities)
    t = curve.times
    dF = (F[2:] - F[:-2]) / (t[2:] - t[:-2])
    return float(np.abs(dF - pairing[1:-1]).max())


def continuity_order(coarse: MeasureCurve, fine: MeasureCurve, f: ScalarField) -> float:
    """Observed order ``log(r_c / r_f) / log(dt_c / dt_f)`` of the continuity residual."""
    rc, rf = continuity_residual(coarse, f), continuity_residual(fine, f)
    dtc = float(np.max(np.diff(coarse.times)))
    dtf = float(np.max(np.diff(fine.times)))
    return float(np.log(rc / rf) / np.log(dtc / dtf))


def holder_constant(curve: MeasureCurve) -> float:
    """``int ||v_t||^2 dt``, the constant c in ``W2^2(sigma_s, sigma_t) <= c |t - s|``."""
    return float(np.trapezoid(curve.speeds() ** 2, curve.times))


def speed_bound(curve: MeasureCurve) -> float:
    """``sup_t ||v_t||_{sigma_t}`` over the grid."""
    return float(curve.speeds().max())


def tangent_norm(mu: DiscreteMeasure, X) -> float:
    return l2_norm(mu, X)
