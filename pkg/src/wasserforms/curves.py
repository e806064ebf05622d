"""Time-sampled curves of measures in particle-trajectory form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import LengthMismatch, MissingVelocities, ValidationError
from .measures import DiscreteMeasure, make_measure


def trajectory_velocities(times, positions) -> np.ndarray:
    """Finite-difference velocities of particle trajectories.

    Central differences at interior times (second order on uniform grids),
    one-sided first-order differences at the two endpoints.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(positions, dtype=float)
    v = np.empty_like(x)
    if t.size < 2:
        v[:] = 0.0
        return v
    dt = (t[2:] - t[:-2]).reshape((-1,) + (1,) * (x.ndim - 1))
    v[1:-1] = (x[2:] - x[:-2]) / dt
    v[0] = (x[1] - x[0]) / (t[1] - t[0])
    v[-1] = (x[-1] - x[-2]) / (t[-1] - t[-2])
    return v


@dataclass(frozen=True, eq=False)
class MeasureCurve:
    """Curve ``t -> sigma_t = sum_i a_i delta_{x_i(t)}`` sampled on a grid.

    ``positions`` has shape ``(K+1, n, D)``; atom ``i`` keeps index ``i`` and
    weight ``weights[i]`` along the whole curve. ``velocities`` (same shape)
    is optional.
    """

    times: np.ndarray
    positions: np.ndarray
    weights: np.ndarray
    velocities: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        x = np.array(self.positions, dtype=float)
        w = np.array(self.weights, dtype=float).ravel()
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[0] != t.shape[0] or x.shape[1] != w.shape[0]:
            raise LengthMismatch(f"positions {x.shape} inconsistent with {t.shape[0]} times, {w.shape[0]} weights")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError("curve times must be strictly increasing")
        make_measure(x[0], w)  # weight validation
        arrays = {"times": t, "positions": x, "weights": w}
        if self.velocities is not None:
            v = np.array(self.velocities, dtype=float).reshape(x.shape)
            arrays["velocities"] = v
        for name, a in arrays.items():
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_trajectory(cls, position_fn, velocity_fn, times, weights) -> "MeasureCurve":
        """Sample ``x(t)`` and ``x'(t)``, each mapping a time to an ``(n, D)`` array."""
        times = np.asarray(times, dtype=float)
        pos = np.stack([np.asarray(position_fn(t), dtype=float) for t in times])
        vel = None
        if velocity_fn is not None:
            vel = np.stack([np.asarray(velocity_fn(t), dtype=float) for t in times])
        return cls(times, pos, weights, vel)

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def dimension(self) -> int:
        return self.positions.shape[2]

    @property
    def has_velocities(self) -> bool:
        return self.velocities is not None

    def measure(self, k: int) -> DiscreteMeasure:
        return DiscreteMeasure(self.positions[k], self.weights)

    def velocity(self, k: int) -> np.ndarray:
        self.require_velocities()
        return self.velocities[k]

    def measures(self):
        return [self.measure(k) for k in range(self.n_times)]

    def require_velocities(self):
        if self.velocities is None:
            raise MissingVelocities("curve carries no velocities; use with_fd_velocities()")

    def with_fd_velocities(self) -> "MeasureCurve":
        return MeasureCurve(self.times, self.positions, self.weights, trajectory_velocities(self.times, self.positions))

    def with_velocities(self, velocities) -> "MeasureCurve":
        return MeasureCurve(self.times, self.positions, self.weights, velocities)

    def reversed(self) -> "MeasureCurve":
        """Same path traversed backwards on ``[t0, tK]``."""
        t = self.times[0] + self.times[-1] - self.times[::-1]
        v = None if self.velocities is None else -self.velocities[::-1]
        return MeasureCurve(t, self.positions[::-1], self.weights, v)

    def speeds(self) -> np.ndarray:
        """``||v_t||_{sigma_t}`` at every grid time."""
        self.require_velocities()
        return np.sqrt(np.einsum("i,kid,kid->k", self.weights, self.velocities, self.velocities))

    def subsample(self, step: int) -> "MeasureCurve":
        """Every ``step``-th grid point; the endpoint must be kept."""
        if (self.n_times - 1) % step:
            raise ValidationError(f"{self.n_times - 1} intervals not divisible by {step}")
        v = None if self.velocities is None else self.velocities[::step]
        return MeasureCurve(self.times[::step], self.positions[::step], self.weights, v)

    def interpolant(self):
        """Piecewise-cubic interpolant of the trajectories (Hermite if velocities exist)."""
        flat = self.positions.reshape(self.n_times, -1)
        if self.velocities is not None:
            return CubicHermiteSpline(self.times, flat, self.velocities.reshape(self.n_times, -1), axis=0)
        return CubicSpline(self.times, flat, axis=0)

    def resample(self, times) -> "MeasureCurve":
        """Evaluate the interpolant (and its derivative) on a new time grid."""
        times = np.asarray(times, dtype=float)
        spl = self.interpolant()
        shape = (times.size, self.n, self.dimension)
        return MeasureCurve(times, spl(times).reshape(shape), self.weights, spl.derivative()(times).reshape(shape))

    def to_csv(self) -> str:
        """CSV with header ``t,atom,x0..x{D-1},v0..v{D-1}`` plus a ``weight`` column.

        Velocity columns are left empty when the curve carries none.
        """
        D = self.dimension
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "atom"] + [f"x{d}" for d in range(D)] + [f"v{d}" for d in range(D)] + ["weight"])
        for k, t in enumerate(self.times):
            for i in range(self.n):
                vel = self.velocities[k, i] if self.velocities is not None else [None] * D
                w.writerow(
                    [_fmt(t), i]
                    + [_fmt(c) for c in self.positions[k, i]]
                    + ["" if c is None else _fmt(c) for c in vel]
                    + [_fmt(self.weights[i])]
                )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MeasureCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValidationError("empty curve file")
        xcols = sorted((c for c in rows[0] if c and c[0] == "x" and c[1:].isdigit()), key=lambda c: int(c[1:]))
        vcols = [f"v{c[1:]}" for c in xcols]
        times = sorted({float(r["t"]) for r in rows})
        atoms = sorted({int(r["atom"]) for r in rows})
        index_t = {t: k for k, t in enumerate(times)}
        n, D = len(atoms), len(xcols)
        if atoms != list(range(n)):
            raise ValidationError("atom indices must be 0..n-1")
        pos = np.full((len(times), n, D), np.nan)
        vel = np.full((len(times), n, D), np.nan)
        weights = np.full(n, 1.0 / n)
        for r in rows:
            k, i = index_t[float(r["t"])], int(r["atom"])
            pos[k, i] = [float(r[c]) for c in xcols]
            if all(r.get(c) not in (None, "") for c in vcols):
                vel[k, i] = [float(r[c]) for c in vcols]
            if r.get("weight") not in (None, ""):
                weights[i] = float(r["weight"])
        if np.isnan(pos).any():
            raise ValidationError("curve file is missing (t, atom) rows")
        has_v = not np.isnan(vel).any()
        return cls(np.array(times), pos, weights, vel if has_v else None)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def load_curve(path) -> MeasureCurve:
    with open(path) as fh:
        return MeasureCurve.from_csv(fh.read())


def save_curve(curve: MeasureCurve, path):
    with open(path, "w") as fh:
        fh.write(curve.to_csv())
