"""Green's formula on annuli ``S(s, t) = D_s # sigma_t`` and its consequences.

On the annulus the atoms sit at ``s x_i(t)``; the tangential field is
``v^s = s v(t)`` and the radial field ``w^s(y) = y / s`` takes the value
``x_i(t)`` at atom ``i``. With ``l(s) = int_0^T Lambda(v^s) dt`` and
``lbar(t) = int_r^1 Lambda(w^s) ds`` the boundary integral is
``lbar(T) - lbar(0) - l(1) + l(r)``, which equals
``int_0^T int_r^1 dLambda(v^s, w^s) ds dt``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import pmap
from .calculus import speed_bound
from .curves import MeasureCurve
from .errors import BadRadius, NotClosedCurve, NotClosedForm, ValidationError
from .forms import PseudoOneForm, form_norm, line_integral, skew_pairing
from .measures import DiscreteMeasure, require_distinct
from .transport import geodesic, w2_distance

CLOSED_FORM_TOL = 1e-8
CLOSED_SAMPLES = 32
DEFAULT_R_SEQUENCE = (0.2, 0.1, 0.05)
DEFAULT_EPS = (8e-3, 4e-3, 2e-3, 1e-3)


@dataclass(frozen=True, eq=False)
class AnnulusSurface:
    """Dilations of ``base_curve`` by ``s`` in ``sgrid`` (from ``r`` up to 1)."""

    base_curve: MeasureCurve
    inner_radius: float
    sgrid: np.ndarray

    @property
    def tgrid(self) -> np.ndarray:
        return self.base_curve.times

    def positions(self) -> np.ndarray:
        """Atom positions ``(n_s, n_t, n, D)``."""
        return self.sgrid[:, None, None, None] * self.base_curve.positions[None]

    def tangential(self) -> np.ndarray:
        return self.sgrid[:, None, None, None] * self.base_curve.velocities[None]

    def radial(self) -> np.ndarray:
        return np.broadcast_to(self.base_curve.positions[None], (self.sgrid.size,) + self.base_curve.positions.shape)

    def measure(self, js: int, kt: int) -> DiscreteMeasure:
        return DiscreteMeasure(self.sgrid[js] * self.base_curve.positions[kt], self.base_curve.weights)

    def edge_curve(self, js: int) -> MeasureCurve:
        """The curve ``t -> S(s_js, t)`` with velocities ``v^s``."""
        s = self.sgrid[js]
        c = self.base_curve
        return MeasureCurve(c.times, s * c.positions, c.weights, s * c.velocities)


def make_annulus(curve: MeasureCurve, r: float, n_s: int = 64) -> AnnulusSurface:
    """Annulus over ``curve`` with ``n_s`` uniform intervals on ``[r, 1]``."""
    if not 0.0 < r < 1.0:
        raise BadRadius(f"inner radius must lie in (0, 1), got {r}")
    if n_s < 1:
        raise ValidationError("n_s must be positive")
    curve.require_velocities()
    return AnnulusSurface(curve, float(r), np.linspace(r, 1.0, n_s + 1))


def _node_fields(form: PseudoOneForm, surface: AnnulusSurface, need_matrices: bool):
    pos = surface.positions()
    Ns, K, n, D = pos.shape
    if form.pointwise is not None:
        flat = pos.reshape(-1, D)
        A = form.pointwise(flat).reshape(pos.shape)
        B = form.pointwise.jac(flat).reshape(pos.shape + (D,)) if need_matrices else None
        return A, B
    nodes = [(js, kt) for js in range(Ns) for kt in range(K)]
    A = np.stack(pmap(lambda jk: form.field(surface.measure(*jk)), nodes)).reshape(pos.shape)
    B = None
    if need_matrices:
        B = np.stack(pmap(lambda jk: form.matrices(surface.measure(*jk)), nodes)).reshape(pos.shape + (D,))
    return A, B


def surface_integrand(form: PseudoOneForm, surface: AnnulusSurface) -> np.ndarray:
    """``dLambda_{S(s,t)}(v^s, w^s)`` on the ``(s, t)`` grid."""
    _, B = _node_fields(form, surface, need_matrices=True)
    pair = skew_pairing(B, surface.tangential(), surface.radial())
    return np.sum(surface.base_curve.weights * pair, axis=-1)


def surface_integral_d(form: PseudoOneForm, surface: AnnulusSurface) -> float:
    """Tensor trapezoid rule for ``int_0^T dt int_r^1 dLambda(v^s, w^s) ds``."""
    G = surface_integrand(form, surface)
    return float(np.trapezoid(np.trapezoid(G, surface.sgrid, axis=0), surface.tgrid))


def boundary_terms(form: PseudoOneForm, surface: AnnulusSurface) -> dict:
    """The four edge contributions; their sum is the boundary integral."""
    A, _ = _node_fields(form, surface, need_matrices=False)
    a = surface.base_curve.weights
    V = np.einsum("i,stid,stid->st", a, A, surface.tangential())
    W = np.einsum("i,stid,stid->st", a, A, surface.radial())
    l = np.trapezoid(V, surface.tgrid, axis=1)
    lbar = np.trapezoid(W, surface.sgrid, axis=0)
    return {
        "outer": -float(l[-1]),
        "inner": float(l[0]),
        "final": float(lbar[-1]),
        "initial": -float(lbar[0]),
    }


def boundary_integral(form: PseudoOneForm, surface: AnnulusSurface) -> float:
    t = boundary_terms(form, surface)
    return (t["final"] + t["initial"]) + (t["outer"] + t["inner"])


def green_residual(form: PseudoOneForm, surface: AnnulusSurface) -> float:
    return abs(surface_integral_d(form, surface) - boundary_integral(form, surface))


def _observed_order(q, floor):
    """Three-level order estimate ``log2(|q0 - q1| / |q1 - q2|)``.

    Returns ``inf`` when the finer difference is already below ``floor``
    (the quadrature is exact at that resolution) and ``nan`` when the
    coarser one is.
    """
    d1, d2 = abs(q[0] - q[1]), abs(q[1] - q[2])
    if d2 <= floor:
        return np.inf
    if d1 <= floor:
        return np.nan
    return float(np.log2(d1 / d2))


def green_refinement(form: PseudoOneForm, curve: MeasureCurve, r: float, n_t: int, n_s: int, levels: int = 3):
    """Green residual on a sequence of grids halving both spacings.

    ``curve`` must be sampled with ``n_t`` intervals, divisible by
    ``2**(levels-1)``; coarser levels subsample it. Returns the table rows
    (coarsest first) and observed orders for the residual and both
    integrals.
    """
    if curve.n_times - 1 != n_t:
        raise ValidationError(f"curve has {curve.n_times - 1} intervals, expected {n_t}")
    rows = []
    for lev in reversed(range(levels)):
        step = 2**lev
        if n_t % step or n_s % step:
            raise ValidationError(f"grid {n_t}x{n_s} not divisible by {step}")
        surf = make_annulus(curve.subsample(step), r, n_s // step)
        si = surface_integral_d(form, surf)
        bi = boundary_integral(form, surf)
        rows.append({"n_t": n_t // step, "n_s": n_s // step, "surface": si, "boundary": bi, "residual": abs(si - bi)})
    scale = max(1.0, max(abs(row["surface"]) for row in rows))
    floor = 1e-12 * scale
    orders = {}
    if levels >= 3:
        res = [row["residual"] for row in rows[-3:]]
        if res[-1] <= floor:
            orders["residual"] = np.inf
        elif res[-2] <= floor:
            orders["residual"] = np.nan
        else:
            orders["residual"] = float(np.log2(res[-2] / res[-1]))
        orders["surface"] = _observed_order([row["surface"] for row in rows[-3:]], floor)
        orders["boundary"] = _observed_order([row["boundary"] for row in rows[-3:]], floor)
    return rows, orders


def green_report(form: PseudoOneForm, curve: MeasureCurve, r: float, n_t: int, n_s: int, levels: int = 3) -> dict:
    surf = make_annulus(curve, r, n_s)
    si = surface_integral_d(form, surf)
    terms = boundary_terms(form, surf)
    bi = boundary_integral(form, surf)
    rows, orders = green_refinement(form, curve, r, n_t, n_s, levels)
    return {
        "surface_integral": si,
        "boundary_integral": bi,
        "residual": abs(si - bi),
        "boundary_terms": terms,
        "refinement": rows,
        "observed_order": orders,
    }


def closedness_defect(form: PseudoOneForm, measures, rng=None, n_samples: int = CLOSED_SAMPLES) -> float:
    """Largest normalized ``|dLambda_mu(X, Y)|`` over random samples.

    Each sample draws a measure from ``measures`` and Gaussian fields X, Y;
    the value is divided by ``||X|| ||Y|| (1 + max_i |B_i|)``.
    """
    from .forms import exterior_derivative

    rng = np.random.default_rng(0) if rng is None else rng
    measures = list(measures)
    worst = 0.0
    for _ in range(n_samples):
        mu = measures[int(rng.integers(len(measures)))]
        X = rng.standard_normal(mu.atoms.shape)
        Y = rng.standard_normal(mu.atoms.shape)
        Bnorm = float(np.linalg.norm(form.matrices(mu), ord=2, axis=(1, 2)).max())
        nx = np.sqrt(np.sum(mu.weights * np.sum(X * X, axis=1)))
        ny = np.sqrt(np.sum(mu.weights * np.sum(Y * Y, axis=1)))
        worst = max(worst, abs(exterior_derivative(form, mu, X, Y)) / (nx * ny * (1 + Bnorm)))
    return worst


@dataclass
class LoopReport:
    value: float
    closed_form: bool
    closedness_defect: float
    inner_values: dict = field(default_factory=dict)
    inner_bounds: dict = field(default_factory=dict)
    extrapolated: float = 0.0
    speed_bound: float = 0.0
    period: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inner_values"] = {format(k, ".17g"): v for k, v in self.inner_values.items()}
        d["inner_bounds"] = {format(k, ".17g"): v for k, v in self.inner_bounds.items()}
        return d


def dilate_curve(curve: MeasureCurve, s: float) -> MeasureCurve:
    v = None if curve.velocities is None else s * curve.velocities
    return MeasureCurve(curve.times, s * curve.positions, curve.weights, v)


def loop_integral(
    form: PseudoOneForm,
    curve: MeasureCurve,
    r_sequence=DEFAULT_R_SEQUENCE,
    closed_tol: float = 1e-8,
    rng=None,
) -> LoopReport:
    """Integral of ``form`` around a closed curve with inner-edge diagnostics.

    ``inner_values[r]`` is ``l(r)``, the integral along the dilated loop;
    for closed forms it equals the loop integral for every ``r``.
    ``inner_bounds[r]`` is ``r T c ||sigma'||_inf`` with ``c`` the largest
    ``||A||`` on the dilated loop, which bounds ``|l(r)|`` for any form.
    ``extrapolated`` is the straight-line extrapolation of the two smallest
    radii to ``r = 0``.
    """
    curve.require_velocities()
    gap = w2_distance(curve.measure(0), curve.measure(curve.n_times - 1))
    scale = 1.0 + float(np.abs(curve.positions).max())
    if gap > closed_tol * scale:
        raise NotClosedCurve(f"W2(sigma_0, sigma_T) = {gap:.3g}")
    value = line_integral(form, curve)
    speed = speed_bound(curve)
    T = float(curve.times[-1] - curve.times[0])
    inner, bounds = {}, {}
    for r in r_sequence:
        dil = dilate_curve(curve, r)
        inner[float(r)] = line_integral(form, dil)
        c = max(form_norm(form, dil.measure(k)) for k in range(dil.n_times))
        bounds[float(r)] = r * T * c * speed
    rs = sorted(inner)
    if len(rs) >= 2:
        r0, r1 = rs[0], rs[1]
        extrap = inner[r0] - r0 * (inner[r1] - inner[r0]) / (r1 - r0)
    else:
        extrap = inner[rs[0]] if rs else value
    defect = np.nan
    closed = False
    if form.matrix_at is not None:
        rng = np.random.default_rng(0) if rng is None else rng
        radii = [1.0] + list(r_sequence)
        samples = [
            DiscreteMeasure(s * curve.positions[k], curve.weights) for s in radii for k in range(0, curve.n_times, max(1, curve.n_times // 16))
        ]
        defect = closedness_defect(form, samples, rng)
        closed = bool(defect <= CLOSED_FORM_TOL)
    return LoopReport(value, closed, float(defect), inner, bounds, float(extrap), speed, T)


def radial_curve(mu: DiscreteMeasure, eps: float, n_steps: int) -> MeasureCurve:
    """``t -> D_t # mu`` on ``[eps, 1]`` with velocities ``x_i``."""
    t = np.linspace(eps, 1.0, n_steps + 1)
    pos = t[:, None, None] * mu.atoms[None]
    vel = np.broadcast_to(mu.atoms[None], pos.shape)
    return MeasureCurve(t, pos, mu.weights, vel)


def _smooth_path_integral(form: PseudoOneForm, curve: MeasureCurve) -> float:
    """Trapezoid line integral with one Richardson step against the half grid.

    Only for paths whose integrand is smooth in t (radial paths and
    geodesics), where it cancels the h^2 term of the trapezoid error.
    """
    full = line_integral(form, curve)
    if (curve.n_times - 1) % 2:
        return full
    v = None if curve.velocities is None else curve.velocities[::2]
    half = line_integral(form, MeasureCurve(curve.times[::2], curve.positions[::2], curve.weights, v))
    return full + (full - half) / 3.0


def _extrapolate_to_zero(xs, ys) -> float:
    """Value at 0 of the interpolating polynomial through ``(xs, ys)``."""
    total = 0.0
    for i, (xi, yi) in enumerate(zip(xs, ys)):
        coef = 1.0
        for j, xj in enumerate(xs):
            if j != i:
                coef *= (0.0 - xj) / (xi - xj)
        total += coef * yi
    return total


def potential_details(form: PseudoOneForm, mu: DiscreteMeasure, n_steps: int = 4000, eps=DEFAULT_EPS, verify_closed=True, rng=None) -> dict:
    """Potential at ``mu`` plus the partial integrals used to extrapolate it."""
    require_distinct(mu)
    eps = tuple(float(e) for e in eps)
    if np.all(mu.atoms == 0.0):
        return {"value": 0.0, "partials": {}, "closedness_defect": 0.0, "eps": list(eps), "n_steps": n_steps}
    defect = 0.0
    if verify_closed:
        rng = np.random.default_rng(0) if rng is None else rng
        ts = np.linspace(min(eps), 1.0, 8)
        defect = closedness_defect(form, [mu.with_atoms(t * mu.atoms) for t in ts], rng)
        if defect > CLOSED_FORM_TOL:
            raise NotClosedForm(f"sampled |dLambda| reached {defect:.3g} (relative)")
    partials = {e: _smooth_path_integral(form, radial_curve(mu, e, n_steps)) for e in eps}
    value = _extrapolate_to_zero(list(partials), list(partials.values()))
    return {
        "value": float(value),
        "partials": {format(k, ".17g"): v for k, v in partials.items()},
        "closedness_defect": float(defect),
        "eps": list(eps),
        "n_steps": n_steps,
    }


def reconstruct_potential(form: PseudoOneForm, mu: DiscreteMeasure, n_steps: int = 4000, eps=DEFAULT_EPS, verify_closed=True) -> float:
    """Potential ``F(mu)`` of a closed form, normalized by ``F(delta_0) = 0``.

    Integrates the form along the dilation path ``D_t # mu`` for
    ``t in [eps, 1]`` for each ``eps`` given and extrapolates the results
    polynomially to ``eps = 0``; the collapsed measure at ``t = 0`` is
    never evaluated.
    """
    return potential_details(form, mu, n_steps, eps, verify_closed)["value"]


def potential_via(form: PseudoOneForm, mu: DiscreteMeasure, via: DiscreteMeasure, n_steps: int = 4000) -> float:
    """Potential at ``mu`` along a radial path to ``via`` then the geodesic to ``mu``."""
    base = reconstruct_potential(form, via, n_steps)
    path = geodesic(via, mu, np.linspace(0.0, 1.0, n_steps + 1))
    return base + _smooth_path_integral(form, path)
