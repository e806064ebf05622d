"""Pseudo 1-forms on discrete measures.

A pseudo 1-form assigns to each measure ``mu`` a field ``A_mu`` so that
``Lambda_mu(X) = int <A_mu, X> dmu``. Regular forms also carry matrices
``B_mu`` (one ``D x D`` block per atom) that control how ``A_mu`` varies
along optimal plans; the exterior derivative only needs ``B_mu``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import block_diag

from .curves import MeasureCurve
from .errors import JacobianUnavailable, LengthMismatch
from .measures import (
    AnalyticField,
    DiscreteMeasure,
    as_field,
    lie_bracket,
    make_measure,
    pushforward,
    require_distinct,
)
from .transport import optimal_plan


@dataclass(frozen=True)
class PseudoOneForm:
    """``mu -> A_mu`` with optional regularity data.

    ``field_at(mu)`` returns ``(n, D)``; ``matrix_at(mu)`` returns
    ``(n, D, D)``. ``pointwise`` is set for linear forms, whose field does
    not depend on ``mu``; it enables vectorized evaluation along curves.
    """

    field_at: Callable[[DiscreteMeasure], np.ndarray]
    matrix_at: Optional[Callable[[DiscreteMeasure], np.ndarray]] = None
    regularity_constant: Optional[float] = None
    modulus: Optional[Callable[[float], float]] = None
    name: str = "form"
    pointwise: Optional[AnalyticField] = None

    def field(self, mu: DiscreteMeasure) -> np.ndarray:
        return np.asarray(self.field_at(mu), dtype=float).reshape(mu.atoms.shape)

    def matrices(self, mu: DiscreteMeasure) -> np.ndarray:
        if self.matrix_at is None:
            raise JacobianUnavailable(f"form {self.name!r} supplies no regularity matrices")
        D = mu.dimension
        return np.asarray(self.matrix_at(mu), dtype=float).reshape(mu.n, D, D)

    def __add__(self, other: "PseudoOneForm") -> "PseudoOneForm":
        mat = None
        if self.matrix_at is not None and other.matrix_at is not None:
            mat = lambda mu: self.matrices(mu) + other.matrices(mu)  # noqa: E731
        pw = None
        if self.pointwise is not None and other.pointwise is not None:
            pw = self.pointwise + other.pointwise
        return PseudoOneForm(
            lambda mu: self.field(mu) + other.field(mu), mat, name=f"{self.name}+{other.name}", pointwise=pw
        )

    def scaled(self, c: float) -> "PseudoOneForm":
        mat = None if self.matrix_at is None else (lambda mu: c * self.matrices(mu))
        pw = None
        if self.pointwise is not None:
            A = self.pointwise
            pw = AnalyticField(lambda x: c * A(x), lambda x: c * A.jac(x), f"{c}*{A.name}")
        return PseudoOneForm(lambda mu: c * self.field(mu), mat, name=f"{c}*{self.name}", pointwise=pw)


def linear_pseudo_one_form(A: AnalyticField, name: Optional[str] = None) -> PseudoOneForm:
    """The linear form ``Lambda_mu(X) = int <A, X> dmu`` with ``B_mu = grad A``."""
    return PseudoOneForm(
        field_at=lambda mu: A(mu.atoms),
        matrix_at=lambda mu: A.jac(mu.atoms),
        name=name or f"linear({A.name})",
        pointwise=A,
    )


def evaluate_form(form: PseudoOneForm, mu: DiscreteMeasure, X) -> float:
    """``Lambda_mu(X) = sum_i a_i <A_mu(x_i), X_i>``."""
    X = as_field(mu, X)
    return float(np.sum(mu.weights * np.sum(form.field(mu) * X, axis=1)))


def form_norm(form: PseudoOneForm, mu: DiscreteMeasure) -> float:
    """``||A_mu||_mu``, the operator norm of ``Lambda_mu`` on L^2(mu)."""
    A = form.field(mu)
    return float(np.sqrt(np.sum(mu.weights * np.sum(A * A, axis=1))))


def skew_pairing(B, X, Y):
    """``<(B - B^T) X, Y>`` over leading axes, exactly antisymmetric in ``X, Y``.

    Written as ``sum_{a<b} (B - B^T)_ab (X_b Y_a - X_a Y_b)`` so that swapping
    the arguments negates every term bit for bit.
    """
    D = B.shape[-1]
    a, b = np.triu_indices(D, k=1)
    skew = B[..., a, b] - B[..., b, a]
    return np.sum(skew * (X[..., b] * Y[..., a] - X[..., a] * Y[..., b]), axis=-1)


def exterior_derivative(form: PseudoOneForm, mu: DiscreteMeasure, X, Y) -> float:
    """``d Lambda_mu(X, Y) = sum_i a_i <(B_i - B_i^T) X_i, Y_i>``."""
    X, Y = as_field(mu, X), as_field(mu, Y)
    return float(np.sum(mu.weights * skew_pairing(form.matrices(mu), X, Y)))


def exterior_derivative_fd(form: PseudoOneForm, mu: DiscreteMeasure, X, Y, h: float = 1e-4) -> float:
    """``X Lambda(Y) - Y Lambda(X) - Lambda([X, Y])`` by central differences.

    The directional derivatives move ``mu`` along ``(Id + tX) # mu``; the
    fields ``X`` and ``Y`` must be :class:`AnalyticField` so that they can be
    re-evaluated at moved atoms and their bracket formed.
    """
    if not isinstance(X, AnalyticField) or not isinstance(Y, AnalyticField):
        raise JacobianUnavailable("X and Y must be AnalyticField instances to form [X, Y]")
    x = mu.atoms

    def along(Z, W):
        plus = mu.with_atoms(x + h * Z(x))
        minus = mu.with_atoms(x - h * Z(x))
        return (evaluate_form(form, plus, W(plus.atoms)) - evaluate_form(form, minus, W(minus.atoms))) / (2 * h)

    return along(X, Y) - along(Y, X) - evaluate_form(form, mu, lie_bracket(X, Y, x))


def _integrand(form: PseudoOneForm, curve: MeasureCurve) -> np.ndarray:
    curve.require_velocities()
    if form.pointwise is not None:
        K, n, D = curve.positions.shape
        A = form.pointwise(curve.positions.reshape(-1, D)).reshape(K, n, D)
    else:
        A = np.stack([form.field(curve.measure(k)) for k in range(curve.n_times)])
    return np.einsum("i,kid,kid->k", curve.weights, A, curve.velocities)


def line_integral(form: PseudoOneForm, curve: MeasureCurve) -> float:
    """Composite trapezoid rule for ``int Lambda_{sigma_t}(v_t) dt``."""
    return float(np.trapezoid(_integrand(form, curve), curve.times))


def line_integral_error(form: PseudoOneForm, curve: MeasureCurve) -> float:
    """Difference between the full-grid and half-resolution trapezoid values.

    Uses every other grid point, so the grid needs an even number of intervals.
    """
    lam = _integrand(form, curve)
    t = curve.times
    if (t.size - 1) % 2:
        lam, t = lam[:-1], t[:-1]
    full = np.trapezoid(lam, t)
    return float(abs(full - np.trapezoid(lam[::2], t[::2])))


def discrete_restriction(form: PseudoOneForm, n: int, x):
    """``(A(x), B(x))`` for ``mu_x = (1/n) sum_i delta_{x_i}``, ``x`` in R^{nD}.

    ``A`` stacks ``A_{mu_x}(x_i)``; ``B`` is block diagonal with blocks
    ``B_{mu_x}(x_i)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size % n:
        raise LengthMismatch(f"vector of length {x.size} is not n*D for n={n}")
    mu = make_measure(x.reshape(n, -1))
    require_distinct(mu)
    return form.field(mu).ravel(), block_diag(*form.matrices(mu))


def pullback(form: PseudoOneForm, phi: AnalyticField) -> PseudoOneForm:
    """``(phi^* Lambda)_mu(X) = Lambda_{phi # mu}(D phi X)``.

    The pulled-back field is ``Dphi(x)^T A_{phi#mu}(phi(x))``. The matrix data
    ``Dphi^T B Dphi`` is exact for affine ``phi`` only (it drops the
    second-derivative term of ``phi``).
    """

    def field_at(mu):
        J = phi.jac(mu.atoms)
        return np.einsum("nab,na->nb", J, form.field(pushforward(phi, mu)))

    matrix_at = None
    if form.matrix_at is not None:

        def matrix_at(mu):
            J = phi.jac(mu.atoms)
            return np.einsum("nka,nkl,nlb->nab", J, form.matrices(pushforward(phi, mu)), J)

    return PseudoOneForm(field_at, matrix_at, name=f"pullback({form.name})")


def regularity_defect(form: PseudoOneForm, pairs) -> dict:
    """Sample the regularity inequality on measure pairs ``(mu, nu)``.

    For each pair the transported defect
    ``||A_nu(y) - A_mu(x) - B_mu(x)(y - x)||_{L^2(gamma)}`` is computed on an
    optimal plan and divided by ``W2(mu, nu)``. If the form declares a
    modulus or constant, the ratio against ``W2 * min(modulus(W2), c)`` is
    reported as well (values <= 1 satisfy the inequality).
    """
    worst_ratio = 0.0
    worst_bound_ratio = 0.0
    rows = []
    for mu, nu in pairs:
        plan = optimal_plan(mu, nu)
        w2 = float(np.sqrt(max(plan.cost, 0.0)))
        Amu, Anu, B = form.field(mu), form.field(nu), form.matrices(mu)
        I, J = np.nonzero(plan.gamma)
        diff = Anu[J] - Amu[I] - np.einsum("kab,kb->ka", B[I], nu.atoms[J] - mu.atoms[I])
        defect = float(np.sqrt(np.sum(plan.gamma[I, J] * np.sum(diff * diff, axis=1))))
        ratio = defect / w2 if w2 > 0 else 0.0
        bound = None
        if form.modulus is not None or form.regularity_constant is not None:
            caps = [c for c in (form.regularity_constant,) if c is not None]
            if form.modulus is not None:
                caps.append(float(form.modulus(w2)))
            bound = w2 * min(caps)
            if bound > 0:
                worst_bound_ratio = max(worst_bound_ratio, defect / bound)
            elif defect > 0:
                worst_bound_ratio = np.inf
        worst_ratio = max(worst_ratio, ratio)
        rows.append({"w2": w2, "defect": defect, "ratio": ratio, "bound": bound})
    return {"worst_ratio": worst_ratio, "worst_bound_ratio": worst_bound_ratio, "samples": rows}
