"""Named scalar functions, pseudo 1-forms and test curves for the CLI.

Scalar functions are either one of the names in :data:`SCALAR_NAMES` or a
sympy expression in the coordinates ``x0, x1, ...`` (``x, y`` are accepted
as aliases of ``x0, x1``).
"""

from __future__ import annotations

import numpy as np
import sympy as sp

from .curves import MeasureCurve
from .errors import ValidationError
from .forms import PseudoOneForm, linear_pseudo_one_form
from .measures import AnalyticField, ScalarField, affine_field, gradient_field


def _named_expression(name: str, D: int) -> str:
    xs = [f"x{k}" for k in range(D)]
    if name == "quadratic":
        return "+".join(f"{x}**2/2" for x in xs)
    if name == "cubic":
        cross = f"+{xs[0]}*{xs[-1]}" if D > 1 else ""
        return "+".join(f"{x}**3/3" for x in xs) + cross
    if name == "gaussian":
        return "exp(-(" + "+".join(f"{x}**2" for x in xs) + ")/2)"
    if name == "zero":
        return "0"
    raise KeyError(name)


SCALAR_NAMES = ("quadratic", "cubic", "gaussian", "zero")


def _lambdify_rows(symbols, expr):
    fn = sp.lambdify(symbols, expr, "numpy")

    def call(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = fn(*x.T)
        return np.broadcast_to(np.asarray(out, dtype=float), (x.shape[0],))

    return call


def sympy_scalar(expr, dimension: int, name: str | None = None) -> ScalarField:
    """Build a :class:`ScalarField` with exact gradient and Hessian from sympy."""
    syms = sp.symbols(f"x0:{dimension}")
    local = {f"x{k}": s for k, s in enumerate(syms)}
    if dimension >= 2:
        local.setdefault("x", syms[0])
        local.setdefault("y", syms[1])
    if isinstance(expr, str):
        try:
            expr = sp.sympify(expr, locals=local)
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise ValidationError(f"cannot parse expression {expr!r}: {exc}") from exc
    extra = expr.free_symbols - set(syms)
    if extra:
        raise ValidationError(f"unknown symbols {sorted(map(str, extra))} for dimension {dimension}")
    value = _lambdify_rows(syms, expr)
    grads = [_lambdify_rows(syms, sp.diff(expr, s)) for s in syms]
    hess = [[_lambdify_rows(syms, sp.diff(expr, a, b)) for b in syms] for a in syms]

    def grad(x):
        return np.stack([g(x) for g in grads], axis=-1)

    def hessian(x):
        return np.stack([np.stack([h(x) for h in row], axis=-1) for row in hess], axis=-2)

    return ScalarField(value, grad, hessian, name=name or str(expr))


def scalar_function(name: str, dimension: int) -> ScalarField:
    try:
        return sympy_scalar(_named_expression(name, dimension), dimension, name=name)
    except KeyError:
        return sympy_scalar(name, dimension)


def rotational_field(dimension: int = 2) -> AnalyticField:
    """``A(x) = (-x_1, x_0, 0, ...)``: rotation in the first coordinate plane."""
    if dimension < 2:
        raise ValidationError("rotational field needs dimension >= 2")
    M = np.zeros((dimension, dimension))
    M[0, 1], M[1, 0] = -1.0, 1.0
    return affine_field(M)


def shear_field(dimension: int = 2) -> AnalyticField:
    """``A(x) = (x_1, 0, ...)``."""
    if dimension < 2:
        raise ValidationError("shear field needs dimension >= 2")
    M = np.zeros((dimension, dimension))
    M[0, 1] = 1.0
    return affine_field(M)


def twist_field(dimension: int = 2) -> AnalyticField:
    """``A(x) = (-x_1 (1 + x_0^2), x_0 + x_1^3, 0, ...)``, a nonlinear field that is not a gradient."""
    if dimension < 2:
        raise ValidationError("twist field needs dimension >= 2")

    def value(x):
        x = np.atleast_2d(x)
        out = np.zeros_like(x, dtype=float)
        out[:, 0] = -x[:, 1] * (1 + x[:, 0] ** 2)
        out[:, 1] = x[:, 0] + x[:, 1] ** 3
        return out

    def jac(x):
        x = np.atleast_2d(x)
        J = np.zeros(x.shape + (x.shape[1],))
        J[:, 0, 0] = -2 * x[:, 0] * x[:, 1]
        J[:, 0, 1] = -(1 + x[:, 0] ** 2)
        J[:, 1, 0] = 1.0
        J[:, 1, 1] = 3 * x[:, 1] ** 2
        return J

    return AnalyticField(value, jac, "twist")


FORM_NAMES = ("gradient:<f>", "rotational", "shear", "twist")


def named_form(name: str, dimension: int) -> PseudoOneForm:
    """``gradient:<f>``, ``rotational`` or ``shear`` as a linear pseudo 1-form."""
    if name.startswith("gradient:"):
        f = scalar_function(name.split(":", 1)[1], dimension)
        return linear_pseudo_one_form(gradient_field(f), name=name)
    if name == "rotational":
        return linear_pseudo_one_form(rotational_field(dimension), name=name)
    if name == "shear":
        return linear_pseudo_one_form(shear_field(dimension), name=name)
    if name == "twist":
        return linear_pseudo_one_form(twist_field(dimension), name=name)
    raise ValidationError(f"unknown form {name!r}; choose from {', '.join(FORM_NAMES)}")


def dirac_circle(n_intervals: int = 128, radius: float = 1.0, turns: int = 1) -> MeasureCurve:
    """``sigma_t = delta_{(R cos t, R sin t)}`` for ``t`` in ``[0, 2 pi turns]``."""
    t = np.linspace(0.0, 2 * np.pi * turns, n_intervals + 1)
    pos = radius * np.stack([np.cos(t), np.sin(t)], axis=-1)[:, None, :]
    vel = radius * np.stack([-np.sin(t), np.cos(t)], axis=-1)[:, None, :]
    return MeasureCurve(t, pos, [1.0], vel)


def swap_loop(n_intervals: int = 256, radius: float = 1.0, center=(0.3, -0.2)) -> MeasureCurve:
    """Two atoms exchanging places along a half turn about ``center``.

    The measure returns to itself at ``t = pi`` while each trajectory does not.
    """
    c = np.asarray(center, dtype=float)
    t = np.linspace(0.0, np.pi, n_intervals + 1)
    e = np.stack([np.cos(t), np.sin(t)], axis=-1)
    de = np.stack([-np.sin(t), np.cos(t)], axis=-1)
    pos = np.stack([c + radius * e, c - radius * e], axis=1)
    vel = np.stack([radius * de, -radius * de], axis=1)
    return MeasureCurve(t, pos, [0.5, 0.5], vel)


CURVE_NAMES = ("circle", "swap")


def named_curve(name: str, n_intervals: int) -> MeasureCurve:
    if name == "circle":
        return dirac_circle(n_intervals)
    if name == "swap":
        return swap_loop(n_intervals)
    raise ValidationError(f"unknown curve {name!r}; choose from {', '.join(CURVE_NAMES)}")
