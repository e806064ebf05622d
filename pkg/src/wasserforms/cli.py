"""Command-line front end.

Every subcommand prints one JSON document (or CSV with ``--format csv``)
holding a reproducibility header (tolerances, grids, SHA-256 digests of the
inputs) and the result. Exit codes: 0 success, 2 invalid input, 3 numerical
failure; errors are reported as JSON on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._parallel import max_threads
from .calculus import continuity_residual, curve_length, metric_derivative, wasserstein_gradient
from .curves import MeasureCurve, load_curve
from .errors import AtomCollision, NumericalError, ValidationError, WasserformsError
from .forms import line_integral, line_integral_error
from .green import (
    CLOSED_FORM_TOL,
    CLOSED_SAMPLES,
    DEFAULT_EPS,
    DEFAULT_R_SEQUENCE,
    green_report,
    loop_integral,
    potential_details,
    potential_via,
    reconstruct_potential,
)
from .library import CURVE_NAMES, FORM_NAMES, named_curve, named_form, scalar_function
from .measures import Functional, load_measure
from .symplectic import COLLISION_TOL, HAMILTONIAN_NAMES, SCHEMES, energy_drift, hamiltonian_flow, named_hamiltonian
from .transport import DUAL_SLACK, optimal_plan

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _float(x: float) -> str:
    if math.isfinite(x):
        text = format(x, ".17g")
        # keep floats distinguishable from integers
        return text if any(c in text for c in ".en") else text + ".0"
    # JSON has no literal for these
    return json.dumps("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits and sorted keys."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: str | None = None
    fmt: str = "json"
    figure: str | None = None

    def validate(self):
        for name, path in self.inputs.items():
            if not os.path.isfile(path):
                raise ValidationError(f"{name}: no such file {path!r}")
        for name, value in self.params.items():
            values = value if isinstance(value, (list, tuple)) else [value]
            for v in values:
                if isinstance(v, (int, float)) and not isinstance(v, bool) and not v > 0:
                    raise ValidationError(f"{name} must be positive, got {v}")
        return self


def _grid(text: str):
    try:
        nt, ns = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 128x64, got {text!r}") from None
    return nt, ns


def _float_list(text: str):
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wasserforms", description="Calculus on Wasserstein space over finitely-atomic measures.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp, figure=True):
        sp.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
        sp.add_argument("--output", help="write the result here instead of stdout")
        if figure:
            sp.add_argument("--figure", help="also render a figure to this path (png, pdf or svg)")

    sp = sub.add_parser("dist", help="W2 distance between two measure files")
    sp.add_argument("source")
    sp.add_argument("target")
    common(sp, figure=False)

    sp = sub.add_parser("plan", help="optimal plan and dual potentials")
    sp.add_argument("source")
    sp.add_argument("target")
    common(sp)

    sp = sub.add_parser("velocity", help="velocities, metric derivative and continuity check of a curve")
    sp.add_argument("--curve", required=True)
    sp.add_argument("--recompute", action="store_true", help="replace stored velocities by finite differences")
    sp.add_argument("--test-function", default="quadratic")
    sp.add_argument("--out", help="write the curve with velocities as CSV")
    common(sp)

    sp = sub.add_parser("integrate", help="line integral of a form along a curve")
    sp.add_argument("--form", required=True, help=", ".join(FORM_NAMES))
    sp.add_argument("--curve", required=True)
    common(sp, figure=False)

    sp = sub.add_parser("green", help="Green residual on the annulus over a curve")
    sp.add_argument("--form", required=True, help=", ".join(FORM_NAMES))
    sp.add_argument("--curve", required=True)
    sp.add_argument("--r", type=float, default=0.1)
    sp.add_argument("--grid", type=_grid, default=(128, 64), help="time x radius intervals, e.g. 128x64")
    sp.add_argument("--levels", type=int, default=3)
    common(sp)

    sp = sub.add_parser("loop", help="integral of a form around a closed curve")
    sp.add_argument("--form", required=True, help=", ".join(FORM_NAMES))
    sp.add_argument("--curve", required=True)
    sp.add_argument("--r-sequence", type=_float_list, default=list(DEFAULT_R_SEQUENCE))
    sp.add_argument("--closed-tol", type=float, default=1e-8)
    common(sp)

    sp = sub.add_parser("potential", help="potential of a closed form at a measure")
    sp.add_argument("--form", required=True, help=", ".join(FORM_NAMES))
    sp.add_argument("--measure", required=True)
    sp.add_argument("--steps", type=int, default=4000)
    sp.add_argument("--eps", type=_float_list, default=list(DEFAULT_EPS))
    sp.add_argument("--via", help="also integrate along a radial path to this measure then the geodesic")
    sp.add_argument("--check-gradient", action="store_true")
    common(sp, figure=False)

    sp = sub.add_parser("flow", help="Hamiltonian flow of the atoms of a measure")
    sp.add_argument("--hamiltonian", required=True, help=", ".join(HAMILTONIAN_NAMES))
    sp.add_argument("--measure", required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--dt", type=float, required=True)
    sp.add_argument("--scheme", choices=SCHEMES, default="rk4")
    sp.add_argument("--record-every", type=int, default=1)
    sp.add_argument("--out", help="write the trajectory as CSV")
    common(sp)

    sp = sub.add_parser("make-curve", help="write a built-in test curve as CSV")
    sp.add_argument("--name", required=True, choices=CURVE_NAMES)
    sp.add_argument("--intervals", type=int, default=128)
    sp.add_argument("--out", required=True)
    common(sp, figure=False)
    return p


_INPUT_KEYS = ("source", "target", "curve", "measure", "via")
_SKIP_KEYS = {"subcommand", "fmt", "output", "figure", "out"} | set(_INPUT_KEYS)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    ns = vars(args)
    inputs = {k: ns[k] for k in _INPUT_KEYS if ns.get(k)}
    params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in ns.items() if k not in _SKIP_KEYS}
    cfg = RunConfig(ns["subcommand"], inputs, params, ns.get("output"), ns.get("fmt", "json"), ns.get("figure"))
    return cfg.validate()


def _header(cfg: RunConfig, tolerances: dict) -> dict:
    return {
        "command": cfg.subcommand,
        "version": __version__,
        "inputs": {k: {"path": os.path.basename(v), "sha256": file_digest(v)} for k, v in sorted(cfg.inputs.items())},
        "parameters": cfg.params,
        "tolerances": tolerances,
    }


def _curve_input(path) -> tuple[MeasureCurve, bool]:
    curve = load_curve(path)
    if curve.has_velocities:
        return curve, False
    return curve.with_fd_velocities(), True


def _run_dist(cfg, args, artifacts):
    mu, nu = load_measure(args.source), load_measure(args.target)
    plan = optimal_plan(mu, nu)
    return {"dual_slack": DUAL_SLACK}, {"w2": float(np.sqrt(max(plan.cost, 0.0)))}


def _run_plan(cfg, args, artifacts):
    mu, nu = load_measure(args.source), load_measure(args.target)
    plan = optimal_plan(mu, nu)
    if cfg.figure:
        from .plotting import plot_plan

        artifacts.append(lambda: plot_plan(plan, cfg.figure))
    em, en = plan.marginal_errors()
    result = plan.to_dict()
    result.update(
        {
            "w2": float(np.sqrt(max(plan.cost, 0.0))),
            "dual_value": plan.dual_value,
            "u": plan.u,
            "v": plan.v,
            "marginal_error": max(em, en),
        }
    )
    return {"dual_slack": DUAL_SLACK}, result


def _run_velocity(cfg, args, artifacts):
    curve = load_curve(args.curve)
    recomputed = args.recompute or not curve.has_velocities
    if recomputed:
        curve = curve.with_fd_velocities()
    f = scalar_function(args.test_function, curve.dimension)
    interior = curve.times[1:-1]
    md = [metric_derivative(curve, t) for t in interior]
    speeds = curve.speeds()
    result = {
        "n_times": curve.n_times,
        "n_atoms": curve.n,
        "velocities_recomputed": recomputed,
        "speeds": speeds,
        "metric_derivative": md,
        "max_speed_gap": float(np.max(np.abs(np.asarray(md) - speeds[1:-1]))) if md else 0.0,
        "length": curve_length(curve),
        "continuity_residual": continuity_residual(curve, f) if curve.n_times > 2 else 0.0,
    }
    if args.out:
        artifacts.append(lambda: _write(args.out, curve.to_csv()))
    if cfg.figure:
        from .plotting import plot_curve

        artifacts.append(lambda: plot_curve(curve, cfg.figure, "velocity"))
    artifacts.curve = curve
    return {"velocity_stencil": "central interior, one-sided ends"}, result


def _run_integrate(cfg, args, artifacts):
    curve, fd = _curve_input(args.curve)
    form = named_form(args.form, curve.dimension)
    return {"quadrature": "trapezoid"}, {
        "line_integral": line_integral(form, curve),
        "half_grid_difference": line_integral_error(form, curve),
        "velocities_recomputed": fd,
    }


def _run_green(cfg, args, artifacts):
    curve, fd = _curve_input(args.curve)
    n_t, n_s = args.grid
    if n_t <= 0 or n_s <= 0 or args.levels < 1:
        raise ValidationError("grid sizes and levels must be positive")
    if curve.n_times - 1 != n_t:
        curve = curve.resample(np.linspace(curve.times[0], curve.times[-1], n_t + 1))
    form = named_form(args.form, curve.dimension)
    report = green_report(form, curve, args.r, n_t, n_s, args.levels)
    report["velocities_recomputed"] = fd
    report["resampled"] = bool(load_curve(args.curve).n_times - 1 != n_t)
    if cfg.figure:
        from .plotting import plot_refinement

        artifacts.append(lambda: plot_refinement(report["refinement"], cfg.figure, f"{args.form}, r={args.r}"))
    return {"quadrature": "tensor trapezoid", "order_floor": 1e-12}, report


def _run_loop(cfg, args, artifacts):
    curve, fd = _curve_input(args.curve)
    form = named_form(args.form, curve.dimension)
    if any(not 0 < r < 1 for r in args.r_sequence):
        raise ValidationError("radii must lie in (0, 1)")
    report = loop_integral(form, curve, args.r_sequence, args.closed_tol)
    result = report.to_dict()
    result["velocities_recomputed"] = fd
    if cfg.figure:
        from .plotting import plot_inner_edges

        artifacts.append(lambda: plot_inner_edges(report, cfg.figure, args.form))
    return {"closed_form_tol": CLOSED_FORM_TOL, "closed_samples": CLOSED_SAMPLES, "closed_curve_tol": args.closed_tol}, result


def _run_potential(cfg, args, artifacts):
    mu = load_measure(args.measure)
    form = named_form(args.form, mu.dimension)
    if any(not 0 < e < 1 for e in args.eps) or len(set(args.eps)) != len(args.eps):
        raise ValidationError("eps values must be distinct and lie in (0, 1)")
    result = potential_details(form, mu, args.steps, args.eps)
    if args.via:
        result["via_value"] = potential_via(form, mu, load_measure(args.via), args.steps)
        result["path_difference"] = abs(result["via_value"] - result["value"])
    if args.check_gradient:
        F = Functional(lambda m: reconstruct_potential(form, m, args.steps, args.eps, verify_closed=False))
        grad = wasserstein_gradient(F, mu)
        result["gradient"] = grad
        result["gradient_error"] = float(np.abs(grad - form.field(mu)).max())
    return {"closed_form_tol": CLOSED_FORM_TOL, "closed_samples": CLOSED_SAMPLES, "extrapolation": "polynomial in eps"}, result


def _run_flow(cfg, args, artifacts):
    mu = load_measure(args.measure)
    system = named_hamiltonian(args.hamiltonian, mu.dimension)
    curve = hamiltonian_flow(system, mu, args.T, args.dt, args.scheme, args.record_every)
    result = {
        "final_time": float(curve.times[-1]),
        "final_atoms": curve.positions[-1],
        "weights": curve.weights,
        "energy_initial": system.energy(curve.measure(0)),
        "energy_final": system.energy(curve.measure(curve.n_times - 1)),
        "energy_drift": energy_drift(system, curve),
        "n_records": curve.n_times,
    }
    if args.out:
        artifacts.append(lambda: _write(args.out, curve.to_csv()))
    if cfg.figure:
        from .plotting import plot_curve

        artifacts.append(lambda: plot_curve(curve, cfg.figure, args.hamiltonian))
    artifacts.curve = curve
    return {"collision_tol": COLLISION_TOL}, result


def _run_make_curve(cfg, args, artifacts):
    curve = named_curve(args.name, args.intervals)
    artifacts.append(lambda: _write(args.out, curve.to_csv()))
    artifacts.curve = curve
    return {}, {"n_times": curve.n_times, "n_atoms": curve.n, "dimension": curve.dimension}


_HANDLERS = {
    "dist": _run_dist,
    "plan": _run_plan,
    "velocity": _run_velocity,
    "integrate": _run_integrate,
    "green": _run_green,
    "loop": _run_loop,
    "potential": _run_potential,
    "flow": _run_flow,
    "make-curve": _run_make_curve,
}


class _Artifacts(list):
    curve = None


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _flat_csv(doc: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj, key=str):
                walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
        elif isinstance(obj, (list, tuple, np.ndarray)):
            for i, v in enumerate(np.asarray(obj, dtype=object).tolist() if isinstance(obj, np.ndarray) else obj):
                walk(f"{prefix}[{i}]", v)
        else:
            w.writerow([prefix, dumps(obj).strip('"')])

    walk("", doc)
    return buf.getvalue()


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        max_threads()
        cfg = config_from_args(args)
        artifacts = _Artifacts()
        tolerances, result = _HANDLERS[cfg.subcommand](cfg, args, artifacts)
        tolerances["threads"] = max_threads()
        doc = _header(cfg, tolerances)
        doc["result"] = result
        if cfg.fmt == "csv":
            text = artifacts.curve.to_csv() if artifacts.curve is not None else _flat_csv(doc)
        else:
            text = dumps(doc) + "\n"
        for write in artifacts:
            write()
        if cfg.output:
            _write(cfg.output, text)
        else:
            stdout.write(text)
        return EXIT_OK
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        return _fail(stderr, exc, EXIT_VALIDATION)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(stderr, exc, EXIT_NUMERICAL)
    except WasserformsError as exc:
        return _fail(stderr, exc, EXIT_NUMERICAL)


def _fail(stderr, exc, code) -> int:
    err = {"error": getattr(exc, "code", type(exc).__name__), "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, AtomCollision):
        err["t"] = exc.t
    stderr.write(dumps(err, indent=0).replace("\n", "") + "\n")
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
