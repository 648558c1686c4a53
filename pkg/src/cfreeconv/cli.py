"""Command line front end.

    cfreeconv density   'fconv(bernoulli(1), bernoulli(1))'
    cfreeconv convolve  'cfconv(pair(bernoulli(1), delta(0)), pair(bernoulli(1), delta(0)))'
    cfreeconv transforms 'semicircle(0, 2)' --at 2j,1+1j
    cfreeconv limit scenario.json
    cfreeconv infdiv generators.json
    cfreeconv stable check params.json

Exit codes: 0 ok, 2 parse error, 3 numerical failure, 4 precondition failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import arrays, infdiv, stable
from .convolution import CFreePair
from .errors import NumericalError, PreconditionError
from .expr import EvaluationError, ParseError, Settings, evaluate, parse
from .measure import DEFAULT_GRID_N, MIN_GRID_N, Measure
from .transforms import cauchy_G, e_transform, f_transform, make_context, phi_transform

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_PRECONDITION = 0, 2, 3, 4
SIG_DIGITS = 12


def fmt(x: float) -> str:
    """Positional decimal with 12 significant digits."""
    x = float(x)
    if x == 0:
        return "0"
    return np.format_float_positional(x, precision=SIG_DIGITS, unique=False, fractional=False, trim="-")


# ------------------------------------------------------------- emitters

def _grid(m: Measure, window, n):
    if window is not None:
        return np.linspace(window[0], window[1], n)
    if m.values is not None:
        return m.grid
    return None


def measure_csv(m: Measure, columns=("density",), window=None, grid_n=DEFAULT_GRID_N, label=None) -> list[str]:
    lines = []
    if label:
        lines.append(f"# component,{label}")
    lines.append("# atom,location,mass")
    for a, w in m.atoms:
        lines.append(f"# atom,{fmt(a)},{fmt(w)}")
    lines.append("x," + ",".join(columns))
    x = _grid(m, window, grid_n)
    if x is not None:
        cols = []
        for c in columns:
            cols.append(m.density_at(x) if c == "density" else m.cdf(x))
        for i, xi in enumerate(x):
            lines.append(",".join([fmt(xi)] + [fmt(col[i]) for col in cols]))
    return lines


def measure_json(m: Measure, window=None, grid_n=DEFAULT_GRID_N) -> dict:
    out = m.to_dict()
    if window is not None:
        x = _grid(m, window, grid_n)
        out["grid"] = {"start": float(x[0]), "step": float(x[1] - x[0]), "n": len(x)}
        out["values"] = m.density_at(x).tolist()
    out["total_mass"] = m.total_mass
    return out


def _emit_result(obj, args, columns):
    if args.format == "json":
        if isinstance(obj, CFreePair):
            data = {"mu": measure_json(obj.mu, args.window, args.grid_n),
                    "nu": measure_json(obj.nu, args.window, args.grid_n)}
        else:
            data = measure_json(obj, args.window, args.grid_n)
        return _dump_json(data)
    if isinstance(obj, CFreePair):
        lines = measure_csv(obj.mu, columns, args.window, args.grid_n, "mu")
        lines += measure_csv(obj.nu, columns, args.window, args.grid_n, "nu")
    else:
        lines = measure_csv(obj, columns, args.window, args.grid_n)
    return "\n".join(lines) + "\n"


def _dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write(text: str, args):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the exit flush
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())


def _table(header, rows) -> str:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(fmt(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool)
                            else str(v) for v in r))
    return "\n".join(out) + "\n"


# ------------------------------------------------------------- commands

def _evaluate(args):
    node = parse(args.expr)
    return evaluate(node, Settings(grid_n=args.grid_n)), node


def cmd_density(args):
    obj, _ = _evaluate(args)
    return _emit_result(obj, args, ("density",))


def cmd_convolve(args):
    obj, node = _evaluate(args)
    if node.name not in ("cconv", "bconv", "fconv", "cfconv"):
        raise PreconditionError(f"convolve needs a convolution at the top level, got {node.name}")
    return _emit_result(obj, args, ("density", "cdf"))


def _parse_points(text: str) -> np.ndarray:
    try:
        return np.array([complex(t.strip().replace(" ", "")) for t in text.split(",") if t.strip()])
    except ValueError as e:
        raise PreconditionError(f"bad point list {text!r}: {e}") from None


def cmd_transforms(args):
    obj, _ = _evaluate(args)
    z = _parse_points(args.at)
    if isinstance(obj, CFreePair):
        ctx = make_context(obj.nu)
        cols = {"Phi": phi_transform(obj.mu, ctx, z)}
    else:
        cols = {"G": cauchy_G(obj, z), "F": f_transform(obj, z), "E": e_transform(obj, z)}
    if args.format == "json":
        data = {"z": [[p.real, p.imag] for p in z]}
        data.update({k: [[v.real, v.imag] for v in vals] for k, vals in cols.items()})
        return _dump_json(data)
    header = ["re_z", "im_z"] + [f"{p}_{k}" for k in cols for p in ("re", "im")]
    rows = []
    for i, p in enumerate(z):
        row = [p.real, p.imag]
        for vals in cols.values():
            row += [vals[i].real, vals[i].imag]
        rows.append(row)
    return _table(header, rows)


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise PreconditionError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise PreconditionError(f"{path} is not valid JSON: {e}") from None


def cmd_limit(args):
    sc = _load_json(args.scenario)
    family = sc.get("family")
    if family not in arrays.SCENARIOS:
        raise PreconditionError(f"unknown scenario family {family!r}; expected one of {sorted(arrays.SCENARIOS)}")
    ns = [int(n) for n in sc.get("n_ladder", [16, 64, 256])]
    params = list(sc.get("params", []))
    rows = arrays.SCENARIOS[family](ns, params)
    shifts = sc.get("shifts")
    if shifts is not None:
        shifts = shifts if isinstance(shifts, list) else [shifts] * len(rows)
        if len(shifts) != len(rows):
            raise PreconditionError("shifts must match n_ladder")
        rows = [arrays.ArrayRow(r.measures, float(c)) for r, c in zip(rows, shifts)]
    tol = args.tol if args.tol is not None else arrays.ROUTE_TOL
    rep = arrays.array_limit_harness(rows, rows, tol=tol, grid_n=args.grid_n)
    if args.format == "json":
        return _dump_json(rep.to_dict())
    table = []
    for route, d in rep.distances.items():
        sizes = rep.sizes[1:] if route == "nu_cauchy" else rep.sizes
        table += [[route, n, v] for n, v in zip(sizes, d)]
    text = _table(["route", "n", "levy"], table)
    text += f"# gamma,{fmt(rep.generators.first.gamma)}\n"
    text += f"# sigma_mass,{fmt(rep.generators.first.sigma.total_mass)}\n"
    text += f"# closing_error,{fmt(rep.closing_error)}\n"
    text += f"# passed,{rep.passed}\n"
    return text


def _sigma(d: dict | None) -> Measure:
    return Measure.from_dict(d) if d else Measure.zero()


def generators_from_json(data: dict) -> infdiv.CFreeGeneratorPair:
    """``{gamma, sigma: {atoms, grid, values}, gamma2, sigma2: {...}}``."""
    try:
        first = infdiv.LevyHincinParams(float(data["gamma"]), _sigma(data.get("sigma")))
        second = infdiv.LevyHincinParams(float(data.get("gamma2", 0.0)), _sigma(data.get("sigma2")))
    except (KeyError, TypeError) as e:
        raise PreconditionError(f"bad generator JSON: {e}") from None
    return infdiv.CFreeGeneratorPair(first, second)


def cmd_infdiv(args):
    data = _load_json(args.pair)
    tol = args.tol if args.tol is not None else infdiv.FIT_ACCEPT
    if "mu" in data and "nu" in data:
        pair = CFreePair(Measure.from_dict(data["mu"]), Measure.from_dict(data["nu"]))
        law = None
    else:
        law = infdiv.cfree_limit_law(generators_from_json(data), args.grid_n)
        pair = law
    rep = infdiv.check_infdiv(pair, tol)
    summary = {"accepted": rep.accepted, "residual": rep.residual, "nu_residual": rep.nu_fit.residual,
               "gamma": rep.gamma, "sigma": rep.sigma.to_dict(),
               "gamma2": rep.nu_fit.gamma, "sigma2": rep.nu_fit.sigma.to_dict()}
    if args.format == "json":
        if law is not None:
            summary["law"] = {"mu": measure_json(law.mu, args.window, args.grid_n),
                              "nu": measure_json(law.nu, args.window, args.grid_n)}
        return _dump_json(summary)
    head = [f"# accepted,{rep.accepted}", f"# residual,{fmt(rep.residual)}",
            f"# nu_residual,{fmt(rep.nu_fit.residual)}", f"# gamma,{fmt(rep.gamma)}",
            "# sigma_atom,location,mass"]
    head += [f"# sigma_atom,{fmt(a)},{fmt(w)}" for a, w in rep.sigma.atoms]
    text = "\n".join(head) + "\n"
    if law is not None:
        text += _emit_result(law, args, ("density",))
    return text


def cmd_stable(args):
    data = _load_json(args.params)
    if args.action == "evaluate":
        f = stable.StableFunction.from_dict(data)
        z = _parse_points(args.at or "1j")
        v = f(z)
        if args.format == "json":
            return _dump_json({"z": [[p.real, p.imag] for p in z], "phi": [[w.real, w.imag] for w in v]})
        return _table(["re_z", "im_z", "re_phi", "im_phi"], [[p.real, p.imag, w.real, w.imag] for p, w in zip(z, v)])
    if args.action == "check":
        f = stable.StableFunction.from_dict(data)
        tol = args.tol if args.tol is not None else stable.STABILITY_TOL
        res = [(a, stable.check_stability(f, a, tol)) for a in args.a_test]
        if args.format == "json":
            return _dump_json([{"a": a, "b": r.b, "c": r.c, "residual": r.residual, "stable": r.stable}
                               for a, r in res])
        return _table(["a", "b", "c", "residual", "stable"], [[a, r.b, r.c, r.residual, r.stable] for a, r in res])
    phi = stable.StableFunction.from_dict(data["phi"])
    psi = stable.StableFunction.from_dict(data["psi"])
    pair = stable.make_stable_pair(phi, psi, args.grid_n)
    return _emit_result(pair, args, ("density",))


# --------------------------------------------------------------- parser

def _window(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("window must be 'lo,hi'") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("window needs lo < hi")
    return lo, hi


def _grid_size(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < MIN_GRID_N:
        raise argparse.ArgumentTypeError(f"grid size must be at least {MIN_GRID_N}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid-n", type=_grid_size, default=DEFAULT_GRID_N, help="density grid size")
    common.add_argument("--window", type=_window, default=None, help="output window 'lo,hi'")
    common.add_argument("--tol", type=float, default=None, help="acceptance tolerance")
    common.add_argument("--out", default=None, help="write output to this path")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="cfreeconv", description="Classical, boolean, free and c-free convolutions.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("density", parents=[common], help="evaluate an expression and print its density")
    s.add_argument("expr")
    s.set_defaults(func=cmd_density)
    s = sub.add_parser("convolve", parents=[common], help="evaluate a convolution; prints density and cdf")
    s.add_argument("expr")
    s.set_defaults(func=cmd_convolve)
    s = sub.add_parser("transforms", parents=[common], help="G, F, E (or Phi for pairs) at points")
    s.add_argument("expr")
    s.add_argument("--at", required=True, help="comma separated complex points, e.g. 2j,1+1j")
    s.set_defaults(func=cmd_transforms)
    s = sub.add_parser("limit", parents=[common], help="run the triangular array harness on a scenario")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_limit)
    s = sub.add_parser("infdiv", parents=[common], help="build a limit law from generators or test a pair")
    s.add_argument("pair")
    s.set_defaults(func=cmd_infdiv)
    s = sub.add_parser("stable", parents=[common], help="stable functions: evaluate, check, construct")
    s.add_argument("action", choices=("evaluate", "check", "construct"))
    s.add_argument("params")
    s.add_argument("--at", default=None)
    s.add_argument("--a-test", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    s.set_defaults(func=cmd_stable)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.func(args)
    except ParseError as e:
        print(f"parse error at {e}", file=sys.stderr)
        caret = e.caret()
        if caret:
            print(caret, file=sys.stderr)
        return EXIT_PARSE
    except EvaluationError as e:
        print(f"error {e}", file=sys.stderr)
        return EXIT_PRECONDITION if isinstance(e.cause, PreconditionError) else EXIT_NUMERIC
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except PreconditionError as e:
        print(f"precondition failure: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    _write(text, args)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
