"""Command-line entry point: ``sflrdt {evaluate,solve,table,oracle,check}``.

Exit codes: 0 success, 2 argument or parse error, 3 convergence failure,
4 domain or quadrature error.

Table CSV columns are ``model, alpha, r, mode, status, gamma_sq, p_2..p_R,
q_2..q_R, c_2..c_R, energy, residual, collapsed_to_partial`` with ``R`` the
largest level in the table; ``--reference`` appends ``ref_<col>`` and
``delta_<col>`` for every numeric column the reference table lists.
"""

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import reference
from .errors import (
    ArgumentError,
    CapError,
    ConvergenceError,
    DomainError,
    ParseError,
    QuadratureError,
)
from .model import LiftParams, ModelSpec, psi_bar_value, psi_rd_bar, spherical_term
from .oracle import OracleConfig, estimate_ground_state
from .quadrature import QuadratureGrid, binary_term, hermite_rule, spherical_term_quadrature
from .solver import SolveConfig, solve_modulo_m, solve_stationary

EXIT_OK, EXIT_ARGS, EXIT_CONVERGENCE, EXIT_DOMAIN = 0, 2, 3, 4
PARAM_KEYS = ("r", "p", "q", "c", "gamma_sq")
SIGN = {"positive": 1, "negative": -1}


# ---------------------------------------------------------------- parsing

def parse_params(text, source="<params>"):
    """Parse a ``key=value`` parameter file into :class:`LiftParams`.

    Vectors are comma-separated and hold every entry ``1, ..., 0``.
    Blank lines and ``#`` comments are ignored.
    """
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in PARAM_KEYS:
            raise ParseError(f"{source}:{lineno}: unknown field {key!r}")
        if key in values:
            raise ParseError(f"{source}:{lineno}: field {key!r} given twice")
        try:
            if key == "r":
                values[key] = int(val)
            elif key == "gamma_sq":
                values[key] = float(val)
            else:
                values[key] = [float(t) for t in val.split(",")]
        except ValueError:
            raise ParseError(f"{source}:{lineno}: field {key!r} has a malformed value {val!r}") from None
        lines[key] = lineno
    r = values.get("r")
    for key in ("p", "q", "c"):
        if r is not None and key in values and len(values[key]) != r + 1:
            raise ParseError(
                f"{source}:{lines[key]}: field {key!r} has {len(values[key])} entries, "
                f"expected r+1 = {r + 1}"
            )
    missing = [k for k in PARAM_KEYS if k not in values]
    if missing:
        raise ParseError(f"{source}: missing field(s) {', '.join(missing)}")
    try:
        return LiftParams(r, values["p"], values["q"], values["c"], values["gamma_sq"])
    except ValueError as err:
        raise ParseError(f"{source}: {err}") from None


def format_params(params):
    """Inverse of :func:`parse_params`."""
    vec = lambda v: ", ".join(repr(float(x)) for x in v)
    return (
        f"r = {params.r}\np = {vec(params.p)}\nq = {vec(params.q)}\n"
        f"c = {vec(params.c)}\ngamma_sq = {params.gamma_sq!r}\n"
    )


# ---------------------------------------------------------------- output

def _json(obj):
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _cell(key, v):
    if v is None:
        return ""
    if isinstance(v, bool) or not isinstance(v, float):
        return v
    return f"{v:.3e}" if key == "residual" else f"{v:.6f}"


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------- commands

def _spec(args, r=None, mode=None):
    return ModelSpec(SIGN[args.model], args.alpha, args.level if r is None else r,
                     args.mode if mode is None else mode)


def _grid(args):
    return QuadratureGrid(target_rel_err=args.quad_target, max_order=args.max_order)


def _cfg(args):
    return SolveConfig(grad_tol=args.grad_tol, seed=args.seed, restarts=args.restarts)


def cmd_evaluate(args):
    with open(args.params, encoding="utf-8") as fh:
        params = parse_params(fh.read(), args.params)
    spec = _spec(args, r=params.r, mode=args.mode or "full")
    res = psi_rd_bar(params, spec, _grid(args))
    if args.format == "csv":
        keys = list(res.parts)
        text = _csv(["psi_bar", "free_energy", *keys],
                    [[repr(res.psi_bar), repr(res.free_energy), *(repr(res.parts[k]) for k in keys)]])
    else:
        text = _json({"model": args.model, "alpha": spec.alpha, "r": params.r,
                      "psi_bar": res.psi_bar, "free_energy": res.free_energy, "parts": res.parts})
    _emit(text, args.out)
    return EXIT_OK


def _report_dict(rep):
    return {
        "mode": rep.mode,
        "free_energy": rep.free_energy,
        "residual": rep.residual,
        "converged": rep.converged,
        "collapsed_to_partial": rep.collapsed_to_partial,
        "iterations": rep.iterations,
        "restarts_used": rep.restarts_used,
        "quadrature_orders": list(rep.quadrature_orders),
        "params": rep.params.as_dict(),
    }


def cmd_solve(args):
    spec = _spec(args)
    fn = solve_modulo_m if spec.mode == "modulo-m" else solve_stationary
    try:
        rep = fn(spec, _cfg(args), _grid(args))
        code = EXIT_OK
    except ConvergenceError as err:
        rep, code = err.report, EXIT_CONVERGENCE
        print(f"error: {err}", file=sys.stderr)
        if rep is None:
            return code
    d = {"model": args.model, "alpha": spec.alpha, "r": spec.r, **_report_dict(rep)}
    if args.format == "csv":
        row = _table_row(spec, rep, "ok" if code == EXIT_OK else "failed", spec.r)
        header = _table_header(spec.r)
        text = _csv(header, [[_cell(k, v) for k, v in zip(header, row)]])
    else:
        text = _json(d)
    _emit(text, args.out)
    return code


def _table_header(top):
    cols = ["model", "alpha", "r", "mode", "status", "gamma_sq"]
    for name in "pqc":
        cols += [f"{name}_{k}" for k in range(2, top + 1)]
    return cols + ["energy", "residual", "collapsed_to_partial"]


def _cells(r, gamma_sq, p, q, c, top):
    """Numeric cells keyed by column name; p, q, c hold entries 2..r."""
    out = {"gamma_sq": gamma_sq}
    for name, v in zip("pqc", (p, q, c)):
        for k in range(2, top + 1):
            out[f"{name}_{k}"] = v[k - 2] if k <= r else None
    return out


def _table_row(spec, rep, status, top):
    model = "positive" if spec.s == 1 else "negative"
    head = [model, spec.alpha, spec.r, spec.mode, status]
    if rep is None:
        return head + [None] * (len(_table_header(top)) - len(head))
    P = rep.params
    cells = _cells(spec.r, P.gamma_sq, P.p[1:-1], P.q[1:-1], P.c[1:-1], top)
    return head + list(cells.values()) + [rep.free_energy, rep.residual, rep.collapsed_to_partial]


def _reference_cells(row, top):
    return {**_cells(row["r"], row["gamma_sq"], row["p"], row["q"], row["c"], top),
            "energy": row["energy"]}


def cmd_table(args):
    rows = reference.default_rows(args.model, args.alpha, args.level)
    if args.mode in ("partial", "full"):
        rows = [rm for rm in rows if rm[1] == args.mode or rm[0] == 1]
    elif args.mode == "modulo-m":
        raise ArgumentError("table rows are stationary solves; use solve for modulo-m")
    ref_rows = {(row["r"], row["mode"]): row for row in (reference.scenario(args.model, args.alpha) or [])}
    if args.reference and not ref_rows:
        raise ArgumentError(f"no reference table for model={args.model} alpha={args.alpha}")
    top = max(r for r, _ in rows)
    header = _table_header(top)
    numeric = ["gamma_sq", *header[6:-3], "energy"]
    if args.reference:
        header = header + [f"ref_{k}" for k in numeric] + [f"delta_{k}" for k in numeric]
    cfg, grid = _cfg(args), _grid(args)
    out, failed = [], False
    for r, mode in rows:
        spec = ModelSpec(SIGN[args.model], args.alpha, r, mode)
        try:
            rep, status = solve_stationary(spec, cfg, grid), "ok"
        except ConvergenceError as err:
            rep, status, failed = err.report, "failed", True
            print(f"row r={r} {mode}: {err}", file=sys.stderr)
        row = _table_row(spec, rep, status, top)
        if args.reference:
            ref = ref_rows.get((r, mode))
            got = dict(zip(_table_header(top), row))
            refc = _reference_cells(ref, top) if ref else {}
            row += [refc.get(k) for k in numeric]
            row += [None if refc.get(k) is None or got.get(k) is None else got[k] - refc[k] for k in numeric]
        out.append(dict(zip(header, row)))
    if args.format == "json":
        text = _json({"model": args.model, "alpha": float(args.alpha), "rows": out})
    else:
        text = _csv(header, [[_cell(k, row[k]) for k in header] for row in out])
    _emit(text, args.out)
    return EXIT_CONVERGENCE if failed else EXIT_OK


def cmd_oracle(args):
    cfg = OracleConfig(n=args.n, m=args.m, s=SIGN[args.model], trials=args.trials, seed=args.seed)
    est = estimate_ground_state(cfg)
    d = {"model": args.model, "n": est.n, "m": est.m, "trials": est.trials, "seed": est.seed,
         "mean": est.mean, "std_error": est.std_error, "metadata": est.metadata}
    if args.format == "csv":
        text = _csv(["model", "n", "m", "trials", "seed", "mean", "std_error"],
                    [[args.model, est.n, est.m, est.trials, est.seed, repr(est.mean), repr(est.std_error)]])
    else:
        text = _json(d)
    _emit(text, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- self-test

def _check_hermite(grid):
    x, w = hermite_rule(20)
    moments = [float(w @ x**k) for k in (0, 2, 4, 6)]
    err = max(abs(a - b) for a, b in zip(moments, (1, 1, 3, 15)))
    assert err < 1e-12, f"moment error {err:.2e}"
    return f"moments 1,1,3,15 to {err:.1e}"


def _check_spherical(grid):
    p, c = np.array([1.0, 0.6, 0.2, 0.0]), np.array([1.0, 1.5, 0.7, 0.0])
    a = spherical_term(p, c, 0.8, 1, 1.0)
    b = spherical_term_quadrature(p, c, 0.8, 1, 1.0)
    rel = abs(a - b) / abs(a)
    assert rel < 1e-6, f"relative gap {rel:.2e}"
    return f"closed form vs quadrature {rel:.1e}"


def _check_sign_identity(grid):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        p = np.r_[1.0, np.sort(rng.uniform(0, 1, 2))[::-1], 0.0]
        q = np.r_[1.0, np.sort(rng.uniform(0, 1, 2))[::-1], 0.0]
        c = np.r_[1.0, rng.uniform(0.1, 2.0, 2), 0.0]
        g = rng.uniform(0.1, 2.0)
        params = LiftParams(3, p, q, c, g)
        neg = psi_rd_bar(params, ModelSpec(-1, 1.3, 3), grid).psi_bar
        pos = psi_bar_value(p, q, c, -g, 1, 1.3, grid)
        worst = max(worst, abs(neg + pos))
    assert worst < 1e-12, f"max violation {worst:.2e}"
    return f"max violation {worst:.1e}"


def _check_binary(grid):
    q, c = np.array([1.0, 0.8, 0.3, 0.0]), np.array([1.0, 2.7, 0.5, 0.0])
    v = binary_term(q, c, grid)
    return f"r=3 binary term {v:.9f}"


def _check_r1(grid):
    for s, alpha, expect in ((1, 1.0, np.sqrt(2 / np.pi) + 1.0),
                             (1, 3.5, np.sqrt(2 / np.pi) + np.sqrt(3.5)),
                             (-1, 1.0, 1.0 - np.sqrt(2 / np.pi))):
        rep = solve_stationary(ModelSpec(s, alpha, 1), grid=grid)
        err = abs(rep.free_energy - expect)
        assert err < 1e-9, f"s={s} alpha={alpha}: error {err:.2e}"
    return "level-1 energies match sqrt(2/pi) +- sqrt(alpha)"


CHECKS = (
    ("hermite_moments", _check_hermite),
    ("spherical_closed_form", _check_spherical),
    ("sign_identity", _check_sign_identity),
    ("binary_quadrature", _check_binary),
    ("level1_analytic", _check_r1),
)


def cmd_check(args):
    grid = _grid(args)
    ok = True
    lines = []
    for name, fn in CHECKS:
        try:
            lines.append(f"PASS {name}: {fn(grid)}")
        except (AssertionError, QuadratureError, DomainError, ConvergenceError) as err:
            ok = False
            lines.append(f"FAIL {name}: {type(err).__name__}: {err}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------- parser

def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=SIGN, default="positive")
    common.add_argument("--alpha", type=_positive(float), default=1.0)
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="default: csv for table, json otherwise")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--grad-tol", type=_positive(float), default=1e-7)
    common.add_argument("--quad-target", type=_positive(float), default=1e-9)
    common.add_argument("--max-order", type=int, default=512, help="quadrature order cap")
    common.add_argument("--restarts", type=_positive(int), default=8)

    ap = argparse.ArgumentParser(prog="sflrdt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate the functional at a params file")
    p.add_argument("params", help="key=value parameter file")
    p.add_argument("--mode", choices=("partial", "full"), default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("solve", parents=[common], help="solve one (level, mode)")
    p.add_argument("--level", type=_positive(int), default=1)
    p.add_argument("--mode", choices=("partial", "full", "modulo-m"), default="full")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("table", parents=[common], help="solve a table of (level, mode) rows")
    p.add_argument("--level", type=_positive(int), default=None, help="largest level")
    p.add_argument("--mode", choices=("partial", "full", "modulo-m"), default=None,
                   help="restrict rows to one mode (default: both)")
    p.add_argument("--reference", action="store_true", help="append reference values and deltas")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("oracle", parents=[common], help="finite-size brute-force estimate")
    p.add_argument("--n", type=_positive(int), required=True)
    p.add_argument("--m", type=_positive(int), required=True)
    p.add_argument("--trials", type=_positive(int), default=200)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check", parents=[common], help="fast self-test")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command == "table" else "json"
    try:
        return args.func(args)
    except (ParseError, ArgumentError, CapError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ARGS
    except ConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DomainError as err:
        where = f" (Theta index k={err.index})" if err.index is not None else ""
        print(f"error: {err}{where}", file=sys.stderr)
        return EXIT_DOMAIN
    except QuadratureError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
