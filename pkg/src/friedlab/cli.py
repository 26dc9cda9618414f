"""Command-line entry point: ``friedlab <command> [flags]``.

Commands: ``mesh``, ``solve``, ``sweep``, ``dtn``, ``verify``, ``study``.
Exit status is 0 on success (or a passing verdict), 2 when a verdict fails
and 1 on any error, including usage errors.

A flat ``key = value`` file passed with ``--config`` supplies defaults;
flags given on the command line win. Output paths are relative to
``--out-dir``, or to ``$FRIEDLAB_OUTPUT_DIR`` when that is set.
"""
import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import friedlander_lab as lab
from . import mesh as meshlib
from . import stokes_problems as sp_
from .eigsolve import EIG_RTOL, NULL_RTOL
from .errors import FriedlabError, ParseError
from .serialize import dumps
from .spectral_framework import RESONANCE_RTOL, robin_sweep

OUT_DIR_ENV = "FRIEDLAB_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _floats(text):
    """Comma list of floats, or ``log:a:b:n`` for ``-logspace(a, b, n)``."""
    text = str(text).strip()
    if text.startswith("log:"):
        try:
            _, a, b, n = text.split(":")
            return list(-np.logspace(float(a), float(b), int(n)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad log grid {text!r}; use log:a:b:n") from None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _add_problem(p, bc=True):
    g = p.add_argument_group("problem")
    g.add_argument("--mesh", help="mesh JSON file (overrides --domain/--h)")
    g.add_argument("--domain", choices=meshlib.DOMAINS, default="square")
    g.add_argument("--h", type=float, default=0.125)
    g.add_argument("--sides", type=int, default=16)
    g.add_argument("--kind", choices=lab.KINDS, default="laplacian")
    g.add_argument("--alpha", type=float, default=0.0)
    if bc:
        g.add_argument("--bc", choices=sp_.BC, default="neumann")


def _add_common(p):
    p.add_argument("--config", help="flat key=value file of defaults")
    p.add_argument("--out", help="JSON output file (default: stdout)")
    p.add_argument("--out-dir", help=f"directory for outputs (default ${OUT_DIR_ENV} or cwd)")
    p.add_argument("--resonance-tol", type=float, default=RESONANCE_RTOL)


def build_parser():
    parser = _Parser(prog="friedlab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"friedlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh", help="generate (and optionally refine) a mesh")
    p.add_argument("--domain", choices=meshlib.DOMAINS, default="square")
    p.add_argument("--h", type=float, default=0.125)
    p.add_argument("--sides", type=int, default=16)
    p.add_argument("--refine", type=int, default=0)
    _add_common(p)

    p = sub.add_parser("solve", help="Neumann or Dirichlet spectrum")
    _add_problem(p)
    p.add_argument("--m", type=int, default=10, help="number of eigenvalues")
    p.add_argument("--method", choices=("auto", "dense", "sparse"), default="auto")
    _add_common(p)

    p = sub.add_parser("sweep", help="Robin spectra along a mu grid")
    _add_problem(p, bc=False)
    p.add_argument("--mu-grid", type=_floats, default=_floats("0,-1,-10,-100,-1000"))
    p.add_argument("--m", type=int, default=6)
    p.add_argument("--jobs", type=int, default=1, help="parallel grid points (1 = serial)")
    _add_common(p)

    p = sub.add_parser("dtn", help="DtN spectra at given shifts")
    _add_problem(p, bc=False)
    p.add_argument("--lambdas", type=_floats, default=_floats("0,10,30,60"))
    _add_common(p)

    p = sub.add_parser("verify", help="interlacing check with Richardson margins")
    _add_problem(p, bc=False)
    p.add_argument("--n-max", type=int, default=8)
    p.add_argument("--margin-factor", type=float, default=5.0)
    p.add_argument("--order", type=float, default=1.0, help="assumed convergence order")
    p.add_argument("--method", choices=("auto", "dense", "sparse"), default="auto")
    p.add_argument("--csv", help="CSV table output file")
    p.add_argument("--timings", action="store_true", help="include runtimes (breaks byte identity)")
    _add_common(p)

    p = sub.add_parser("study", help="observed convergence order of one eigenvalue")
    _add_problem(p)
    p.add_argument("--h-list", type=_floats, default=_floats("0.25,0.125,0.0625"))
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--exact", type=float, default=None)
    _add_common(p)
    return parser


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}, line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser, argv, args):
    sub = parser._subparsers._group_actions[0].choices[args.command]
    cfg = read_config(args.config)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key not in actions or key in ("config", "help"):
            raise ParseError(f"{args.config}: unknown key {key!r} for command {args.command!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            conv = act.type or str
            try:
                defaults[key] = conv(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ParseError(f"{args.config}: bad value for {key!r}: {exc}") from None
            if act.choices is not None and defaults[key] not in act.choices:
                raise ParseError(f"{args.config}: {key!r} must be one of {list(act.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _out_path(args, name):
    if name is None:
        return None
    base = args.out_dir or os.environ.get(OUT_DIR_ENV)
    return os.path.join(base, name) if base and not os.path.isabs(name) else name


def _emit(args, text, name=None):
    path = _out_path(args, name if name is not None else args.out)
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _config_echo(args):
    skip = {"out", "out_dir", "csv", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _metadata(args, mesh):
    return {"version": __version__, "command": args.command, "config": _config_echo(args),
            "mesh_sha256": meshlib.fingerprint(mesh) if mesh is not None else None,
            "tolerances": {"eigen_residual": EIG_RTOL, "nullspace_rtol": NULL_RTOL,
                           "resonance_rtol": args.resonance_tol}}


def _mesh(args):
    if getattr(args, "mesh", None):
        m = meshlib.load(args.mesh)
        problems = meshlib.validate(m)
        if problems:
            raise ParseError(f"{args.mesh}: invalid mesh: {problems[0]}")
        return m, m.hmax
    return meshlib.generate(args.domain, args.h, args.sides), args.h


def _problem(args):
    m, h = _mesh(args)
    return m, h, lab.build_problem(m, args.kind, args.alpha)


def cmd_mesh(args):
    m = meshlib.generate(args.domain, args.h, args.sides)
    for _ in range(args.refine):
        m = meshlib.refine(m)
    _emit(args, meshlib.dumps(m))
    return 0


def cmd_solve(args):
    m, h, prob = _problem(args)
    spec = sp_.solve_spectrum(prob, args.bc, args.m, args.method)
    doc = {"kind": args.kind, "bc": args.bc, "alpha": args.alpha, "mesh_h": h, "ndof": prob.ndof,
           "eigenvalues": spec.eigenvalues, "residuals": spec.residuals,
           "metadata": _metadata(args, m)}
    _emit(args, dumps(doc))
    return 0


def cmd_sweep(args):
    m, h, prob = _problem(args)
    grid = args.mu_grid
    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as ex:
            sw = robin_sweep(prob.fs, grid, args.m, map_fn=ex.map)
    else:
        sw = robin_sweep(prob.fs, grid, args.m)
    ok = not sw.monotone_violations and not sw.strict_violations
    doc = {"kind": args.kind, "alpha": args.alpha, "mesh_h": h, "ndof": prob.ndof,
           "grid": sw.grid, "eigenvalues": [s.eigenvalues for s in sw.spectra],
           "dirichlet": sw.limit_reference.eigenvalues if sw.limit_reference else [],
           "limit_gaps": sw.limit_gaps,
           "monotone_violations": [list(v) for v in sw.monotone_violations],
           "strict_violations": [list(v) for v in sw.strict_violations],
           "verdict": ok, "metadata": _metadata(args, m)}
    _emit(args, dumps(doc))
    return 0 if ok else 2


def cmd_dtn(args):
    m, h, prob = _problem(args)
    rep = lab.dtn_negativity(prob, args.lambdas)
    doc = {"kind": args.kind, "alpha": args.alpha, "mesh_h": h, "ndof": prob.ndof,
           "entries": rep.entries, "verdict": rep.ok, "metadata": _metadata(args, m)}
    _emit(args, dumps(doc))
    return 0 if rep.ok else 2


def cmd_verify(args):
    if args.mesh:
        raise ParseError("verify generates its own mesh pair; use --domain and --h")
    rep = lab.run_friedlander(args.domain, args.kind, args.alpha, args.h, args.n_max, args.sides,
                              args.margin_factor, args.order, args.method)
    d = rep.to_dict()
    if not args.timings:
        d.pop("runtime")
    d["metadata"] = _metadata(args, meshlib.generate(args.domain, args.h, args.sides))
    _emit(args, dumps(d))
    if args.csv:
        _emit(args, lab.report_csv(rep), args.csv)
    return 0 if rep.verdict else 2


def cmd_study(args):
    rep = lab.convergence_study(args.domain, args.kind, args.alpha, args.h_list, args.n, args.bc,
                                args.exact, args.sides)
    doc = {"kind": args.kind, "bc": args.bc, "alpha": args.alpha, "n": args.n, "h": rep.h,
           "eigenvalues": rep.values, "errors": rep.errors, "orders": rep.orders,
           "reference": rep.reference, "metadata": _metadata(args, None)}
    _emit(args, dumps(doc))
    return 0


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "sweep": cmd_sweep, "dtn": cmd_dtn,
            "verify": cmd_verify, "study": cmd_study}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            args = _apply_config(parser, argv, args)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (FriedlabError, OSError, ValueError) as exc:
        sys.stderr.write(f"friedlab {argv[0] if argv else ''}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
