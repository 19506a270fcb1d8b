"""
Command-line interface: ``heis-tsp <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 verification violations found,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import EXPERIMENTS, ParamSet, UnknownExperimentError, beta_sum, run_experiment
from .curves import GENERATORS, Curve, gen_oscillating

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_IO = 0, 1, 2, 3

PARAM_FLAGS = ("eta", "epsilon", "eps0", "A", "J", "kappa", "delta", "depth", "samples", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run parameters")
    g.add_argument("--config", help="key=value file; flags given on the command line win")
    g.add_argument("--eta", type=float)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--eps0", type=float)
    g.add_argument("--A", type=float, dest="A")
    g.add_argument("--J", type=int, dest="J")
    g.add_argument("--kappa", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--depth", type=int, help="net depth: levels 0..depth")
    g.add_argument("--samples", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--stages", type=int, help="stages of the oscillating generator")
    g.add_argument("--q", type=float, help="oscillating exponent (theta_k = c / k^q)")
    g.add_argument("--c", type=float, help="oscillating amplitude")
    g.add_argument("--out", help="output file (directory for verify/run)")
    g.add_argument("--format", choices=("csv", "json"))


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="heis-tsp", description="Multiscale beta numbers of Heisenberg curves and checks "
                                              "of the inequalities behind them.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="write a generated curve to a file")
    p.add_argument("--generator", choices=sorted(GENERATORS), default="oscillating")
    p.add_argument("--subdivide", type=int, default=1)
    _common(p)

    p = sub.add_parser("beta", help="beta number of a single ball")
    p.add_argument("curve", nargs="?", help="curve file (default: generated oscillating curve)")
    p.add_argument("--center", help="x,y,z (default: the first curve vertex)")
    p.add_argument("--radius", type=float, required=True)
    _common(p)

    p = sub.add_parser("sum", help="sums of beta^p diam over the multiresolution")
    p.add_argument("curve", nargs="?", help="curve file (default: generated oscillating curve)")
    _common(p)

    p = sub.add_parser("verify", help="run a verifier: prop4, lemmas or martingale")
    p.add_argument("which", choices=("prop4", "lemmas", "martingale"))
    p.add_argument("--M", type=int, dest="M")
    _common(p)

    p = sub.add_parser("filtration", help="build a filtration from a curve and audit it")
    p.add_argument("curve", nargs="?", help="curve file (default: generated oscillating curve)")
    _common(p)

    p = sub.add_parser("report", help="merge CSV files with a common header")
    p.add_argument("inputs", nargs="+")
    _common(p)

    p = sub.add_parser("run", help="run an experiment preset into a directory")
    p.add_argument("name", help=", ".join(sorted(EXPERIMENTS)))
    p.add_argument("--M", type=int, dest="M")
    _common(p)
    return ap


# helpers ---------------------------------------------------------------------


def _settings(args) -> dict:
    """Config-file values overlaid with explicit flags."""
    merged = {}
    if getattr(args, "config", None):
        merged.update(io.read_config(args.config))
    for k in PARAM_FLAGS + ("stages", "q", "c", "format", "M"):
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


def _params(s: dict) -> ParamSet:
    return ParamSet.from_mapping(s)


def _curve(args, s: dict) -> Curve:
    if getattr(args, "curve", None):
        return io.read_curve(args.curve)
    return gen_oscillating(float(s.get("q", 0.6)), float(s.get("c", 0.5)), int(s.get("stages", 4)))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# commands --------------------------------------------------------------------


def cmd_gen(args, s):
    if not args.out:
        raise UsageError("gen: --out is required")
    name = args.generator
    if name == "oscillating":
        curve = gen_oscillating(float(s.get("q", 0.6)), float(s.get("c", 0.5)), int(s.get("stages", 4)),
                                subdivide=args.subdivide)
    elif name == "walk":
        curve = GENERATORS[name](seed=int(s.get("seed", 0)))
    elif name == "tent":
        curve = GENERATORS[name](float(s.get("c", 0.5)), subdivide=args.subdivide)
    else:
        curve = GENERATORS[name]()
    io.write_curve(args.out, curve)
    return EXIT_OK


def cmd_beta(args, s):
    from .verify.beta import beta_ball_fit

    params = _params(s)
    curve = _curve(args, s)
    center = (np.array([float(v) for v in args.center.split(",")]) if args.center else curve.points[0])
    if center.shape != (3,):
        raise UsageError("beta: --center needs three comma-separated numbers")
    K = curve.path if params.k_step is None else curve.resampled(params.k_step).path
    fit = beta_ball_fit(params.ctx, K, center, args.radius)
    rec = {"center": center.tolist(), "radius": args.radius, "beta": fit.beta, "points": fit.n_points,
           "line": {"theta": fit.theta, "s": fit.s, "z0": fit.z0}}
    if s.get("format", "json") == "csv":
        _emit(io.csv_text(["beta", "points", "radius"], [[fit.beta, fit.n_points, args.radius]]), args.out)
    else:
        _emit(io.dumps_json(rec), args.out)
    return EXIT_OK


def cmd_sum(args, s):
    params = _params(s)
    rep = beta_sum(params.ctx, _curve(args, s), params)
    if s.get("format", "csv") == "json":
        _emit(io.dumps_json(rep.to_dict()), args.out)
    else:
        header, rows = rep.csv_rows()
        _emit(io.csv_text(header, rows), args.out)
    return EXIT_OK


def _run(name: str, args, s, **options):
    params = _params(s)
    if args.out:
        res = run_experiment(name, params, args.out, **options)
        summary, violations = res["summary"], res["violations"]
    else:
        from ._kernels import apply_thread_cap

        apply_thread_cap()
        _, _, summary, violations = EXPERIMENTS[name](params, **options)
    fmt = s.get("format", "json")
    if fmt == "json" or args.out:
        line = {"experiment": name, "violations": violations}
        if not args.out:
            line["summary"] = summary
        sys.stdout.write(io.dumps_json(line))
    else:
        sys.stdout.write(io.csv_text(["experiment", "violations"], [[name, violations]]))
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_verify(args, s):
    opts = {}
    if args.which == "martingale" and "M" not in s:
        opts["Ms"] = [1, 3, 5]
    return _run(args.which, args, s, **opts)


def cmd_run(args, s):
    if args.name not in EXPERIMENTS:
        raise UsageError(f"run: unknown experiment {args.name!r}; choose from {sorted(EXPERIMENTS)}")
    return _run(args.name, args, s)


def cmd_filtration(args, s):
    from .analysis import curve_filtration, filtration_checks

    params = _params(s)
    ctx = params.ctx
    curve, _ = _curve(args, s).normalized(ctx)
    _, pre, filt = curve_filtration(ctx, curve, params)
    checks = filtration_checks(ctx, pre, filt)
    body = {"J": filt.J, "delta": filt.delta, "L": filt.L, "m": filt.m, "checks": checks, "arcs": filt.to_json()}
    _emit(io.dumps_json(body), args.out)
    return EXIT_OK if checks["ok"] else EXIT_VIOLATION


def cmd_report(args, s):
    header = None
    rows = []
    for path in args.inputs:
        h, body = io.read_csv(path)
        if header is None:
            header = h
        elif h != header:
            raise UsageError(f"report: {path} has header {h}, expected {header}")
        rows.extend([Path(path).stem] + r for r in body)
    _emit(io.csv_text(["source"] + header, rows), args.out)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "beta": cmd_beta, "sum": cmd_sum, "verify": cmd_verify,
            "filtration": cmd_filtration, "report": cmd_report, "run": cmd_run}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("heis-tsp: a command is required (" + ", ".join(COMMANDS) + ")")
        s = _settings(args)
        return COMMANDS[args.command](args, s)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (io.CurveFileError, OSError) as e:
        print(f"heis-tsp: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, UnknownExperimentError) as e:
        print(f"heis-tsp: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
