"""Command line interface.

Usage::

    fracsteer simulate --scenario section5_linear --out runs/sim
    fracsteer steer    --scenario section5_neutral --tol 1e-9 --out runs/steer
    fracsteer certify  --scenario section5_neutral
    fracsteer optimize --scenario section5_linear --method nullspace --out runs/opt
    fracsteer mleval   --alpha 0.5 --beta 1 --z -1 -2 -5

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence (the
report is still written), 64 unknown flags. Set ``FRACSTEER_LOG`` to
``error``, ``info`` or ``debug`` for log output on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evolution import ControlSignal, _write_table, mild_solve, residual_ratio
from .exceptions import (
    AccuracyError,
    ConvergenceError,
    FracSteerError,
    PicardConvergenceError,
    ValidationError,
)
from .mittag_leffler import ml_eval
from .optimal_control import CostWeights, solve_min_energy
from .scenarios import build_problem, load_scenario
from .steering import (
    assemble_steering_matrix,
    certificate_constants,
    certificate_terms,
    contraction_certificate,
    existence_condition,
    picard_iterate,
)

log = logging.getLogger("fracsteer")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_USAGE = 0, 2, 3, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunReport:
    """Machine-readable record of one CLI run.

    Non-finite numbers serialize as ``null``; the reason is recorded under
    ``null_reasons`` with the dotted path of the field.
    """

    subcommand: str
    scenario: str | None = None
    status: str = "ok"
    message: str = ""
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self):
        reasons = {}

        def clean(obj, path):
            if isinstance(obj, dict):
                return {k: clean(v, f"{path}.{k}" if path else k) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [clean(v, f"{path}[{i}]") for i, v in enumerate(obj)]
            if isinstance(obj, (np.floating, float)):
                v = float(obj)
                if not math.isfinite(v):
                    reasons[path] = "infinite" if math.isinf(v) else "not a number"
                    return None
                return v
            if isinstance(obj, np.integer):
                return int(obj)
            if isinstance(obj, np.bool_):
                return bool(obj)
            return obj

        doc = {
            "scenario": self.scenario,
            "subcommand": self.subcommand,
            "status": self.status,
            "message": self.message,
            "wall_time": self.wall_time,
            "version": self.version,
            "outputs": clean(self.outputs, ""),
        }
        doc["null_reasons"] = reasons
        return doc

    def write(self, out_dir):
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_GNUPLOT = """\
# gnuplot script generated by fracsteer {version}
set datafile separator ","
set key autotitle columnhead outside
set xlabel "t"
set terminal pngcairo size 1000,700
set output "{stem}.png"
set multiplot layout {rows},1
set ylabel "mode coefficient"
plot for [k=2:{ncol_x}] "trajectory.csv" using 1:k with lines
{control_plot}unset multiplot
"""


def _write_outputs(out_dir, traj=None, u=None, meta=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    if traj is not None:
        traj.to_csv(out_dir / "trajectory.csv")
        traj.to_json(out_dir / "trajectory.json", **(meta or {}))
    control_plot = ""
    if u is not None:
        _write_table(out_dir / "control.csv", u.grid.nodes[:-1], u.values, "u")
        control_plot = ('set ylabel "control"\n'
                        f'plot for [k=2:{u.N + 1}] "control.csv" using 1:k with steps\n')
    if traj is not None:
        script = _GNUPLOT.format(version=__version__, stem="plot", rows=2 if u is not None else 1,
                                 ncol_x=traj.P + 1, control_plot=control_plot)
        (out_dir / "plot.gp").write_text(script)


def _load(args):
    cfg = load_scenario(args.scenario)
    return cfg, build_problem(cfg)


def _read_control(path, prob):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (prob.grid.M, prob.N + 1):
        raise ValidationError(
            f"control file {path} has shape {data.shape}, need {(prob.grid.M, prob.N + 1)}"
        )
    return ControlSignal(data[:, 1:], prob.grid)


def _certify(prob, cfg, Hmat):
    c = certificate_constants(prob, Hmat, M_T=cfg.constant_overrides.get("M_T"))
    q, ok = contraction_certificate(c)
    terms = certificate_terms(c)
    terms["q"] = q
    return c, q, ok, terms


def cmd_simulate(args, report):
    cfg, prob = _load(args)
    report.scenario = cfg.id
    u = _read_control(args.control, prob) if args.control else None
    traj = mild_solve(prob, u)
    report.outputs.update(
        final_state=traj.states[-1].tolist(),
        endpoint_error=float(np.linalg.norm(traj.states[-1] - prob.xd.coeffs)),
    )
    _write_outputs(args.out, traj, u, {"scenario": cfg.id})
    return EXIT_OK


def cmd_steer(args, report):
    cfg, prob = _load(args)
    report.scenario = cfg.id
    Hmat = assemble_steering_matrix(prob)
    _, q, ok, _ = _certify(prob, cfg, Hmat)
    report.outputs.update(q=q, certified=ok, M_2=Hmat.M_2)
    try:
        res = picard_iterate(prob, args.tol, args.max_iter, args.ridge, args.init, Hmat)
    except PicardConvergenceError as exc:
        report.outputs.update(ratios=exc.ratios, deltas=exc.deltas, iterations=len(exc.deltas) - 1)
        raise
    report.outputs.update(
        iterations=res.iterations,
        ratios=res.ratios,
        deltas=res.deltas,
        endpoint_error=res.endpoint_error,
        relative_endpoint_error=res.relative_endpoint_error,
    )
    if args.residual_check:
        fine = prob.with_grid(prob.grid.refined())
        rf = picard_iterate(fine, args.tol, args.max_iter, args.ridge, args.init)
        report.outputs["residual_ratio"] = residual_ratio(
            (prob, res.trajectory, res.control), (fine, rf.trajectory, rf.control)
        )
    _write_outputs(args.out, res.trajectory, res.control, {"scenario": cfg.id})
    return EXIT_OK


def cmd_certify(args, report):
    cfg, prob = _load(args)
    report.scenario = cfg.id
    Hmat = assemble_steering_matrix(prob)
    c, q, ok, terms = _certify(prob, cfg, Hmat)
    constants = {k: getattr(c, k) for k in ("M_T", "M_1", "M_2", "L", "H", "A_negpow", "nu", "varsigma", "T")}
    report.outputs.update(q=q, certified=ok, existence=existence_condition(c),
                          constants=constants, terms=terms)
    print(f"scenario {cfg.id}")
    for k, v in constants.items():
        print(f"  {k:<9} = {v:.10g}")
    print("  terms:")
    for k in ("A_negpow", "smoothing", "neutral", "control_gain", "control", "bracket", "H"):
        print(f"    {k:<13} = {terms[k]:.10g}")
    print(f"q = {q:.10g}  certified = {str(ok).lower()}")
    return EXIT_OK


def cmd_optimize(args, report):
    cfg, prob = _load(args)
    report.scenario = cfg.id
    w = CostWeights(args.w_state, args.w_energy)
    u, J, rep = solve_min_energy(prob, w, method=args.method)
    report.outputs.update(J=J, **rep)
    _write_outputs(args.out, mild_solve(prob, u), u, {"scenario": cfg.id})
    return EXIT_OK


def cmd_mleval(args, report):
    rows = []
    for z in args.z:
        r = ml_eval(args.alpha, args.beta, z, tol=args.tol)
        rows.append({"z": z, "value": r.value, "error_bound": r.error_bound, "method": r.method})
        print(f"E_{{{args.alpha:g},{args.beta:g}}}({z:.17g}) = {r.value:.17g}"
              f"  (bound {r.error_bound:.2e}, {r.method})")
    report.outputs.update(alpha=args.alpha, beta=args.beta, values=rows)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="fracsteer", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None, help="limit BLAS threads")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def scenario_cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--scenario", required=True,
                        help="scenario file or the name of a shipped scenario")
        sp.add_argument("--out", type=Path, default=Path("fracsteer-out") / name,
                        help="output directory (default: %(default)s)")
        return sp

    sp = scenario_cmd("simulate", "integrate the mild solution")
    sp.add_argument("--control", help="control CSV (t,u_1..u_N); zero control if omitted")
    sp.set_defaults(func=cmd_simulate)

    sp = scenario_cmd("steer", "exact steering by fixed-point iteration")
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--max-iter", type=int, default=200)
    sp.add_argument("--ridge", type=float, default=0.0)
    sp.add_argument("--init", choices=("free", "zero"), default="free")
    sp.add_argument("--no-residual-check", dest="residual_check", action="store_false",
                    help="skip the grid-doubling check of the Caputo residual")
    sp.set_defaults(func=cmd_steer)

    sp = scenario_cmd("certify", "evaluate the contraction certificate")
    sp.set_defaults(func=cmd_certify)

    sp = scenario_cmd("optimize", "minimum-energy steering control")
    sp.add_argument("--w-state", type=float, default=0.0)
    sp.add_argument("--w-energy", type=float, default=1.0)
    sp.add_argument("--method", choices=("nullspace", "penalty"), default="nullspace")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("mleval", help="evaluate the Mittag-Leffler function")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--z", type=float, nargs="+", required=True)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--out", type=Path, default=None, help="write report.json here")
    sp.set_defaults(func=cmd_mleval)
    return p


def _configure_logging():
    level = os.environ.get("FRACSTEER_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG", "WARNING"):
        level = "ERROR"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def run(argv=None):
    """Run the CLI and return the exit code."""
    _configure_logging()
    args = build_parser().parse_args(argv)
    report = RunReport(args.command, getattr(args, "scenario", None))
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ValidationError(f"--threads must be positive, got {args.threads}")
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                code = args.func(args, report)
        else:
            code = args.func(args, report)
    except (ConvergenceError, AccuracyError) as exc:
        code, report.status, report.message = EXIT_NONCONVERGED, "nonconverged", str(exc)
    except (ValidationError, FracSteerError, OSError) as exc:
        code, report.status, report.message = EXIT_INVALID, "invalid", str(exc)
    report.wall_time = time.perf_counter() - t0
    if report.message:
        print(f"fracsteer {args.command}: {report.message}", file=sys.stderr)
    if args.out is not None:
        report.write(args.out)
    return code


def main(argv=None):
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
