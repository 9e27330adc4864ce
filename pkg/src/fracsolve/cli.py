"""Command-line front end.

Exit codes: 0 success, 1 solver error, 2 configuration or constraint
rejection, 3 experiment verdict FAIL. Every output file is written to a
temporary file in the target directory and then renamed into place.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, ConstraintViolation, DomainError, FracSolveError, InsufficientData
from .ffvp import compute_constants, solve_ffvp, upper_bound_certificate, weighted_norm
from .fivp import solve_fivp
from .kernels import OrdersDomain
from .mlf import ml
from .regularize import (
    PerturbationPlan,
    RateParams,
    ffvp_order_stability,
    fivp_order_stability,
    illposed_csv,
    illposed_demo,
    regularization_experiment,
)
from .spectrum import fmt17

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2, 3


def write_atomic(path, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require(cfg: RunConfig, what: str, value):
    if value is None:
        raise ConstraintViolation([f"missing_{what}"])
    return value


def _final_state(cfg: RunConfig) -> np.ndarray:
    if cfg.phi_from_forward:
        forward = solve_fivp(cfg.orders, cfg.op, cfg.zeta, cfg.source, cfg.grid, cfg.policy, cfg.space.s)
        return forward.coeffs[-1]
    return _require(cfg, "final", cfg.phi)


def _domain(cfg: RunConfig) -> OrdersDomain:
    return _require(cfg, "domain", cfg.domain)


def cmd_ml(args) -> int:
    rows = ["z,value"]
    for z in args.z:
        rows.append(f"{z:.15g},{ml(args.p, args.r, z):.15g}")
    text = "\n".join(rows) + "\n"
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_solve_fivp(cfg: RunConfig, args) -> int:
    zeta = _require(cfg, "initial", cfg.zeta)
    traj = solve_fivp(cfg.orders, cfg.op, zeta, cfg.source, cfg.grid, cfg.policy, cfg.space.s)
    write_atomic(args.out, traj.to_csv(cfg.output_mode, cfg.output_s))
    return EXIT_OK


def cmd_solve_ffvp(cfg: RunConfig, args) -> int:
    phi = _final_state(cfg)
    constants = compute_constants(cfg.orders, cfg.op, cfg.space, cfg.grid.T, cfg.source, cfg.grid)
    traj = solve_ffvp(cfg.orders, cfg.op, phi, cfg.source, cfg.grid, cfg.space, cfg.policy, force=args.force, constants=constants)
    report = constants.report()
    try:
        cert = upper_bound_certificate(constants, phi, cfg.op, cfg.grid.T)
        report += f"certificate = {fmt17(cert)}\n"
    except FracSolveError as exc:
        report += f"certificate = unavailable ({exc})\n"
    report += f"weighted_norm = {fmt17(weighted_norm(traj, cfg.space.s, cfg.space.rho))}\n"
    report += f"certified = {str(traj.certified).lower()}\n"
    write_atomic(args.out, traj.to_csv(cfg.output_mode, cfg.output_s))
    write_atomic(str(args.out) + ".constants.txt", report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_illposed(cfg: RunConfig, args) -> int:
    rows = illposed_demo(cfg.orders, cfg.op, cfg.grid.T, cfg.experiment.modes)
    write_atomic(args.out, illposed_csv(rows))
    return EXIT_OK


def _emit_report(report, out, extra: str = "") -> int:
    write_atomic(out, report.to_csv())
    sys.stdout.write(extra + report.verdict() + "\n")
    for failure in report.failures:
        sys.stderr.write(f"point failed: {failure}\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_regularize(cfg: RunConfig, args) -> int:
    ex = cfg.experiment
    zeta = _require(cfg, "initial", cfg.zeta)
    report, rate, details = regularization_experiment(
        cfg.orders, _domain(cfg), cfg.op, zeta, cfg.source, cfg.space,
        r=ex.r, sigma=ex.sigma, eps=ex.eps, alpha_share=ex.alpha_share, seed=cfg.seed,
        T=cfg.grid.T, M=cfg.grid.M, holder_window=ex.holder_window, policy=cfg.policy, threads=args.threads,
    )
    lines = ["eps,t_eps,clamped"]
    lines += [f"{fmt17(d['eps'])},{fmt17(d['t_eps'])},{int(d['clamped'])}" for d in details if d]
    write_atomic(str(args.out) + ".t_eps.csv", "\n".join(lines) + "\n")
    return _emit_report(report, args.out, f"RHO_FIT={rate.rho:.6f} ")


def cmd_order_stability(cfg: RunConfig, args) -> int:
    ex = cfg.experiment
    if len(ex.eps) < 4:
        raise InsufficientData("need >= 4 points for slope fit")
    domain = _domain(cfg)
    plan = PerturbationPlan(cfg.orders, domain, ex.eps, ex.alpha_share, "none", cfg.seed)
    rate = RateParams(ex.r1, ex.r2, ex.r, domain.alpha_hi, domain.beta_hi, cfg.space.s, cfg.space.rho)
    if args.problem == "fivp":
        zeta = _require(cfg, "initial", cfg.zeta)
        report = fivp_order_stability(plan, cfg.op, zeta, cfg.source, rate, cfg.grid.T, cfg.grid.M, cfg.policy, args.threads)
    else:
        phi = _final_state(cfg)
        report = ffvp_order_stability(plan, cfg.op, phi, cfg.source, rate, cfg.space, cfg.grid.T, cfg.grid.M, cfg.policy, args.threads)
    return _emit_report(report, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracsolve", description="Fractional evolution equations with Mittag-Leffler kernels.")
    sub = parser.add_subparsers(dest="command", required=True)

    ml_p = sub.add_parser("ml", help="Mittag-Leffler evaluation")
    ml_sub = ml_p.add_subparsers(dest="ml_command", required=True)
    ev = ml_sub.add_parser("eval", help="evaluate E_{p,r}(z) at real points")
    ev.add_argument("--p", type=float, required=True)
    ev.add_argument("--r", type=float, default=1.0)
    ev.add_argument("--z", type=float, nargs="+", required=True)
    ev.add_argument("--out")

    def common(p, threads=False):
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        if threads:
            p.add_argument("--threads", type=int, default=1)

    common(sub.add_parser("solve-fivp", help="forward solve"))
    ff = sub.add_parser("solve-ffvp", help="backward solve from final data")
    common(ff)
    ff.add_argument("--force", action="store_true", help="solve even without a contraction guarantee")
    common(sub.add_parser("regularize", help="t_eps recovery of u(0) against a synthetic truth"), threads=True)
    common(sub.add_parser("illposed-demo", help="instability table at t = 0"))
    exp = sub.add_parser("experiment", help="rate experiments")
    exp_sub = exp.add_subparsers(dest="experiment", required=True)
    os_p = exp_sub.add_parser("order-stability")
    common(os_p, threads=True)
    os_p.add_argument("--problem", choices=("fivp", "ffvp"), required=True)
    return parser


HANDLERS = {
    "solve-fivp": cmd_solve_fivp,
    "solve-ffvp": cmd_solve_ffvp,
    "regularize": cmd_regularize,
    "illposed-demo": cmd_illposed,
    "experiment": cmd_order_stability,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "ml":
            return cmd_ml(args)
        if getattr(args, "threads", 1) < 1:
            raise ConstraintViolation(["threads_below_one"])
        cfg = load_config(args.config)
        return HANDLERS[args.command](cfg, args)
    except (ConfigError, ConstraintViolation, InsufficientData, DomainError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except FracSolveError as exc:
        sys.stderr.write(f"solver error: {type(exc).__name__}: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
