"""``stochnse`` command line: one subcommand per reproducible study.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed check in a verify mode.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import io
from .basis import TorusSpec, build_basis
from .config import parse_config
from .errors import BlowUp, ConfigError, DegenerateDenominator, IoError, StochNSEError
from .estimators import KINDS, EstimatorConfig, estimate
from .experiments import (linear_moment_rows, run_consistency, run_linear_battery, run_normality,
                          run_residual_study)
from .solver import simulate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("stochnse")


def _out_path(out: str | None, default: str) -> Path:
    return Path(out) if out else Path(default)


def _write_manifest(out_dir: Path, cfg, command: str, outputs, started, extra=None):
    m = io.manifest(cfg.digest(), cfg.solver.noise.master_seed, command, [str(p) for p in outputs],
                    cfg.resolved, started, extra)
    io.write_json(out_dir / "manifest.json", m)


def cmd_basis_dump(args) -> int:
    started = datetime.now(timezone.utc)
    if args.config:
        cfg = parse_config(args.config, args.seed)
        basis = cfg.solver.basis()
        if args.modes:
            basis = basis.truncate(min(args.modes, len(basis)))
        digest = cfg.digest()
    else:
        basis = build_basis(TorusSpec(args.L), args.modes or 64)
        digest = basis.digest()
        cfg = None
    out = _out_path(args.out, "basis.csv")
    io.write_basis(basis, out, digest)
    if cfg is not None:
        _write_manifest(out.parent, cfg, "basis-dump", [out], started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = datetime.now(timezone.utc)
    cfg = parse_config(args.config, args.seed)
    traj = simulate(cfg.solver, args.replicate)
    out = _out_path(args.out, "trajectory.npz")
    io.write_trajectory(traj, out, cfg.digest())
    _write_manifest(out.parent, cfg, "simulate", [out], started, {"replicate": args.replicate})
    return EXIT_OK


def cmd_estimate(args) -> int:
    traj = io.read_trajectory(args.traj)
    kinds = KINDS if args.kind == "all" else (args.kind,)
    ecfg = EstimatorConfig(args.alpha, args.n, args.stride)
    if args.n > traj.mode_count // 2:
        raise ConfigError("n", f"N={args.n} exceeds M_sim/2 = {traj.mode_count // 2}")
    results = [estimate(traj, ecfg, k).to_dict() for k in kinds]
    payload = {"trajectory": str(args.traj), "config_hash": traj.config.get("config_hash", ""),
               "regime": ecfg.regime(traj.gamma), "results": results}
    if args.out:
        io.write_json(args.out, payload)
    else:
        json.dump(io._jsonable(payload), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    return EXIT_OK


def _mc(args, runner, study: str) -> int:
    started = datetime.now(timezone.utc)
    cfg = parse_config(args.plan, args.seed)
    if not cfg.estimators:
        raise ConfigError("estimators", "plan lists no estimators")
    plan = cfg.plan(workers=args.threads, keep_trajectories=args.keep_trajectories)
    report = runner(plan)
    out_dir = _out_path(args.out, study)
    digest = cfg.digest()
    outputs = [out_dir / "report.json", out_dir / "values.csv"]
    io.write_report(report, outputs[0], "json", digest)
    io.write_report(report, outputs[1], "csv", digest)
    if args.keep_trajectories:
        for r, traj in zip(report.replicates, report.trajectories or []):
            if traj is not None:
                p = out_dir / "trajectories" / f"replicate_{r:05d}.npz"
                io.write_trajectory(traj, p, digest)
                outputs.append(p)
    _write_manifest(out_dir, cfg, study, outputs, started,
                    {"wall_time": report.wall_time, "failure_fraction": report.failure_fraction})
    for e in report.entries:
        line = f"{e.kind:5s} alpha={e.alpha:g} N={e.N:4d} median|err|={e.median_abs_error:.4f}"
        if e.variance_ratio is not None:
            line += f" var_ratio={e.variance_ratio:.3f}"
        if e.ks_pvalue is not None:
            line += f" ks_p={e.ks_pvalue:.3f}"
        if e.flags:
            line += " flags=" + ",".join(e.flags)
        print(line)
    if report.failure_fraction > cfg.experiment["max_failure_fraction"]:
        log.error("failure fraction %.3f exceeds tolerance", report.failure_fraction)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_mc_consistency(args) -> int:
    return _mc(args, run_consistency, "consistency")


def cmd_mc_normality(args) -> int:
    return _mc(args, run_normality, "normality")


def cmd_verify_linear(args) -> int:
    started = datetime.now(timezone.utc)
    cfg = parse_config(args.config, args.seed)
    lin = cfg.linear
    report = run_linear_battery(cfg.solver, int(lin["replicates"]), int(lin["modes"]), lin["beta"],
                                tuple(lin["n_grid"]))
    out = _out_path(args.out, "verify_linear.csv")
    io.write_csv(out, io.LINEAR_COLUMNS, linear_moment_rows(report), {"manifest_hash": cfg.digest()})
    summary = out.with_suffix(".json")
    payload = report.to_dict()
    payload["manifest_hash"] = cfg.digest()
    io.write_json(summary, payload)
    _write_manifest(out.parent, cfg, "verify-linear", [out, summary], started)
    within = report.within(float(lin["z_bound"]))
    print(f"{within}/{len(report.modes)} modes within {lin['z_bound']} standard errors; "
          f"growth slope {report.exact_slope:.3f} (target {report.target_slope:.3f})")
    return EXIT_OK if within >= int(lin["min_within"]) else EXIT_CHECK


def cmd_residual_study(args) -> int:
    started = datetime.now(timezone.utc)
    cfg = parse_config(args.config, args.seed)
    exp = cfg.experiment
    report = run_residual_study(cfg.solver, exp["alpha_primes"], exp["n_grid"],
                                int(exp["replicates"]), int(exp["first_replicate"]))
    out = _out_path(args.out, "residual_study.json")
    payload = report.to_dict()
    payload["manifest_hash"] = cfg.digest()
    io.write_json(out, payload)
    _write_manifest(out.parent, cfg, "residual-study", [out], started)
    for a, f in report.decay_factor.items():
        print(f"alpha'={a:g}: I2 decay factor {f:.3f} from N={report.n_grid[0]} to N={report.n_grid[-1]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochnse", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_flag="--config", required=True):
        sp.add_argument(config_flag, required=required)
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int, help="override noise.master_seed")
        sp.add_argument("--threads", type=int, default=1, help="fixed worker count")
        sp.add_argument("--keep-trajectories", action="store_true")

    sp = sub.add_parser("basis-dump", help="write the Stokes eigenbasis as CSV")
    common(sp, required=False)
    sp.add_argument("--L", type=float, default=TorusSpec().L)
    sp.add_argument("--modes", type=int)
    sp.set_defaults(func=cmd_basis_dump)

    sp = sub.add_parser("simulate", help="simulate one trajectory")
    common(sp)
    sp.add_argument("--replicate", type=int, default=0)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify-linear", help="linear moment battery")
    common(sp)
    sp.set_defaults(func=cmd_verify_linear)

    sp = sub.add_parser("estimate", help="viscosity estimates from a trajectory file")
    sp.add_argument("--traj", required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--kind", choices=KINDS + ("all",), default="all")
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_estimate)

    for name, func in (("mc-consistency", cmd_mc_consistency), ("mc-normality", cmd_mc_normality)):
        sp = sub.add_parser(name)
        common(sp, "--plan")
        sp.set_defaults(func=func)

    sp = sub.add_parser("residual-study", help="residual regularity ratios")
    common(sp)
    sp.set_defaults(func=cmd_residual_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUp, DegenerateDenominator) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StochNSEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
