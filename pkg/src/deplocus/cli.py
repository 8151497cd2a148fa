"""Command-line front end.

Subcommands:

    locus    detect the dependence locus, write mesh CSV + JSON report
    traj     integrate a characteristic trajectory from --x0
    lift     attach the adjoint lift along a characteristic trajectory
    verify   certify endpoint-rank singularity of the trajectory from --x0
    perturb  run the bump-perturbation persistence experiment
    demo     built-in example; prints a singular / non-singular contrast

Exit codes: 0 success, 1 pipeline failure, 2 configuration or usage error.
Artifacts are written into --out (default: current directory); files
created by a failing command are removed again.
"""
from __future__ import annotations

import argparse
import json
import os
import sys as _sys

import numpy as np

from . import kernel
from .charfield import integrate_characteristic, write_trajectory_csv
from .config import load_config
from .endpoint import ControlSignal, endpoint_jacobian, singularity_verdict
from .errors import ConfigError, DeplocusError
from .locus import detect_locus, tangency_report, write_mesh_csv
from .perturb import openness_experiment
from .pmp import (constraint_residuals, lift_to_extremal,
                  singular_controls_along, write_lift_csv)
from .system import Box, build_model_system


def _point(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected three comma-separated coordinates, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad coordinate in {text!r}") from None


class _Workspace:
    """Tracks artifact paths so a failing command can clean up after itself."""

    def __init__(self, out_dir):
        self.dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.created = []

    def path(self, name):
        p = os.path.join(self.dir, name)
        self.created.append(p)
        return p

    def discard(self):
        for p in self.created:
            try:
                os.remove(p)
            except OSError:
                pass


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _require_config(args):
    if not args.config:
        raise ConfigError("--config is required for this command")
    try:
        return load_config(args.config)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None


def _cmd_locus(args):
    cfg = _require_config(args)
    ws = _Workspace(args.out)
    try:
        mesh = detect_locus(cfg.system, cfg.resolution)
        report = tangency_report(cfg.system, mesh)
        write_mesh_csv(mesh, report, ws.path("locus_mesh.csv"))
        counts = report.counts()
        payload = dict(counts)
        payload["resolution"] = (list(cfg.resolution)
                                 if isinstance(cfg.resolution, tuple)
                                 else cfg.resolution)
        payload["backend"] = kernel.BACKEND
        _write_json(ws.path("locus_report.json"), payload)
    except BaseException:
        ws.discard()
        raise
    print(f"locus mesh: {counts['points']} points "
          f"({counts['regular']} regular, {counts['transverse']} transverse, "
          f"{counts['gamma']} tangency candidates)")
    print(f"wrote {ws.created[0]} and {ws.created[1]}")
    return 0


def _cmd_traj(args):
    cfg = _require_config(args)
    ws = _Workspace(args.out)
    try:
        traj = integrate_characteristic(
            cfg.system, np.array(args.x0), args.T, cfg.dt,
            tangency_cutoff=cfg.tangency_cutoff)
        write_trajectory_csv(traj, ws.path("trajectory.csv"))
    except BaseException:
        ws.discard()
        raise
    status = f"stopped early ({traj.stop_reason})" if traj.truncated \
        else "completed"
    print(f"characteristic trajectory: {traj.n_samples} samples, "
          f"duration {traj.duration:.6g}, {status}")
    print(f"wrote {ws.created[0]}")
    return 0


def _cmd_lift(args):
    cfg = _require_config(args)
    ws = _Workspace(args.out)
    try:
        traj = integrate_characteristic(
            cfg.system, np.array(args.x0), args.T, cfg.dt,
            tangency_cutoff=cfg.tangency_cutoff)
        lift = lift_to_extremal(cfg.system, traj, a=args.a)
        stats = constraint_residuals(cfg.system, lift)
        write_lift_csv(cfg.system, lift, ws.path("extremal.csv"))
    except BaseException:
        ws.discard()
        raise
    print(f"extremal lift: {traj.n_samples} samples, "
          f"max |<p, X_i>| = {stats.max_abs.max():.3e}, "
          f"max |H| = {stats.hamiltonian_max:.3e}")
    print(f"wrote {ws.created[0]}")
    return 0


def _cmd_verify(args):
    cfg = _require_config(args)
    n_intervals = args.N if args.N is not None else cfg.n_intervals
    ws = _Workspace(args.out)
    try:
        traj = integrate_characteristic(
            cfg.system, np.array(args.x0), args.T, cfg.dt,
            tangency_cutoff=cfg.tangency_cutoff)
        controls = singular_controls_along(cfg.system, traj)
        signal = ControlSignal.from_samples(traj.times, controls, n_intervals)
        jac = endpoint_jacobian(cfg.system, traj.states[0], signal,
                                method=args.method)
        verdict = singularity_verdict(jac, tol=cfg.rank_tol,
                                      method=args.method,
                                      n_intervals=n_intervals)
        payload = verdict.to_dict()
        payload["x0"] = list(args.x0)
        payload["T"] = traj.duration
        payload["backend"] = kernel.BACKEND
        _write_json(ws.path("verdict.json"), payload)
    except BaseException:
        ws.discard()
        raise
    word = "singular" if verdict.singular else "not singular"
    print(f"endpoint rank verdict: {word} "
          f"(sigma_3/sigma_1 = {verdict.ratio:.3e}, tol {verdict.tol:.1e}, "
          f"N = {n_intervals}, {args.method})")
    print(f"wrote {ws.created[0]}")
    return 0


def _cmd_perturb(args):
    cfg = _require_config(args)
    ws = _Workspace(args.out)
    try:
        report = openness_experiment(
            cfg.system, args.trials, args.eps, args.seed,
            resolution=cfg.resolution, n_intervals=cfg.n_intervals,
            tangency_cutoff=cfg.tangency_cutoff)
        report.write_json(ws.path("openness.json"))
    except BaseException:
        ws.discard()
        raise
    print(f"openness experiment: {report.trials} trials at eps = "
          f"{report.eps:g}, persistence rate {report.persistence_rate:.3f}")
    print(f"wrote {ws.created[0]}")
    return 0


def _cmd_demo(args):
    ws = _Workspace(args.out)
    sys_ = build_model_system("0", "x2", Box((-1, -1, -1), (1, 1, 1)))
    on_point = (0.0, 0.0, 0.0)
    off_point = (0.5, 0.0, 0.0)
    T, dt, n_intervals = 0.8, 1e-3, 50
    try:
        mesh = detect_locus(sys_, 9)
        report = tangency_report(sys_, mesh)
        write_mesh_csv(mesh, report, ws.path("demo_mesh.csv"))

        traj = integrate_characteristic(sys_, np.array(on_point), T, dt)
        write_trajectory_csv(traj, ws.path("demo_trajectory.csv"))
        lift = lift_to_extremal(sys_, traj)
        write_lift_csv(sys_, lift, ws.path("demo_extremal.csv"))

        controls = singular_controls_along(sys_, traj)
        signal = ControlSignal.from_samples(traj.times, controls, n_intervals)
        rows = []
        for label, x0 in (("on locus", on_point), ("off locus", off_point)):
            jac = endpoint_jacobian(sys_, np.array(x0), signal)
            verdict = singularity_verdict(jac, method="variational",
                                          n_intervals=n_intervals)
            payload = verdict.to_dict()
            payload["x0"] = list(x0)
            payload["T"] = T
            payload["backend"] = kernel.BACKEND
            name = "demo_verdict_on.json" if label == "on locus" \
                else "demo_verdict_off.json"
            _write_json(ws.path(name), payload)
            rows.append((label, x0, verdict))
    except BaseException:
        ws.discard()
        raise

    print("built-in example: X1 = (1, 0, 0), X2 = (0, 1, x2), "
          "X3 = (0, 0, x1) on [-1, 1]^3")
    print(f"dependence locus: {len(mesh)} mesh points on the plane x1 = 0")
    print(f"characteristic trajectory from {on_point}: "
          f"{traj.n_samples} samples, duration {traj.duration:.3g}")
    print()
    print(f"{'start point':<16} {'position':<16} {'sigma_3/sigma_1':>16} "
          f"{'singular':>9}")
    for label, x0, verdict in rows:
        pos = "(" + ", ".join(f"{v:g}" for v in x0) + ")"
        word = "yes" if verdict.singular else "no"
        print(f"{label:<16} {pos:<16} {verdict.ratio:>16.3e} {word:>9}")
    print()
    print(f"artifacts in {ws.dir}: " +
          ", ".join(os.path.basename(p) for p in ws.created))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="deplocus",
        description="Dependence-locus analysis for three-field control "
                    "systems: locus detection, characteristic trajectories, "
                    "adjoint lifts, endpoint-rank certification, and "
                    "perturbation experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="run configuration file")
    common.add_argument("--out", metavar="DIR", default=".",
                        help="directory for output artifacts (default: .)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("locus", parents=[common],
                       help="detect the dependence locus")
    p.set_defaults(func=_cmd_locus)

    p = sub.add_parser("traj", parents=[common],
                       help="integrate a characteristic trajectory")
    p.add_argument("--x0", type=_point, required=True, metavar="X1,X2,X3")
    p.add_argument("--T", type=float, default=1.0, help="duration")
    p.set_defaults(func=_cmd_traj)

    p = sub.add_parser("lift", parents=[common],
                       help="adjoint lift along a characteristic trajectory")
    p.add_argument("--x0", type=_point, required=True, metavar="X1,X2,X3")
    p.add_argument("--a", type=float, default=1.0,
                   help="third adjoint coordinate at t = 0")
    p.add_argument("--T", type=float, default=1.0, help="duration")
    p.set_defaults(func=_cmd_lift)

    p = sub.add_parser("verify", parents=[common],
                       help="certify endpoint-rank singularity")
    p.add_argument("--x0", type=_point, required=True, metavar="X1,X2,X3")
    p.add_argument("--N", type=int, default=None,
                   help="control intervals (default: num.N from the config)")
    p.add_argument("--method", choices=("variational", "finite-difference"),
                   default="variational")
    p.add_argument("--T", type=float, default=0.8, help="duration")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("perturb", parents=[common],
                       help="bump-perturbation persistence experiment")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--eps", type=float, default=0.05,
                   help="perturbation size")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("demo", parents=[common],
                       help="run the built-in example (ignores --config)")
    p.set_defaults(func=_cmd_demo)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=_sys.stderr)
        return 2
    except DeplocusError as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
