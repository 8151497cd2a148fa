"""Bump perturbations of a system and the openness experiment.

A perturbation adds alpha_i * phi(x) to field X_i, where phi is a radial
C^3 bump (quartic power of a clamped quadratic) supported on a ball.  The
openness experiment draws random bumps of size eps, re-runs the full
pipeline on each perturbed system (locus detection, regularity and
transversality near the reference trajectory, characteristic integration,
singular-control synthesis, endpoint-rank certification), and reports how
often the certified dependent trajectory persists.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .charfield import integrate_characteristic, project_to_locus
from .endpoint import ControlSignal, endpoint_jacobian, singularity_verdict
from .errors import DeplocusError
from .locus import LocusMesh, detect_locus, tangency_report
from .pmp import singular_controls_along
from .system import Box, build_general_system

RHO_RANGE = (0.3, 0.6)           # bump radius relative to the region width
TRIAL_RANK_TOL = 1e-3            # certification tolerance for resampled controls
NEAR_RADIUS = 0.35


@dataclass(eq=False)
class BumpPerturbation:
    """Radial bump perturbation: field X_i gains amplitudes[i] * phi(x).

    phi(x) = max0(1 - |x - center|^2 / radius^2)^4, supported on the ball of
    the given radius, three times continuously differentiable.  Row norms of
    `amplitudes` are clamped to eps by rescaling.
    """

    center: tuple
    radius: float
    amplitudes: np.ndarray
    eps: float

    def __post_init__(self):
        self.center = tuple(float(c) for c in self.center)
        if len(self.center) != 3:
            raise ValueError("center needs 3 coordinates")
        self.radius = float(self.radius)
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        self.eps = float(self.eps)
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")
        amp = np.array(self.amplitudes, dtype=np.float64)
        if amp.shape != (3, 3):
            raise ValueError("amplitudes must have shape (3, 3)")
        for i in range(3):
            nm = float(np.linalg.norm(amp[i]))
            if nm > self.eps:
                amp[i] *= self.eps / nm
        self.amplitudes = amp

    def profile_root(self):
        parts = []
        for i in range(3):
            d = expr.sub(expr.Var(i), expr.Const(self.center[i]))
            parts.append(expr.powi(d, 2))
        r2 = expr.add(expr.add(parts[0], parts[1]), parts[2])
        u = expr.sub(expr.Const(1.0),
                     expr.div(r2, expr.Const(self.radius * self.radius)))
        return expr.powi(expr.call("max0", u), 4)

    def profile_field(self):
        return expr.ScalarField(self.profile_root())

    def as_dict(self):
        return {
            "center": list(self.center),
            "radius": self.radius,
            "eps": self.eps,
            "amplitudes": [list(map(float, row)) for row in self.amplitudes],
        }


def apply_perturbation(sys, pert):
    """Perturbed system (general form); an all-zero bump returns an
    identical frame."""
    phi = pert.profile_root()
    columns = []
    for i in range(3):
        col = []
        for j in range(3):
            a = pert.amplitudes[i, j]
            root = sys.columns[i][j].root
            if a != 0.0:
                root = expr.add(root, expr.mul(expr.Const(float(a)), phi))
            col.append(expr.ScalarField(root))
        columns.append(tuple(col))
    return build_general_system(tuple(columns), sys.chart)


def random_bump_perturbation(seed, eps, region, rho_range=RHO_RANGE):
    """Deterministic random bump: center uniform in the region, radius
    uniform in rho_range times the smallest region width, amplitudes uniform
    in the eps cube (then row-clamped to the eps ball)."""
    if not isinstance(region, Box):
        region = Box(*region)
    rng = np.random.default_rng(seed)
    center = rng.uniform(region.lo, region.hi)
    rho = rng.uniform(rho_range[0], rho_range[1]) * min(region.widths())
    raw = rng.uniform(-1.0, 1.0, size=(3, 3))
    return BumpPerturbation(center=tuple(center), radius=float(rho),
                            amplitudes=eps * raw, eps=eps)


@dataclass(eq=False)
class TrialRecord:
    index: int
    seed: int
    locus_found: bool = False
    regularity_ok: bool = False
    transversality_ok: bool = False
    trajectory_found: bool = False
    singular: bool = False
    sigma_ratio: float = float("nan")
    n_mesh: int = 0
    n_near: int = 0
    deviation: float = float("nan")
    notes: str = ""
    bump: dict = field(default_factory=dict)

    @property
    def persisted(self):
        return (self.locus_found and self.regularity_ok
                and self.transversality_ok and self.trajectory_found
                and self.singular)

    def as_dict(self):
        return {
            "index": self.index,
            "seed": self.seed,
            "locus_found": self.locus_found,
            "regularity_ok": self.regularity_ok,
            "transversality_ok": self.transversality_ok,
            "trajectory_found": self.trajectory_found,
            "singular": self.singular,
            "sigma_ratio": self.sigma_ratio,
            "n_mesh": self.n_mesh,
            "n_near": self.n_near,
            "deviation": self.deviation,
            "persisted": self.persisted,
            "notes": self.notes,
            "bump": self.bump,
        }


@dataclass(eq=False)
class OpennessReport:
    trials: int
    eps: float
    seed: int
    persistence_rate: float
    baseline: TrialRecord
    records: list
    params: dict

    def as_dict(self):
        return {
            "trials": self.trials,
            "epsilon": self.eps,
            "seed": self.seed,
            "persistence_rate": self.persistence_rate,
            "params": self.params,
            "baseline": self.baseline.as_dict(),
            "records": [r.as_dict() for r in self.records],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(eq=False)
class _PipelineParams:
    x0: np.ndarray
    T: float
    dt: float
    n_intervals: int
    steps_per_interval: int
    resolution: int
    rank_tol: float
    tangency_cutoff: float
    near_radius: float

    def as_dict(self):
        return {
            "x0": [float(v) for v in self.x0],
            "T": self.T,
            "dt": self.dt,
            "N": self.n_intervals,
            "steps_per_interval": self.steps_per_interval,
            "resolution": self.resolution,
            "rank_tol": self.rank_tol,
            "tangency_cutoff": self.tangency_cutoff,
            "near_radius": self.near_radius,
        }


def _min_dist_to(points, ref):
    """Per point, distance to the nearest reference sample."""
    diff = points[:, None, :] - ref[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2)).min(axis=1)


def _trajectory_region(states, pad, chart):
    """Bounding box of the reference trajectory inflated by pad, clipped to
    the chart.  Bump centers drawn here actually touch the structure under
    test instead of landing in empty corners of the chart."""
    lo = np.maximum(states.min(axis=0) - pad, chart.lo_array())
    hi = np.minimum(states.max(axis=0) + pad, chart.hi_array())
    for ax in range(3):
        if hi[ax] <= lo[ax]:    # clipped to nothing; fall back to the chart
            lo[ax] = chart.lo_array()[ax]
            hi[ax] = chart.hi_array()[ax]
    return Box(tuple(lo), tuple(hi))


def _run_pipeline(sys, params, ref_states, rec):
    """Fill a TrialRecord by running the full certification pipeline.

    Failures are recorded, not raised: any pipeline error leaves the
    remaining flags False with a note.
    """
    try:
        mesh = detect_locus(sys, params.resolution)
    except (DeplocusError, ValueError) as e:
        rec.notes = f"locus detection failed: {e}"
        return rec
    rec.n_mesh = len(mesh)
    rec.locus_found = rec.n_mesh > 0
    if not rec.locus_found:
        rec.notes = "empty locus mesh"
        return rec

    try:
        x0 = project_to_locus(sys, params.x0)
        traj = integrate_characteristic(
            sys, x0, params.T, params.dt,
            tangency_cutoff=params.tangency_cutoff)
    except (DeplocusError, ValueError) as e:
        rec.notes = f"characteristic integration failed: {e}"
        return rec

    ref = traj.states if ref_states is None else ref_states
    if ref_states is not None:
        rec.deviation = float(_min_dist_to(traj.states, ref).max())
    rec.trajectory_found = (not traj.truncated and
                            (ref_states is None
                             or rec.deviation <= params.near_radius))
    if traj.truncated:
        rec.notes = f"trajectory truncated: {traj.stop_reason}"

    near = _min_dist_to(mesh.points, ref) <= params.near_radius
    rec.n_near = int(np.count_nonzero(near))
    if rec.n_near == 0:
        rec.notes = (rec.notes + "; " if rec.notes else "") + \
            "no mesh points near the reference trajectory"
        return rec
    submesh = LocusMesh(points=mesh.points[near], normals=mesh.normals[near],
                        resolution=mesh.resolution)
    report = tangency_report(sys, submesh)
    rec.regularity_ok = bool(report.regular_ok.all())
    rec.transversality_ok = bool(report.transverse_ok.all())

    try:
        controls = singular_controls_along(sys, traj)
        sig = ControlSignal.from_samples(traj.times, controls,
                                         params.n_intervals)
        jac = endpoint_jacobian(sys, traj.states[0], sig,
                                steps_per_interval=params.steps_per_interval)
        verdict = singularity_verdict(jac, tol=params.rank_tol,
                                      method="variational",
                                      n_intervals=params.n_intervals)
        rec.sigma_ratio = verdict.ratio
        rec.singular = verdict.singular
    except (DeplocusError, ValueError) as e:
        rec.notes = (rec.notes + "; " if rec.notes else "") + \
            f"certification failed: {e}"
    return rec


def openness_experiment(sys, trials, eps, seed, *, x0=None, T=0.8, dt=1e-2,
                        n_intervals=50, steps_per_interval=20, resolution=9,
                        rank_tol=TRIAL_RANK_TOL, tangency_cutoff=1e-4,
                        near_radius=NEAR_RADIUS, region=None,
                        rho_range=RHO_RANGE):
    """Persistence of the certified dependent trajectory under random bumps.

    Draws `trials` bumps of size eps (per-trial seeds spawned from `seed`),
    applies each to the system, and re-runs the pipeline against the
    unperturbed reference trajectory.  The unperturbed system must pass its
    own pipeline first.  Bump centers default to the inflated bounding box
    of the reference trajectory, so the perturbations hit the structure
    being certified.  The certification tolerance for trials defaults to
    1e-3: midpoint resampling of the singular control onto N intervals
    carries an O((T/N)^2) rank defect that the tolerance must absorb.
    """
    trials = int(trials)
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    eps = float(eps)
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    if x0 is None:
        x0 = np.array(sys.chart.center())
    params = _PipelineParams(
        x0=np.asarray(x0, dtype=np.float64), T=float(T), dt=float(dt),
        n_intervals=int(n_intervals),
        steps_per_interval=int(steps_per_interval),
        resolution=int(resolution), rank_tol=float(rank_tol),
        tangency_cutoff=float(tangency_cutoff),
        near_radius=float(near_radius))

    baseline = _run_pipeline(sys, params, None,
                             TrialRecord(index=-1, seed=int(seed)))
    if not baseline.persisted:
        raise ValueError(
            f"unperturbed system fails its own pipeline: {baseline.as_dict()}")
    ref_states = integrate_characteristic(
        sys, project_to_locus(sys, params.x0), params.T, params.dt,
        tangency_cutoff=params.tangency_cutoff).states
    if region is None:
        region = _trajectory_region(ref_states, params.near_radius, sys.chart)

    trial_seeds = np.random.SeedSequence(int(seed)).generate_state(max(trials, 1))
    records = []
    for i in range(trials):
        tseed = int(trial_seeds[i])
        bump = random_bump_perturbation(tseed, eps, region,
                                        rho_range=rho_range)
        rec = TrialRecord(index=i, seed=tseed, bump=bump.as_dict())
        try:
            perturbed = apply_perturbation(sys, bump)
        except (DeplocusError, ValueError) as e:
            rec.notes = f"perturbation rejected: {e}"
            records.append(rec)
            continue
        records.append(_run_pipeline(perturbed, params, ref_states, rec))
    rate = (sum(1 for r in records if r.persisted) / trials) if trials else 1.0
    return OpennessReport(trials=trials, eps=eps, seed=int(seed),
                          persistence_rate=rate, baseline=baseline,
                          records=records, params=params.as_dict())


@dataclass(eq=False)
class BreakdownReport:
    """Bisection bracket for the perturbation size where persistence fails."""

    persist_eps: float
    break_eps: float            # None if no failure found up to the cap
    probes: list
    trials: int

    def as_dict(self):
        return {
            "persist_eps": self.persist_eps,
            "break_eps": self.break_eps,
            "probes": [[e, r] for e, r in self.probes],
            "trials": self.trials,
        }


def breakdown_threshold(sys, seed, *, trials=20, eps_start=0.05, eps_max=3.2,
                        bisect_iters=6, **kwargs):
    """Bracket the smallest eps where the persistence rate drops below 1.

    Doubles eps from eps_start until a probe fails (or eps_max is reached),
    then bisects.  All probes reuse the same seed so each trial sees the same
    bump geometry scaled up, which keeps the breakdown monotone in practice.
    """
    probes = []

    def rate(eps):
        rep = openness_experiment(sys, trials, eps, seed, **kwargs)
        probes.append((eps, rep.persistence_rate))
        return rep.persistence_rate

    lo = float(eps_start)
    if rate(lo) < 1.0:
        return BreakdownReport(persist_eps=0.0, break_eps=lo, probes=probes,
                               trials=trials)
    hi = lo
    while hi < eps_max:
        hi = min(2.0 * hi, eps_max)
        if rate(hi) < 1.0:
            break
        lo = hi
    else:
        return BreakdownReport(persist_eps=lo, break_eps=None, probes=probes,
                               trials=trials)
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        if rate(mid) == 1.0:
            lo = mid
        else:
            hi = mid
    return BreakdownReport(persist_eps=lo, break_eps=hi, probes=probes,
                           trials=trials)
