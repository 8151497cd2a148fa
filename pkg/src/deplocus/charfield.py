"""The characteristic line field on the locus and its integral curves.

At a locus point where the frame spans a plane D transversal to the locus
surface, D intersects the tangent plane of the surface in a line.  The unit
vector along that line is the characteristic direction; its integral curves
are the candidate dependent trajectories.  Orientation is fixed canonically
at the start (largest-magnitude component positive) and propagated by sign
alignment afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernel
from .errors import (DegenerateRankError, EvaluationError, NotOnLocusError,
                     RegularityError, StepFailureError, TangencyError)
from .locus import ON_LOCUS_TOL, REGULARITY_THRESHOLD

TANGENCY_CUTOFF = 1e-4
DEGENERATE_TOL = 1e-10
FLIP_TOL = 0.05
PROJECTION_TOL = 1e-12


@dataclass
class Trajectory:
    """Sampled curve with optional integrator-supplied velocities."""

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray = None
    truncated: bool = False
    stop_reason: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[1] != 3:
            raise ValueError("states must have shape (n, 3)")
        if self.times.shape != (self.states.shape[0],):
            raise ValueError("times and states disagree in length")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if self.velocities is not None:
            self.velocities = np.asarray(self.velocities, dtype=np.float64)
            if self.velocities.shape != self.states.shape:
                raise ValueError("velocities must match states in shape")

    @property
    def n_samples(self):
        return self.states.shape[0]

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def velocity_samples(self):
        """Stored velocities, or second-order finite differences (central
        inside, three-point one-sided at the ends)."""
        if self.velocities is not None:
            return self.velocities
        t = self.times
        x = self.states
        v = np.empty_like(x)
        if self.n_samples < 3:
            v[:] = (x[-1] - x[0]) / (t[-1] - t[0])
            return v
        v[1:-1] = (x[2:] - x[:-2]) / (t[2:] - t[:-2])[:, None]
        h0, h1 = t[1] - t[0], t[2] - t[1]
        v[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * x[0]
                + (h0 + h1) / (h0 * h1) * x[1]
                - h0 / (h1 * (h0 + h1)) * x[2])
        g1, g0 = t[-1] - t[-2], t[-2] - t[-3]
        v[-1] = ((2 * g1 + g0) / (g1 * (g1 + g0)) * x[-1]
                 - (g1 + g0) / (g1 * g0) * x[-2]
                 + g1 / (g0 * (g1 + g0)) * x[-3])
        return v


def _plane_normal(matrix, degen_tol):
    """Largest pairwise cross product of the frame columns, or None."""
    c = [matrix[:, i] for i in range(3)]
    crosses = [np.cross(c[0], c[1]), np.cross(c[1], c[2]),
               np.cross(c[2], c[0])]
    norms = [float(np.dot(p, p)) for p in crosses]
    best = int(np.argmax(norms))
    colmax = max(float(np.dot(ci, ci)) for ci in c)
    if colmax == 0.0 or np.sqrt(norms[best]) <= degen_tol * colmax:
        return None
    return crosses[best] / np.sqrt(norms[best])


def characteristic_direction(sys, x, *, tangency_cutoff=TANGENCY_CUTOFF,
                             reg_threshold=REGULARITY_THRESHOLD,
                             degen_tol=DEGENERATE_TOL, on_tol=ON_LOCUS_TOL):
    """Unit vector spanning the intersection of the frame plane with the
    locus tangent plane at x, canonically oriented."""
    x = np.asarray(x, dtype=np.float64)
    d = sys.delta(x)
    if abs(d) > on_tol:
        raise NotOnLocusError(
            f"|Delta(x)| = {abs(d):.3e} exceeds {on_tol:.1e} at {tuple(x)}")
    n = _plane_normal(sys.eval_frame(x).matrix, degen_tol)
    if n is None:
        raise DegenerateRankError(f"frame rank below 2 at {tuple(x)}")
    g = sys.delta_grad(x)
    gn = float(np.linalg.norm(g))
    if gn <= reg_threshold:
        raise RegularityError(
            f"|grad Delta| = {gn:.3e} at {tuple(x)}: locus not regular here")
    w = np.cross(n, g / gn)
    margin = float(np.linalg.norm(w))
    if margin < tangency_cutoff:
        raise TangencyError(
            f"plane field tangent to the locus at {tuple(x)} "
            f"(margin {margin:.3e} < cutoff {tangency_cutoff:.1e})")
    dvec = w / margin
    # canonical orientation: largest-magnitude component positive, ties to
    # the lowest index
    j = int(np.argmax(np.abs(dvec)))
    if dvec[j] < 0.0:
        dvec = -dvec
    return dvec


def transversality_margin_at(sys, x, *, degen_tol=DEGENERATE_TOL,
                             reg_threshold=REGULARITY_THRESHOLD):
    """sin of the angle between the plane normal and the locus normal."""
    x = np.asarray(x, dtype=np.float64)
    n = _plane_normal(sys.eval_frame(x).matrix, degen_tol)
    if n is None:
        raise DegenerateRankError(f"frame rank below 2 at {tuple(x)}")
    g = sys.delta_grad(x)
    gn = float(np.linalg.norm(g))
    if gn <= reg_threshold:
        raise RegularityError(f"|grad Delta| = {gn:.3e} at {tuple(x)}")
    return float(np.linalg.norm(np.cross(n, g / gn)))


def project_to_locus(sys, x, *, tol=PROJECTION_TOL, max_iter=12):
    """Newton projection along grad Delta until |Delta| <= tol."""
    x = np.array(x, dtype=np.float64)
    for _ in range(max_iter):
        d = sys.delta(x)
        if abs(d) <= tol:
            return x
        g = sys.delta_grad(x)
        gg = float(np.dot(g, g))
        if gg == 0.0:
            raise RegularityError(
                f"zero gradient while projecting {tuple(x)} to the locus")
        x = x - (d / gg) * g
    raise NotOnLocusError(
        f"projection stalled at |Delta| = {abs(sys.delta(x)):.3e}")


def integrate_characteristic(sys, x0, T, dt, *,
                             tangency_cutoff=TANGENCY_CUTOFF,
                             reg_threshold=REGULARITY_THRESHOLD,
                             degen_tol=DEGENERATE_TOL, flip_tol=FLIP_TOL,
                             projection_tol=PROJECTION_TOL,
                             on_tol=ON_LOCUS_TOL):
    """Integrate the characteristic field from x0 for duration T.

    Fixed-step fourth-order integration at unit speed, one Newton projection
    back to the level set per step.  Stops early (flagged, not an error) at
    the chart boundary or when the transversality margin falls below the
    cutoff; errors out if x0 itself fails the direction computation or if
    orientation tracking breaks down.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n_steps = int(round(T / dt))
    if n_steps < 1:
        raise ValueError("duration shorter than one step")
    x0 = np.asarray(x0, dtype=np.float64)
    d0 = sys.delta(x0)
    if abs(d0) > on_tol:
        raise NotOnLocusError(
            f"|Delta(x0)| = {abs(d0):.3e} exceeds {on_tol:.1e}")
    x0 = project_to_locus(sys, x0, tol=projection_tol)
    if not sys.chart.contains(x0):
        raise NotOnLocusError("projected start point left the chart")

    states, dirs, margins, status, done = kernel.rk4_characteristic(
        sys.frame_bundle, sys.grad_bundle, sys.dependence_function.program,
        x0, dt, n_steps, tangency_cutoff, reg_threshold, degen_tol, flip_tol,
        projection_tol, sys.chart.lo_array(), sys.chart.hi_array())

    if done == 0 and status != kernel.CHAR_DONE:
        if status == kernel.CHAR_TANGENT:
            raise TangencyError(
                f"plane field tangent to the locus at the start "
                f"(margin {margins[0]:.3e} < cutoff {tangency_cutoff:.1e})")
        if status == kernel.CHAR_DEGENERATE:
            raise DegenerateRankError("frame rank below 2 at the start point")
        if status == kernel.CHAR_REG_FAIL:
            raise RegularityError("locus not regular at the start point")
        if status == kernel.CHAR_FLIP:
            raise StepFailureError("direction flip on the first step")
        if status == kernel.CHAR_EVAL_ERROR:
            raise EvaluationError("field evaluation failed at the start point")

    if status == kernel.CHAR_DEGENERATE:
        raise DegenerateRankError(
            f"frame rank below 2 after {done} steps")
    if status == kernel.CHAR_REG_FAIL:
        raise RegularityError(f"locus regularity lost after {done} steps")
    if status == kernel.CHAR_FLIP:
        raise StepFailureError(
            f"direction flip of more than 90 degrees after {done} steps")
    if status == kernel.CHAR_EVAL_ERROR:
        raise EvaluationError(f"field evaluation failed after {done} steps")

    truncated = status in (kernel.CHAR_CHART_EXIT, kernel.CHAR_TANGENT)
    reason = ""
    if status == kernel.CHAR_CHART_EXIT:
        reason = "chart_exit"
    elif status == kernel.CHAR_TANGENT:
        reason = "tangency_cutoff"
    times = np.arange(done + 1) * dt
    return Trajectory(times=times, states=states, velocities=dirs,
                      truncated=truncated, stop_reason=reason)


def write_trajectory_csv(traj, path):
    """CSV rows t,x1,x2,x3 at 17 significant digits."""
    lines = ["t,x1,x2,x3"]
    for t, x in zip(traj.times, traj.states):
        lines.append(",".join(f"{v:.17g}" for v in (t, *x)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
