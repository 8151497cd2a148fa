"""Endpoint map over piecewise-constant controls and its rank certification.

A control signal is N constant values on equal subintervals of [t0, t1].
The endpoint map sends the stacked control values (3N numbers) to the final
state of the controlled flow; a trajectory is singular when the endpoint
Jacobian drops rank, detected through the ratio of smallest to largest
singular value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .charfield import Trajectory
from .errors import ChartExitError
from .system import Box

DEFAULT_BOUNDS = Box((-10.0, -10.0, -10.0), (10.0, 10.0, 10.0))
MIN_STEPS_PER_INTERVAL = 20
FD_STEP = 1e-6
RANK_TOL = 1e-6


@dataclass(eq=False)
class ControlSignal:
    """Piecewise-constant control: values[k] on subinterval k of [t0, t1].

    Values must lie strictly inside the open control box `bounds`.
    """

    t0: float
    t1: float
    values: np.ndarray
    bounds: Box = field(default_factory=lambda: DEFAULT_BOUNDS)

    def __post_init__(self):
        self.t0 = float(self.t0)
        self.t1 = float(self.t1)
        if not self.t1 > self.t0:
            raise ValueError("need t1 > t0")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != 3:
            raise ValueError("values must have shape (N, 3)")
        if self.values.shape[0] < 1:
            raise ValueError("need at least one control interval")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control values must be finite")
        lo = self.bounds.lo_array()
        hi = self.bounds.hi_array()
        if not (np.all(self.values > lo) and np.all(self.values < hi)):
            raise ValueError("control values must lie strictly inside bounds")

    @property
    def n_intervals(self):
        return self.values.shape[0]

    @property
    def interval_length(self):
        return (self.t1 - self.t0) / self.n_intervals

    def grid(self):
        return self.t0 + np.arange(self.n_intervals + 1) * self.interval_length

    @classmethod
    def from_samples(cls, times, samples, n_intervals, bounds=None):
        """Resample a sampled control onto N intervals by midpoint evaluation.

        The continuous control is taken as the linear interpolant of the
        samples; each interval gets its value at the interval midpoint.
        """
        times = np.asarray(times, dtype=np.float64)
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape != (times.shape[0], 3):
            raise ValueError("samples must have shape (len(times), 3)")
        t0 = float(times[0])
        t1 = float(times[-1])
        length = (t1 - t0) / n_intervals
        mids = t0 + (np.arange(n_intervals) + 0.5) * length
        values = np.column_stack([np.interp(mids, times, samples[:, i])
                                  for i in range(3)])
        if bounds is None:
            return cls(t0=t0, t1=t1, values=values)
        return cls(t0=t0, t1=t1, values=values, bounds=bounds)


@dataclass(eq=False)
class SingularityVerdict:
    singular_values: np.ndarray
    ratio: float
    singular: bool
    tol: float
    method: str
    n_intervals: int

    def to_dict(self):
        return {
            "sigma": [float(s) for s in self.singular_values],
            "ratio": float(self.ratio),
            "singular": bool(self.singular),
            "tol": float(self.tol),
            "method": self.method,
            "N": int(self.n_intervals),
        }


def _check_steps(steps_per_interval):
    s = int(steps_per_interval)
    if s < MIN_STEPS_PER_INTERVAL:
        raise ValueError(
            f"need at least {MIN_STEPS_PER_INTERVAL} steps per interval")
    return s


def integrate_trajectory(sys, x0, control, steps_per_interval=MIN_STEPS_PER_INTERVAL):
    """Controlled flow, recorded on the fine integration grid.

    Fourth-order fixed-step integration restarted at each control interval
    boundary so the discontinuities line up with the grid exactly.  Leaving
    the chart box is an error.
    """
    steps = _check_steps(steps_per_interval)
    x0 = np.asarray(x0, dtype=np.float64)
    if not sys.chart.contains(x0):
        raise ChartExitError(f"start point {tuple(x0)} is outside the chart")
    times, states, vels = kernel.rk4_record(
        sys.frame_bundle, x0, control.t0, control.interval_length,
        control.values, steps, sys.chart.lo_array(), sys.chart.hi_array())
    return Trajectory(times=times, states=states, velocities=vels)


def endpoint_map(sys, x0, control, steps_per_interval=MIN_STEPS_PER_INTERVAL):
    """Final state of the controlled flow."""
    steps = _check_steps(steps_per_interval)
    x0 = np.asarray(x0, dtype=np.float64)
    if not sys.chart.contains(x0):
        raise ChartExitError(f"start point {tuple(x0)} is outside the chart")
    return kernel.rk4_endpoint(
        sys.frame_bundle, x0, control.t0, control.interval_length,
        control.values, steps, sys.chart.lo_array(), sys.chart.hi_array())


def endpoint_jacobian(sys, x0, control, *, method="variational",
                      steps_per_interval=MIN_STEPS_PER_INTERVAL,
                      fd_step=FD_STEP):
    """Jacobian of the endpoint map in the control values, shape (3, 3N).

    "variational": integrate the variational flow alongside the state; for
    each interval k accumulate the state transition Phi_k and the control
    sensitivity G_k, then chain them backwards.  "finite-difference": central
    differences with step `fd_step` on each control entry.
    """
    steps = _check_steps(steps_per_interval)
    x0 = np.asarray(x0, dtype=np.float64)
    if not sys.chart.contains(x0):
        raise ChartExitError(f"start point {tuple(x0)} is outside the chart")
    n = control.n_intervals
    if method == "variational":
        _, phis, gs = kernel.rk4_variational(
            sys.frame_bundle, sys.jac_bundle, x0, control.t0,
            control.interval_length, control.values, steps,
            sys.chart.lo_array(), sys.chart.hi_array())
        jac = np.empty((3, 3 * n))
        s = np.eye(3)
        for k in range(n - 1, -1, -1):
            jac[:, 3 * k:3 * k + 3] = s @ gs[k]
            s = s @ phis[k]
        return jac
    if method == "finite-difference":
        lo = sys.chart.lo_array()
        hi = sys.chart.hi_array()
        jac = np.empty((3, 3 * n))
        for k in range(n):
            for i in range(3):
                for sign in (1.0, -1.0):
                    values = control.values.copy()
                    values[k, i] += sign * fd_step
                    endpoint = kernel.rk4_endpoint(
                        sys.frame_bundle, x0, control.t0,
                        control.interval_length, values, steps, lo, hi)
                    if sign > 0:
                        plus = endpoint
                    else:
                        minus = endpoint
                jac[:, 3 * k + i] = (plus - minus) / (2.0 * fd_step)
        return jac
    raise ValueError(f"unknown Jacobian method {method!r}")


def singularity_verdict(jacobian, *, tol=RANK_TOL, method="",
                        n_intervals=None):
    """Rank verdict from the singular values of the endpoint Jacobian.

    singular means sigma_3 / sigma_1 < tol; an identically zero Jacobian
    (sigma_1 = 0) counts as singular with ratio 0.
    """
    jacobian = np.asarray(jacobian, dtype=np.float64)
    if not np.all(np.isfinite(jacobian)):
        raise ValueError("endpoint Jacobian contains non-finite entries")
    if jacobian.ndim != 2 or jacobian.shape[0] != 3:
        raise ValueError("expected a (3, 3N) Jacobian")
    if n_intervals is None:
        n_intervals = jacobian.shape[1] // 3
    sigma = np.linalg.svd(jacobian, compute_uv=False)
    if sigma[0] == 0.0:
        ratio = 0.0
    else:
        ratio = float(sigma[2] / sigma[0])
    return SingularityVerdict(singular_values=sigma, ratio=ratio,
                              singular=bool(ratio < tol), tol=float(tol),
                              method=method, n_intervals=int(n_intervals))
