"""Adjoint lifts of dependent trajectories and singular-control synthesis.

A trajectory t -> x(t) of the driftless system dx = sum_i u_i X_i(x) is a
critical point of the endpoint map exactly when it admits an adjoint curve
p(t) != 0 with <p(t), X_i(x(t))> = 0 for all i and dp = -(sum u_i DX_i)^T p.
For model-form systems restricted to the locus {x1 = 0} the adjoint has a
closed form:

    p3(t) = a * exp( integral of -x2'(t) * Q_x3(x2(t), x3(t)) dt ),  a != 0,
    p2(t) = -Q(x(t)) * p3(t),      p1(t) = -P(x(t)) * p3(t),

and the control components obey u1 = 0, u3 = u2 * K with
K = P_x2 + P_x3*Q - P*Q_x3.

For general systems the singular control at a point is recovered from the
first-order conditions: with n a unit normal to the frame plane, the matrix
B_ij = <n, [X_j, X_i]> is antisymmetric and the control must lie in its
kernel, which the axial vector of B spans.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charfield import Trajectory, _plane_normal
from .errors import (ControlSolveError, DegenerateRankError,
                     GridMismatchError, NotOnLocusError)
from .locus import ON_LOCUS_TOL

DEGENERATE_TOL = 1e-10


@dataclass(eq=False)
class ExtremalLift:
    """Trajectory with adjoint curve, control samples, and the scale a."""

    trajectory: Trajectory
    adjoint: np.ndarray
    control: np.ndarray
    scale: float


@dataclass(eq=False)
class ResidualStats:
    max_abs: np.ndarray        # per frame field, max_t |<p, X_i(x)>|
    rms: np.ndarray
    hamiltonian_max: float


@dataclass(eq=False)
class AdjointPath:
    times: np.ndarray
    adjoint: np.ndarray
    degenerate: bool


def _cumtrapz(y, t):
    out = np.zeros(len(y))
    if len(y) > 1:
        dt = np.diff(t)
        out[1:] = np.cumsum(dt * (y[:-1] + y[1:]) / 2.0)
    return out


def closed_form_p3(sys, traj, a):
    """p3 along a model-form locus trajectory, by cumulative trapezoid.

    p3(t) = a * exp(I(t)) with I' = -x2'(t) * Q_x3(x2, x3).  a must be
    nonzero: the adjoint of an extremal never vanishes.
    """
    if sys.form != "model":
        raise ValueError("closed-form adjoint requires a model-form system")
    a = float(a)
    if a == 0.0:
        raise ValueError("scale a must be nonzero")
    qx3 = sys.Q.diff(2)
    v2 = traj.velocity_samples()[:, 1]
    integrand = -v2 * qx3.eval_many(traj.states)
    return a * np.exp(_cumtrapz(integrand, traj.times))


def lift_to_extremal(sys, traj, a=1.0):
    """Adjoint lift of a locus trajectory of a model-form system.

    Requires every sample on the locus (max |Delta| <= 1e-8).  The control is
    read off the trajectory velocities: u1 = 0, u2 = x2', u3 = u2 * K.
    """
    if sys.form != "model":
        raise ValueError("lift_to_extremal requires a model-form system")
    a = float(a)
    if a == 0.0:
        raise ValueError("scale a must be nonzero")
    resid = np.abs(sys.delta_many(traj.states))
    worst = float(resid.max())
    if worst > ON_LOCUS_TOL:
        raise NotOnLocusError(
            f"trajectory leaves the locus: max |Delta| = {worst:.3e}")
    vel = traj.velocity_samples()
    n = traj.n_samples
    kvals = sys.model_bracket_coefficient.eval_many(traj.states)
    u = np.zeros((n, 3))
    u[:, 1] = vel[:, 1]
    u[:, 2] = vel[:, 1] * kvals
    p3 = closed_form_p3(sys, traj, a)
    p = np.empty((n, 3))
    p[:, 0] = -sys.P.eval_many(traj.states) * p3
    p[:, 1] = -sys.Q.eval_many(traj.states) * p3
    p[:, 2] = p3
    norms = np.linalg.norm(p, axis=1)
    if norms.min() <= 1e-12 * abs(a):
        raise ValueError("adjoint curve vanished; lift is invalid")
    return ExtremalLift(trajectory=traj, adjoint=p, control=u, scale=a)


def residual_samples(sys, lift):
    """Per-sample annihilation residuals <p, X_i(x)> against the full frame."""
    states = lift.trajectory.states
    n = states.shape[0]
    frame = np.empty((n, 3, 3))
    for i in range(3):
        for j in range(3):
            frame[:, j, i] = sys.columns[i][j].eval_many(states)
    return np.einsum("nj,nji->ni", lift.adjoint, frame)


def constraint_residuals(sys, lift):
    """Max/RMS annihilation residuals and the Hamiltonian bound.

    H = sum_i u_i <p, X_i(x)> vanishes identically along a singular extremal.
    """
    res = residual_samples(sys, lift)
    h = np.sum(lift.control * res, axis=1)
    return ResidualStats(max_abs=np.abs(res).max(axis=0),
                         rms=np.sqrt(np.mean(res * res, axis=0)),
                         hamiltonian_max=float(np.abs(h).max()))


def _hermite_midpoints(traj):
    """Cubic Hermite state interpolation at step midpoints."""
    x = traj.states
    v = traj.velocity_samples()
    dt = np.diff(traj.times)[:, None]
    # standard basis at s = 1/2: h00 = h01 = 1/2, h10 = -h11 = 1/8
    return (0.5 * (x[:-1] + x[1:]) + 0.125 * dt * (v[:-1] - v[1:]))


def _jac_matrices(sys, pts, u):
    """A(x, u) = sum_i u_i DX_i(x) evaluated in batch; shape (n, 3, 3)."""
    n = pts.shape[0]
    a = np.zeros((n, 3, 3))
    jf = sys.component_jacobians
    for i in range(3):
        ui = u[:, i]
        if np.all(ui == 0.0):
            continue
        for j in range(3):
            for k in range(3):
                a[:, j, k] += ui * jf[i][j][k].eval_many(pts)
    return a


def integrate_adjoint_general(sys, traj, control, p0):
    """Integrate dp = -(sum_i u_i DX_i(x))^T p along a sampled trajectory.

    `control` carries per-sample control values on the trajectory grid; a
    shape mismatch is an error.  States between samples come from cubic
    Hermite interpolation, controls from linear interpolation.  p0 = 0 (or a
    path collapsing to 0) is flagged degenerate.
    """
    control = np.asarray(control, dtype=np.float64)
    if control.shape != traj.states.shape:
        raise GridMismatchError(
            f"control samples {control.shape} do not match the trajectory "
            f"grid {traj.states.shape}")
    p0 = np.asarray(p0, dtype=np.float64)
    n = traj.n_samples
    out = np.empty((n, 3))
    out[0] = p0
    if np.linalg.norm(p0) == 0.0:
        out[:] = 0.0
        return AdjointPath(times=traj.times, adjoint=out, degenerate=True)
    mids = _hermite_midpoints(traj)
    umid = 0.5 * (control[:-1] + control[1:])
    a_nodes = _jac_matrices(sys, traj.states, control)
    a_mids = _jac_matrices(sys, mids, umid)
    dts = np.diff(traj.times)
    p = p0.copy()
    for k in range(n - 1):
        dt = dts[k]
        an = a_nodes[k].T
        am = a_mids[k].T
        an1 = a_nodes[k + 1].T
        k1 = -an @ p
        k2 = -am @ (p + 0.5 * dt * k1)
        k3 = -am @ (p + 0.5 * dt * k2)
        k4 = -an1 @ (p + dt * k3)
        p = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = p
    norms = np.linalg.norm(out, axis=1)
    degenerate = bool(norms.min() <= 1e-15 * max(norms.max(), 1.0))
    return AdjointPath(times=traj.times, adjoint=out, degenerate=degenerate)


def singular_control_at(sys, x, v, *, degen_tol=DEGENERATE_TOL,
                        residual_tol=1e-6):
    """Control u with F(x) u = v satisfying the first-order singular
    conditions at a locus point.

    u must lie in the kernel of B_ij = <n, [X_j, X_i]>, spanned by the axial
    vector of B; u is that vector scaled to match v.  Raises if the frame
    plane is degenerate or v is not reachable along the singular line.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    fr = sys.eval_frame(x).matrix
    n = _plane_normal(fr, degen_tol)
    if n is None:
        raise DegenerateRankError(f"frame rank below 2 at {tuple(x)}")
    jacs = sys.frame_jacobians(x)

    def beta(i, j):
        # <n, [X_j, X_i]> with 1-based field indices
        br = jacs[i - 1] @ fr[:, j - 1] - jacs[j - 1] @ fr[:, i - 1]
        return float(np.dot(n, br))

    b = np.array([beta(2, 3), -beta(1, 3), beta(1, 2)])
    fb = fr @ b
    fb2 = float(np.dot(fb, fb))
    vn = float(np.linalg.norm(v))
    if fb2 <= (degen_tol * max(vn, 1.0)) ** 2:
        raise ControlSolveError(
            f"singular control direction degenerate at {tuple(x)}")
    s = float(np.dot(v, fb)) / fb2
    u = s * b
    gap = float(np.linalg.norm(fr @ u - v))
    if gap > residual_tol * max(1.0, vn):
        raise ControlSolveError(
            f"velocity not reachable along the singular line "
            f"(residual {gap:.3e})")
    return u


def singular_controls_along(sys, traj, *, degen_tol=DEGENERATE_TOL,
                            residual_tol=1e-6):
    """singular_control_at for every trajectory sample; shape (n, 3)."""
    vel = traj.velocity_samples()
    out = np.empty((traj.n_samples, 3))
    for i in range(traj.n_samples):
        out[i] = singular_control_at(sys, traj.states[i], vel[i],
                                     degen_tol=degen_tol,
                                     residual_tol=residual_tol)
    return out


def write_lift_csv(sys, lift, path):
    """CSV rows t,x1..x3,p1..p3,u1..u3,res1..res3 at 17 significant digits."""
    res = residual_samples(sys, lift)
    traj = lift.trajectory
    lines = ["t,x1,x2,x3,p1,p2,p3,u1,u2,u3,res1,res2,res3"]
    for k in range(traj.n_samples):
        row = (traj.times[k], *traj.states[k], *lift.adjoint[k],
               *lift.control[k], *res[k])
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
