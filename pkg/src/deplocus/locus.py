"""Detection and pointwise certification of the dependence locus.

The locus is the zero set of the frame determinant Delta inside the chart.
Detection scans a rectilinear grid for sign changes of Delta along grid
edges, refines each crossing by a 1-D Newton iteration along the edge, then
projects onto the level set along the gradient.  Certification checks, per
point, that the locus is a regular surface there (gradient bounded away from
zero) and that the frame's 2-plane field meets it transversally.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError, NotOnLocusError, RegularityError

ON_LOCUS_TOL = 1e-8
REGULARITY_THRESHOLD = 1e-6
TRANSVERSALITY_THRESHOLD = 1e-6
RESIDUAL_FACTOR = 1e-10       # mesh points satisfy |Delta| < factor*(1+|grad|)
MERGE_TOL = 1e-6
RANK_RATIO_TOL = 1e-8


@dataclass(eq=False)
class LocusMesh:
    """Refined locus points with unit normals (zero where the gradient vanishes)."""

    points: np.ndarray
    normals: np.ndarray
    resolution: tuple

    def __len__(self):
        return self.points.shape[0]


@dataclass(eq=False)
class Verdict:
    passed: bool
    margin: float


@dataclass(eq=False)
class TangencyReport:
    points: np.ndarray
    regular_ok: np.ndarray
    transverse_ok: np.ndarray
    reg_margins: np.ndarray
    margins: np.ndarray          # transversality margins, NaN if rank degenerate
    gamma_points: np.ndarray     # regular, full-rank plane, but tangent to the locus

    def counts(self):
        return {
            "points": int(self.points.shape[0]),
            "regular": int(np.count_nonzero(self.regular_ok)),
            "transverse": int(np.count_nonzero(self.transverse_ok)),
            "gamma": int(self.gamma_points.shape[0]),
        }


def _resolution_tuple(resolution):
    if isinstance(resolution, int):
        res = (resolution,) * 3
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) != 3 or any(r < 2 for r in res):
        raise ValueError("resolution must be >= 2 per axis")
    return res


def _refine_crossing(sys, p, q, newton_cap):
    """Root of Delta on the segment [p, q] by Newton in the edge parameter."""
    e = q - p
    s = 0.5
    for _ in range(newton_cap):
        x = p + s * e
        d = sys.delta(x)
        if d == 0.0:
            break
        slope = float(np.dot(sys.delta_grad(x), e))
        if slope == 0.0:
            break
        s_new = s - d / slope
        if s_new < 0.0:
            s_new = 0.0
        elif s_new > 1.0:
            s_new = 1.0
        if s_new == s:
            break
        s = s_new
    return p + s * e


def _project_to_level_set(sys, x, factor=0.5 * RESIDUAL_FACTOR, max_iter=12):
    """Newton steps along grad(Delta); returns (point, hit_tolerance)."""
    x = np.array(x, dtype=np.float64)
    for _ in range(max_iter):
        d = sys.delta(x)
        g = sys.delta_grad(x)
        gn = float(np.linalg.norm(g))
        if abs(d) <= factor * (1.0 + gn):
            return x, True
        if gn == 0.0:
            return x, False
        x = x - (d / (gn * gn)) * g
    d = sys.delta(x)
    gn = float(np.linalg.norm(sys.delta_grad(x)))
    return x, abs(d) <= RESIDUAL_FACTOR * (1.0 + gn)


def detect_locus(sys, resolution, *, merge_tol=MERGE_TOL, newton_cap=50):
    """Scan the chart grid for the locus and refine the hits.

    Runs in three deterministic stages: grid points where Delta is exactly
    zero are kept as-is; every grid edge with a sign change contributes one
    Newton-refined, gradient-projected point; duplicates within `merge_tol`
    are merged keeping the lexicographically first representative.
    """
    res = _resolution_tuple(resolution)
    axes = [np.linspace(sys.chart.lo[i], sys.chart.hi[i], res[i])
            for i in range(3)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.reshape(-1) for m in mesh])
    vals = sys.delta_many(pts).reshape(res)

    candidates = []
    grid = np.stack(mesh, axis=-1)

    zero_idx = np.argwhere(vals == 0.0)
    for idx in zero_idx:
        candidates.append(grid[tuple(idx)])

    for axis in range(3):
        lead = [slice(None)] * 3
        trail = [slice(None)] * 3
        lead[axis] = slice(1, None)
        trail[axis] = slice(None, -1)
        prod = vals[tuple(trail)] * vals[tuple(lead)]
        for idx in np.argwhere(prod < 0.0):
            p = grid[tuple(idx)]
            q_idx = list(idx)
            q_idx[axis] += 1
            q = grid[tuple(q_idx)]
            x = _refine_crossing(sys, p, q, newton_cap)
            x, ok = _project_to_level_set(sys, x)
            if ok and sys.chart.contains(x):
                candidates.append(x)

    if not candidates:
        return LocusMesh(points=np.zeros((0, 3)), normals=np.zeros((0, 3)),
                         resolution=res)

    cand = np.array(candidates)
    order = np.lexsort((cand[:, 2], cand[:, 1], cand[:, 0]))
    kept = []
    kept_x1 = []
    for i in order:
        x = cand[i]
        start = bisect.bisect_left(kept_x1, x[0] - merge_tol)
        dup = False
        for j in range(start, len(kept)):
            dx = x - kept[j]
            if dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2] <= merge_tol ** 2:
                dup = True
                break
        if not dup:
            kept.append(x)
            kept_x1.append(x[0])

    points = np.array(kept)
    normals = np.zeros_like(points)
    for i, x in enumerate(points):
        g = sys.delta_grad(x)
        gn = float(np.linalg.norm(g))
        if gn > 0.0:
            normals[i] = g / gn
    return LocusMesh(points=points, normals=normals, resolution=res)


def check_regularity(sys, x, *, on_tol=ON_LOCUS_TOL,
                     threshold=REGULARITY_THRESHOLD):
    """Margin |grad Delta| at a locus point; requires |Delta(x)| <= on_tol."""
    x = np.asarray(x, dtype=np.float64)
    d = sys.delta(x)
    if abs(d) > on_tol:
        raise NotOnLocusError(
            f"|Delta(x)| = {abs(d):.3e} exceeds {on_tol:.1e} at {tuple(x)}")
    margin = float(np.linalg.norm(sys.delta_grad(x)))
    return Verdict(passed=margin > threshold, margin=margin)


def plane_margin(matrix, ghat, *, rank_tol=RANK_RATIO_TOL):
    """Transversality margin of the column span against a unit normal.

    Margin is the norm of the projection of ghat onto the frame's 2-plane
    (computed from the two leading left singular vectors).  Raises if the
    columns do not span a plane.
    """
    u, s, _ = np.linalg.svd(matrix)
    if s[0] == 0.0 or s[1] <= rank_tol * s[0]:
        raise DegenerateRankError(
            f"frame rank below 2 (singular values {s.tolist()})")
    c1 = float(np.dot(ghat, u[:, 0]))
    c2 = float(np.dot(ghat, u[:, 1]))
    return float(np.sqrt(c1 * c1 + c2 * c2))


def check_transversality(sys, x, *, on_tol=ON_LOCUS_TOL,
                         threshold=TRANSVERSALITY_THRESHOLD,
                         reg_threshold=REGULARITY_THRESHOLD,
                         rank_tol=RANK_RATIO_TOL):
    """Margin of the frame plane against the locus tangent plane at x."""
    x = np.asarray(x, dtype=np.float64)
    d = sys.delta(x)
    if abs(d) > on_tol:
        raise NotOnLocusError(
            f"|Delta(x)| = {abs(d):.3e} exceeds {on_tol:.1e} at {tuple(x)}")
    g = sys.delta_grad(x)
    gn = float(np.linalg.norm(g))
    if gn <= reg_threshold:
        raise RegularityError(
            f"|grad Delta| = {gn:.3e} at {tuple(x)}: locus not regular here")
    margin = plane_margin(sys.eval_frame(x).matrix, g / gn, rank_tol=rank_tol)
    return Verdict(passed=margin > threshold, margin=margin)


def tangency_report(sys, mesh, *, reg_threshold=REGULARITY_THRESHOLD,
                    trans_threshold=TRANSVERSALITY_THRESHOLD,
                    on_tol=ON_LOCUS_TOL):
    """Per-point regularity and transversality over a locus mesh."""
    n = len(mesh)
    regular_ok = np.zeros(n, dtype=bool)
    transverse_ok = np.zeros(n, dtype=bool)
    reg_margins = np.empty(n)
    margins = np.full(n, np.nan)
    gamma = []
    for i, x in enumerate(mesh.points):
        reg = check_regularity(sys, x, on_tol=on_tol, threshold=reg_threshold)
        regular_ok[i] = reg.passed
        reg_margins[i] = reg.margin
        if not reg.passed:
            continue
        try:
            tr = check_transversality(sys, x, on_tol=on_tol,
                                      threshold=trans_threshold,
                                      reg_threshold=reg_threshold)
        except DegenerateRankError:
            continue
        margins[i] = tr.margin
        transverse_ok[i] = tr.passed
        if not tr.passed:
            gamma.append(x)
    gamma_points = np.array(gamma) if gamma else np.zeros((0, 3))
    return TangencyReport(points=mesh.points, regular_ok=regular_ok,
                          transverse_ok=transverse_ok,
                          reg_margins=reg_margins, margins=margins,
                          gamma_points=gamma_points)


def write_mesh_csv(mesh, report, path):
    """CSV rows x1,x2,x3,n1,n2,n3,regular_ok,transverse_ok (flags as 1/0)."""
    lines = ["x1,x2,x3,n1,n2,n3,regular_ok,transverse_ok"]
    for i in range(len(mesh)):
        x = mesh.points[i]
        nrm = mesh.normals[i]
        flags = f"{int(report.regular_ok[i])},{int(report.transverse_ok[i])}"
        coords = ",".join(f"{v:.17g}" for v in (*x, *nrm))
        lines.append(f"{coords},{flags}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
