"""Frames of three vector fields on a box chart in R^3.

A system holds the frame columns X_1, X_2, X_3 as symbolic components, the
chart box they live on, and derived data used everywhere else: the dependence
function (the frame determinant, whose zero set is the locus of linear
dependence), its gradient, and compiled program bundles for the integrator
kernels.

Model-form systems are the normalized shape

    X_1 = (1, 0, P(x2, x3)),  X_2 = (0, 1, Q(x2, x3)),  X_3 = (0, 0, x1),

whose dependence function reduces to x1 exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import expr, kernel
from .errors import ChartExitError, EvaluationError


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box, lo < hi componentwise."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners need 3 coordinates")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("box must satisfy lo < hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, x, slack=0.0):
        return all(self.lo[i] - slack <= x[i] <= self.hi[i] + slack
                   for i in range(3))

    def widths(self):
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def center(self):
        return tuple((h + l) / 2.0 for l, h in zip(self.lo, self.hi))

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=(n, 3))

    def lo_array(self):
        return np.array(self.lo)

    def hi_array(self):
        return np.array(self.hi)


@dataclass(eq=False)
class FrameValue:
    """Frame matrix at a point; column i is the value of X_{i+1}."""

    matrix: np.ndarray
    basepoint: np.ndarray


def _det3_sym(m):
    """Symbolic 3x3 determinant, first-row cofactor expansion.

    m[j][k] is the (row j, column k) entry as an expression node.  Built with
    the identity/annihilator constructors, so structural zeros collapse: the
    model frame yields the bare node x1.
    """
    t0 = expr.mul(m[0][0], expr.sub(expr.mul(m[1][1], m[2][2]),
                                    expr.mul(m[1][2], m[2][1])))
    t1 = expr.mul(m[0][1], expr.sub(expr.mul(m[1][0], m[2][2]),
                                    expr.mul(m[1][2], m[2][0])))
    t2 = expr.mul(m[0][2], expr.sub(expr.mul(m[1][0], m[2][1]),
                                    expr.mul(m[1][1], m[2][0])))
    return expr.add(expr.sub(t0, t1), t2)


def _probe_grid(chart, per_axis=5):
    # odd count: the midplanes (x_i = center) are probed, where poles like
    # 1/x1 on a symmetric chart actually live
    axes = [np.linspace(chart.lo[i], chart.hi[i], per_axis) for i in range(3)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([a.reshape(-1) for a in g])


class VectorFieldSystem:
    """Three symbolic vector fields over a chart box.

    `columns[i][j]` is component j of field X_{i+1}.  `form` is "model" or
    "general"; model systems additionally carry their P and Q fields.
    """

    def __init__(self, columns, chart, form="general", P=None, Q=None):
        if form not in ("model", "general"):
            raise ValueError(f"unknown system form {form!r}")
        cols = tuple(tuple(expr.as_field(c) for c in col) for col in columns)
        if len(cols) != 3 or any(len(col) != 3 for col in cols):
            raise ValueError("expected 3 columns of 3 components")
        if not isinstance(chart, Box):
            chart = Box(*chart)
        self.columns = cols
        self.chart = chart
        self.form = form
        self.P = P
        self.Q = Q
        self._validate_finite()

    def _validate_finite(self):
        pts = _probe_grid(self.chart)
        for i, col in enumerate(self.columns):
            for j, comp in enumerate(col):
                try:
                    vals = comp.eval_many(pts)
                except EvaluationError as e:
                    raise ValueError(
                        f"component ({i + 1},{j + 1}) fails to evaluate on "
                        f"the chart: {e}") from e
                if not np.all(np.isfinite(vals)):
                    raise ValueError(
                        f"component ({i + 1},{j + 1}) is not finite on the "
                        f"chart")

    # -- symbolic derived data ------------------------------------------

    @cached_property
    def dependence_function(self):
        """Determinant of the frame as a scalar field (zero set = locus)."""
        m = [[self.columns[k][j].root for k in range(3)] for j in range(3)]
        return expr.ScalarField(_det3_sym(m))

    @cached_property
    def dependence_gradient(self):
        d = self.dependence_function
        return tuple(d.diff(v) for v in range(3))

    @cached_property
    def component_jacobians(self):
        """27 fields: [i][j][k] = d(X_{i+1})_j / dx_{k+1}."""
        return tuple(tuple(tuple(self.columns[i][j].diff(k) for k in range(3))
                           for j in range(3)) for i in range(3))

    @cached_property
    def model_bracket_coefficient(self):
        """K with u3 = u2*K along dependent extremals of a model system.

        K = P_x2 + P_x3*Q - P*Q_x3, from differentiating the adjoint
        constraint for p1 along the reduced flow on the locus.
        """
        if self.form != "model":
            raise ValueError("bracket coefficient is defined for model form")
        p_root = self.P.root
        q_root = self.Q.root
        px2 = self.P.diff(1).root
        px3 = self.P.diff(2).root
        qx3 = self.Q.diff(2).root
        k = expr.sub(expr.add(px2, expr.mul(px3, q_root)),
                     expr.mul(p_root, qx3))
        return expr.ScalarField(k)

    # -- compiled bundles ------------------------------------------------

    @cached_property
    def frame_bundle(self):
        progs = [self.columns[i][j].program for i in range(3) for j in range(3)]
        return kernel.pack(progs)

    @cached_property
    def jac_bundle(self):
        jf = self.component_jacobians
        progs = [jf[i][j][k].program
                 for i in range(3) for j in range(3) for k in range(3)]
        return kernel.pack(progs)

    @cached_property
    def grad_bundle(self):
        return kernel.pack([g.program for g in self.dependence_gradient])

    # -- pointwise evaluation ---------------------------------------------

    def eval_frame(self, x):
        x = np.asarray(x, dtype=np.float64)
        if not self.chart.contains(x):
            raise ChartExitError(f"point {tuple(x)} is outside the chart box")
        m = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                m[j, i] = self.columns[i][j].eval(x)
        return FrameValue(matrix=m, basepoint=x)

    def frame_jacobians(self, x):
        x = np.asarray(x, dtype=np.float64)
        if not self.chart.contains(x):
            raise ChartExitError(f"point {tuple(x)} is outside the chart box")
        jf = self.component_jacobians
        out = []
        for i in range(3):
            m = np.empty((3, 3))
            for j in range(3):
                for k in range(3):
                    m[j, k] = jf[i][j][k].eval(x)
            out.append(m)
        return out

    def delta(self, x):
        return self.dependence_function.eval(x)

    def delta_many(self, pts):
        return self.dependence_function.eval_many(pts)

    def delta_grad(self, x):
        return np.array([g.eval(x) for g in self.dependence_gradient])

    def __repr__(self):
        return (f"VectorFieldSystem(form={self.form!r}, "
                f"chart=[{self.chart.lo}, {self.chart.hi}])")


def build_model_system(P, Q, chart):
    """Model-form system from P(x2,x3) and Q(x2,x3).

    Rejects fields that mention x1: the model shape requires the last column
    to carry the only x1 dependence.
    """
    P = expr.as_field(P)
    Q = expr.as_field(Q)
    for name, f in (("P", P), ("Q", Q)):
        if 0 in f.variables():
            raise ValueError(f"{name} must not depend on x1 in model form")
    one = expr.ScalarField(expr.ONE)
    zero = expr.ScalarField(expr.ZERO)
    x1 = expr.ScalarField(expr.Var(0))
    columns = ((one, zero, P), (zero, one, Q), (zero, zero, x1))
    return VectorFieldSystem(columns, chart, form="model", P=P, Q=Q)


def build_general_system(components, chart):
    """General system from a 3x3 nest of fields: components[i][j] = (X_{i+1})_j."""
    return VectorFieldSystem(components, chart, form="general")
