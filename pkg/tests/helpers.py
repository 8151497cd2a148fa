"""Shared test utilities: deterministic random field generators."""
import numpy as np

from deplocus import Box, build_model_system
from deplocus.expr import (Call, Const, Var, add, call, const, div, mul, neg,
                           powi, sub, ScalarField)

UNIT_CHART = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
WIDE_CHART = Box((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))


def benign_pq_text(rng):
    """Expression strings for a well-behaved model-form pair (P, Q).

    Low-order polynomials in x2, x3 plus bounded trig terms, coefficients in
    [-0.4, 0.4]: values and first derivatives stay below 3 on [-2, 2]^3 by
    construction, so locus trajectories from near the origin stay benign.
    """
    def draw():
        c = [float(v) for v in rng.uniform(-0.4, 0.4, size=6)]
        return (f"{c[0]!r} + {c[1]!r}*x2 + {c[2]!r}*x3 + {c[3]!r}*sin(x2)"
                f" + {c[4]!r}*cos(x3) + {c[5]!r}*0.25*x2*x3")
    return draw(), draw()


def benign_model_system(rng, chart=UNIT_CHART):
    p, q = benign_pq_text(rng)
    return build_model_system(p, q, chart)


def smooth_random_field(rng, depth=4):
    """Random everywhere-smooth expression tree exercising the full grammar
    except the kinked primitives (those have dedicated exact-value tests).

    Divisions get denominators bounded away from zero by construction."""
    def leaf():
        if rng.random() < 0.4:
            return Const(float(rng.uniform(-2.0, 2.0)))
        return Var(int(rng.integers(0, 3)))

    def node(d):
        if d == 0:
            return leaf()
        op = rng.integers(0, 9)
        if op == 0:
            return add(node(d - 1), node(d - 1))
        if op == 1:
            return sub(node(d - 1), node(d - 1))
        if op == 2:
            return mul(node(d - 1), node(d - 1))
        if op == 3:
            return neg(node(d - 1))
        if op == 4:
            return call("sin", node(d - 1))
        if op == 5:
            return call("cos", node(d - 1))
        if op == 6:
            # keep the argument small so values stay finite
            return call("exp", mul(const(0.3), call("sin", node(d - 1))))
        if op == 7:
            # denominator >= 1.5 everywhere
            denom = add(const(float(rng.uniform(1.5, 3.0))),
                        powi(node(d - 1), 2))
            return div(node(d - 1), denom)
        return powi(node(d - 1), int(rng.integers(2, 4)))

    root = node(depth)
    f = ScalarField(root)
    # degenerate draws (constants) carry no signal worth testing
    if not f.variables():
        return smooth_random_field(rng, depth)
    return f


def central_diff(f, x, i, h=1e-5):
    xp = np.array(x, dtype=float)
    xm = np.array(x, dtype=float)
    xp[i] += h
    xm[i] -= h
    return (f.eval(xp) - f.eval(xm)) / (2.0 * h)
