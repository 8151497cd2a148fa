"""Pure-Python backend.

Mirrors deplocus._kernel operation for operation: same opcode dispatch, same
square-and-multiply integer powers, same accumulation order in the RK4
combiners, so scalar results match the compiled extension bit for bit.
`eval_batch` is the one exception: it runs vectorized over numpy and may
differ from the scalar path in the last ulp of sin/cos/exp.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ChartExitError, EvaluationError

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_SIN = 7
OP_COS = 8
OP_EXP = 9
OP_POWI = 10
OP_MAX0 = 11
OP_STEP0 = 12

CHAR_DONE = 0
CHAR_CHART_EXIT = 1
CHAR_TANGENT = 2
CHAR_DEGENERATE = 3
CHAR_REG_FAIL = 4
CHAR_FLIP = 5
CHAR_EVAL_ERROR = 6


def _powi(base, n):
    m = -n if n < 0 else n
    acc = 1.0
    b = base
    while m:
        if m & 1:
            acc *= b
        m >>= 1
        if m:
            b *= b
    if n < 0:
        if acc == 0.0:
            raise EvaluationError("zero raised to a negative power")
        acc = 1.0 / acc
    return acc


def _eval(code, consts, x1, x2, x3, stack):
    sp = 0
    i = 0
    n = len(code)
    while i < n:
        op = code[i]
        arg = code[i + 1]
        i += 2
        if op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_CONST:
            stack[sp] = consts[arg]
            sp += 1
        elif op == OP_VAR:
            stack[sp] = x1 if arg == 0 else (x2 if arg == 1 else x3)
            sp += 1
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_DIV:
            sp -= 1
            b = stack[sp]
            if b == 0.0:
                raise EvaluationError("division by zero")
            stack[sp - 1] = stack[sp - 1] / b
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_POWI:
            stack[sp - 1] = _powi(stack[sp - 1], arg)
        elif op == OP_SIN:
            stack[sp - 1] = math.sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = math.cos(stack[sp - 1])
        elif op == OP_EXP:
            stack[sp - 1] = math.exp(stack[sp - 1])
        elif op == OP_MAX0:
            if stack[sp - 1] <= 0.0:
                stack[sp - 1] = 0.0
        elif op == OP_STEP0:
            stack[sp - 1] = 1.0 if stack[sp - 1] > 0.0 else 0.0
        else:
            raise EvaluationError(f"bad opcode {op}")
    return stack[0]


def eval_scalar(code, consts, stack_need, x1, x2, x3):
    stack = [0.0] * stack_need
    return _eval(code.tolist() if hasattr(code, "tolist") else list(code),
                 consts.tolist() if hasattr(consts, "tolist") else list(consts),
                 float(x1), float(x2), float(x3), stack)


def eval_batch(code, consts, stack_need, pts):
    n = pts.shape[0]
    xs = (pts[:, 0], pts[:, 1], pts[:, 2])
    stack = [None] * stack_need
    sp = 0
    i = 0
    ncode = code.shape[0]
    while i < ncode:
        op = int(code[i])
        arg = int(code[i + 1])
        i += 2
        if op == OP_CONST:
            stack[sp] = np.full(n, consts[arg])
            sp += 1
        elif op == OP_VAR:
            stack[sp] = xs[arg].copy()
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            b = stack[sp]
            zero = b == 0.0
            if zero.any():
                at = pts[int(np.argmax(zero))]
                raise EvaluationError(f"division by zero at point {tuple(at)}")
            stack[sp - 1] = stack[sp - 1] / b
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_POWI:
            base = stack[sp - 1]
            m = -arg if arg < 0 else arg
            acc = np.ones(n)
            b = base
            while m:
                if m & 1:
                    acc = acc * b
                m >>= 1
                if m:
                    b = b * b
            if arg < 0:
                zero = acc == 0.0
                if zero.any():
                    at = pts[int(np.argmax(zero))]
                    raise EvaluationError(
                        f"zero raised to a negative power at point {tuple(at)}")
                acc = 1.0 / acc
            stack[sp - 1] = acc
        elif op == OP_SIN:
            stack[sp - 1] = np.sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = np.cos(stack[sp - 1])
        elif op == OP_EXP:
            stack[sp - 1] = np.exp(stack[sp - 1])
        elif op == OP_MAX0:
            stack[sp - 1] = np.maximum(stack[sp - 1], 0.0)
        elif op == OP_STEP0:
            stack[sp - 1] = (stack[sp - 1] > 0.0).astype(np.float64)
        else:
            raise EvaluationError(f"bad opcode {op}")
    return np.asarray(stack[0], dtype=np.float64)


def _split(code, code_off, consts, const_off):
    code = code.tolist()
    consts = consts.tolist()
    progs = []
    for i in range(len(code_off) - 1):
        progs.append((code[code_off[i]:code_off[i + 1]],
                      consts[const_off[i]:const_off[i + 1]]))
    return progs


def _eval_progs(progs, x1, x2, x3, stack, out):
    for i, (c, k) in enumerate(progs):
        out[i] = _eval(c, k, x1, x2, x3, stack)


def _frame_rhs(fvals, u0, u1, u2):
    # fvals[3*i + j] = component j of column i
    d1 = u0 * fvals[0] + u1 * fvals[3] + u2 * fvals[6]
    d2 = u0 * fvals[1] + u1 * fvals[4] + u2 * fvals[7]
    d3 = u0 * fvals[2] + u1 * fvals[5] + u2 * fvals[8]
    return d1, d2, d3


def _inside(x1, x2, x3, lo, hi):
    return (lo[0] <= x1 <= hi[0] and lo[1] <= x2 <= hi[1]
            and lo[2] <= x3 <= hi[2])


def rk4_endpoint(fcode, foff, fconsts, fcoff, stack_need, x0, t0, interval_len,
                 controls, steps, lo, hi):
    progs = _split(fcode, foff, fconsts, fcoff)
    stack = [0.0] * stack_need
    fv = [0.0] * 9
    lo = lo.tolist()
    hi = hi.tolist()
    ctl = controls.tolist()
    x1, x2, x3 = x0.tolist()
    h = interval_len / steps
    half = h / 2.0
    sixth = h / 6.0
    for k in range(len(ctl)):
        u0, u1, u2 = ctl[k]
        for s in range(steps):
            _eval_progs(progs, x1, x2, x3, stack, fv)
            a1, a2, a3 = _frame_rhs(fv, u0, u1, u2)
            _eval_progs(progs, x1 + half * a1, x2 + half * a2, x3 + half * a3,
                        stack, fv)
            b1, b2, b3 = _frame_rhs(fv, u0, u1, u2)
            _eval_progs(progs, x1 + half * b1, x2 + half * b2, x3 + half * b3,
                        stack, fv)
            c1, c2, c3 = _frame_rhs(fv, u0, u1, u2)
            _eval_progs(progs, x1 + h * c1, x2 + h * c2, x3 + h * c3, stack, fv)
            d1, d2, d3 = _frame_rhs(fv, u0, u1, u2)
            x1 = x1 + sixth * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            x2 = x2 + sixth * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
            x3 = x3 + sixth * (a3 + 2.0 * b3 + 2.0 * c3 + d3)
            if not _inside(x1, x2, x3, lo, hi):
                t = t0 + (k * steps + s + 1) * h
                raise ChartExitError(
                    f"trajectory left the chart at t={t!r}", t=t,
                    state=np.array([x1, x2, x3]))
    return np.array([x1, x2, x3])


def rk4_record(fcode, foff, fconsts, fcoff, stack_need, x0, t0, interval_len,
               controls, steps, lo, hi):
    progs = _split(fcode, foff, fconsts, fcoff)
    stack = [0.0] * stack_need
    fv = [0.0] * 9
    lo_l = lo.tolist()
    hi_l = hi.tolist()
    ctl = controls.tolist()
    n_ctl = len(ctl)
    total = n_ctl * steps
    times = t0 + np.arange(total + 1) * (interval_len / steps)
    states = np.empty((total + 1, 3))
    vels = np.empty((total + 1, 3))
    x1, x2, x3 = x0.tolist()
    states[0] = x0
    _eval_progs(progs, x1, x2, x3, stack, fv)
    vels[0] = _frame_rhs(fv, *ctl[0])
    h = interval_len / steps
    half = h / 2.0
    sixth = h / 6.0
    idx = 0
    for k in range(n_ctl):
        u0, u1, u2 = ctl[k]
        for s in range(steps):
            _eval_progs(progs, x1, x2, x3, stack, fv)
            a1, a2, a3 = _frame_rhs(fv, u0, u1, u2)
            _eval_progs(progs, x1 + half * a1, x2 + half * a2, x3 + half * a3,
                        stack, fv)
            b1, b2, b3 = _frame_rhs(fv, u0, u1, u2)
            _eval_progs(progs, x1 + half * b1, x2 + half * b2, x3 + half * b3,
                        stack, fv)
            c1, c2, c3 = _frame_rhs(fv, u0, u1, u2)
            _eval_progs(progs, x1 + h * c1, x2 + h * c2, x3 + h * c3, stack, fv)
            d1, d2, d3 = _frame_rhs(fv, u0, u1, u2)
            x1 = x1 + sixth * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            x2 = x2 + sixth * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
            x3 = x3 + sixth * (a3 + 2.0 * b3 + 2.0 * c3 + d3)
            idx += 1
            if not _inside(x1, x2, x3, lo_l, hi_l):
                t = float(times[idx])
                raise ChartExitError(
                    f"trajectory left the chart at t={t!r}", t=t,
                    state=np.array([x1, x2, x3]))
            states[idx, 0] = x1
            states[idx, 1] = x2
            states[idx, 2] = x3
            _eval_progs(progs, x1, x2, x3, stack, fv)
            vels[idx] = _frame_rhs(fv, u0, u1, u2)
    return times, states, vels


def rk4_variational(fcode, foff, fconsts, fcoff, jcode, joff, jconsts, jcoff,
                    stack_need, x0, t0, interval_len, controls, steps, lo, hi):
    fprogs = _split(fcode, foff, fconsts, fcoff)
    jprogs = _split(jcode, joff, jconsts, jcoff)
    stack = [0.0] * stack_need
    fv = [0.0] * 9
    jv = [0.0] * 27
    lo_l = lo.tolist()
    hi_l = hi.tolist()
    ctl = controls.tolist()
    n_ctl = len(ctl)
    phis = np.empty((n_ctl, 3, 3))
    gs = np.empty((n_ctl, 3, 3))
    x = list(x0.tolist())
    h = interval_len / steps
    half = h / 2.0
    sixth = h / 6.0

    def deriv(y, u0, u1, u2):
        x1, x2, x3 = y[0], y[1], y[2]
        _eval_progs(fprogs, x1, x2, x3, stack, fv)
        _eval_progs(jprogs, x1, x2, x3, stack, jv)
        a = [0.0] * 9
        for r in range(3):
            for c in range(3):
                a[3 * r + c] = (u0 * jv[3 * r + c] + u1 * jv[9 + 3 * r + c]
                                + u2 * jv[18 + 3 * r + c])
        d = [0.0] * 21
        d[0], d[1], d[2] = _frame_rhs(fv, u0, u1, u2)
        for r in range(3):
            for c in range(3):
                # Phi block at 3.., G block at 12..
                d[3 + 3 * r + c] = (a[3 * r] * y[3 + c] + a[3 * r + 1] * y[6 + c]
                                    + a[3 * r + 2] * y[9 + c])
                d[12 + 3 * r + c] = (a[3 * r] * y[12 + c]
                                     + a[3 * r + 1] * y[15 + c]
                                     + a[3 * r + 2] * y[18 + c]
                                     + fv[3 * c + r])
        return d

    for k in range(n_ctl):
        u0, u1, u2 = ctl[k]
        y = [x[0], x[1], x[2],
             1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
             0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        for s in range(steps):
            k1 = deriv(y, u0, u1, u2)
            y2 = [y[i] + half * k1[i] for i in range(21)]
            k2 = deriv(y2, u0, u1, u2)
            y3 = [y[i] + half * k2[i] for i in range(21)]
            k3 = deriv(y3, u0, u1, u2)
            y4 = [y[i] + h * k3[i] for i in range(21)]
            k4 = deriv(y4, u0, u1, u2)
            y = [y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                 for i in range(21)]
            if not _inside(y[0], y[1], y[2], lo_l, hi_l):
                t = t0 + (k * steps + s + 1) * h
                raise ChartExitError(
                    f"trajectory left the chart at t={t!r}", t=t,
                    state=np.array(y[:3]))
        x = y[:3]
        phis[k] = np.array(y[3:12]).reshape(3, 3)
        gs[k] = np.array(y[12:21]).reshape(3, 3)
    return np.array(x), phis, gs


def _cross(ax, ay, az, bx, by, bz):
    return (ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx)


def _direction(fprogs, gprogs, x1, x2, x3, ref, cutoff, reg_tol, degen_tol,
               flip_tol, stack, fv, gv):
    """Unit characteristic direction at a point.

    Returns (status, dx, dy, dz, margin).  ref is None for canonical
    orientation or a 3-tuple to align against.
    """
    _eval_progs(fprogs, x1, x2, x3, stack, fv)
    c0 = (fv[0], fv[1], fv[2])
    c1 = (fv[3], fv[4], fv[5])
    c2 = (fv[6], fv[7], fv[8])
    p01 = _cross(*c0, *c1)
    p12 = _cross(*c1, *c2)
    p20 = _cross(*c2, *c0)
    n01 = p01[0] * p01[0] + p01[1] * p01[1] + p01[2] * p01[2]
    n12 = p12[0] * p12[0] + p12[1] * p12[1] + p12[2] * p12[2]
    n20 = p20[0] * p20[0] + p20[1] * p20[1] + p20[2] * p20[2]
    best, nbest = p01, n01
    if n12 > nbest:
        best, nbest = p12, n12
    if n20 > nbest:
        best, nbest = p20, n20
    colmax = max(c0[0] * c0[0] + c0[1] * c0[1] + c0[2] * c0[2],
                 c1[0] * c1[0] + c1[1] * c1[1] + c1[2] * c1[2],
                 c2[0] * c2[0] + c2[1] * c2[1] + c2[2] * c2[2])
    if colmax == 0.0 or math.sqrt(nbest) <= degen_tol * colmax:
        return CHAR_DEGENERATE, 0.0, 0.0, 0.0, 0.0
    nn = math.sqrt(nbest)
    nx, ny, nz = best[0] / nn, best[1] / nn, best[2] / nn
    _eval_progs(gprogs, x1, x2, x3, stack, gv)
    gn = math.sqrt(gv[0] * gv[0] + gv[1] * gv[1] + gv[2] * gv[2])
    if gn <= reg_tol:
        return CHAR_REG_FAIL, 0.0, 0.0, 0.0, 0.0
    gx, gy, gz = gv[0] / gn, gv[1] / gn, gv[2] / gn
    wx, wy, wz = _cross(nx, ny, nz, gx, gy, gz)
    margin = math.sqrt(wx * wx + wy * wy + wz * wz)
    if margin < cutoff:
        return CHAR_TANGENT, 0.0, 0.0, 0.0, margin
    dx, dy, dz = wx / margin, wy / margin, wz / margin
    if ref is None:
        ax, ay, az = abs(dx), abs(dy), abs(dz)
        m = ax
        j = 0
        if ay > m:
            m, j = ay, 1
        if az > m:
            m, j = az, 2
        comp = dx if j == 0 else (dy if j == 1 else dz)
        if comp < 0.0:
            dx, dy, dz = -dx, -dy, -dz
    else:
        dot = dx * ref[0] + dy * ref[1] + dz * ref[2]
        if -flip_tol <= dot <= flip_tol:
            return CHAR_FLIP, dx, dy, dz, margin
        if dot < 0.0:
            dx, dy, dz = -dx, -dy, -dz
    return CHAR_DONE, dx, dy, dz, margin


def rk4_characteristic(fcode, foff, fconsts, fcoff, gcode, goff, gconsts,
                       gcoff, dcode, dconsts, stack_need, x0, dt, n_steps,
                       cutoff, reg_tol, degen_tol, flip_tol, proj_tol, lo, hi):
    fprogs = _split(fcode, foff, fconsts, fcoff)
    gprogs = _split(gcode, goff, gconsts, gcoff)
    dprog = (dcode.tolist(), dconsts.tolist())
    stack = [0.0] * stack_need
    fv = [0.0] * 9
    gv = [0.0] * 3
    lo_l = lo.tolist()
    hi_l = hi.tolist()
    states = np.empty((n_steps + 1, 3))
    dirs = np.empty((n_steps + 1, 3))
    margins = np.empty(n_steps + 1)
    x1, x2, x3 = x0.tolist()
    states[0] = x0

    def direction(px, py, pz, ref):
        try:
            return _direction(fprogs, gprogs, px, py, pz, ref, cutoff, reg_tol,
                              degen_tol, flip_tol, stack, fv, gv)
        except EvaluationError:
            return CHAR_EVAL_ERROR, 0.0, 0.0, 0.0, 0.0

    st, dx, dy, dz, margin = direction(x1, x2, x3, None)
    dirs[0] = (dx, dy, dz)
    margins[0] = margin
    if st != CHAR_DONE:
        return (states[:1], dirs[:1], margins[:1], st, 0)

    half = dt / 2.0
    sixth = dt / 6.0
    done = 0
    status = CHAR_DONE
    for step in range(n_steps):
        ref = (dx, dy, dz)
        a1, a2, a3 = dx, dy, dz
        st, b1, b2, b3, _ = direction(x1 + half * a1, x2 + half * a2,
                                      x3 + half * a3, ref)
        if st != CHAR_DONE:
            status = st
            break
        st, c1, c2, c3, _ = direction(x1 + half * b1, x2 + half * b2,
                                      x3 + half * b3, ref)
        if st != CHAR_DONE:
            status = st
            break
        st, e1, e2, e3, _ = direction(x1 + dt * c1, x2 + dt * c2, x3 + dt * c3,
                                      ref)
        if st != CHAR_DONE:
            status = st
            break
        nx1 = x1 + sixth * (a1 + 2.0 * b1 + 2.0 * c1 + e1)
        nx2 = x2 + sixth * (a2 + 2.0 * b2 + 2.0 * c2 + e2)
        nx3 = x3 + sixth * (a3 + 2.0 * b3 + 2.0 * c3 + e3)
        # Newton projection along the gradient; the exact flow stays on the
        # level set, so one step is normally enough to hit proj_tol.
        ok = True
        for _ in range(5):
            try:
                d = _eval(dprog[0], dprog[1], nx1, nx2, nx3, stack)
            except EvaluationError:
                status = CHAR_EVAL_ERROR
                ok = False
                break
            if -proj_tol <= d <= proj_tol:
                break
            try:
                _eval_progs(gprogs, nx1, nx2, nx3, stack, gv)
            except EvaluationError:
                status = CHAR_EVAL_ERROR
                ok = False
                break
            gg = gv[0] * gv[0] + gv[1] * gv[1] + gv[2] * gv[2]
            if gg == 0.0:
                status = CHAR_REG_FAIL
                ok = False
                break
            scale = d / gg
            nx1 -= scale * gv[0]
            nx2 -= scale * gv[1]
            nx3 -= scale * gv[2]
        if not ok:
            break
        if not _inside(nx1, nx2, nx3, lo_l, hi_l):
            status = CHAR_CHART_EXIT
            break
        st, dx, dy, dz, margin = direction(nx1, nx2, nx3, ref)
        if st != CHAR_DONE:
            status = st
            break
        x1, x2, x3 = nx1, nx2, nx3
        done += 1
        states[done] = (x1, x2, x3)
        dirs[done] = (dx, dy, dz)
        margins[done] = margin
    return (states[:done + 1], dirs[:done + 1], margins[:done + 1], status,
            done)
