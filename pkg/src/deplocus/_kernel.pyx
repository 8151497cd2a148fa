# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend.  Keep in lockstep with deplocus._kernel_py.

Every arithmetic sequence here mirrors the pure backend expression for
expression; together with -ffp-contract=off at build time this makes the two
backends agree bit for bit on scalar paths.
"""
from libc.math cimport sin, cos, exp, sqrt

import numpy as np

cimport numpy as cnp

from .errors import ChartExitError, EvaluationError

cnp.import_array()

DEF STACK_CAP = 256

cdef enum:
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

cdef enum:
    C_DONE = 0
    C_CHART_EXIT = 1
    C_TANGENT = 2
    C_DEGENERATE = 3
    C_REG_FAIL = 4
    C_FLIP = 5
    C_EVAL_ERROR = 6

# err codes: 1 division by zero, 2 zero to a negative power
cdef double _eval_one(const cnp.int32_t* code, int ncode, const double* consts,
                      double x1, double x2, double x3, double* stack,
                      int* err) noexcept nogil:
    cdef int i = 0, sp = 0, op, arg
    cdef double b, acc, base
    cdef long m
    while i < ncode:
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
                err[0] = 1
                return 0.0
            stack[sp - 1] = stack[sp - 1] / b
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_POWI:
            base = stack[sp - 1]
            m = -<long>arg if arg < 0 else <long>arg
            acc = 1.0
            b = base
            while m:
                if m & 1:
                    acc *= b
                m >>= 1
                if m:
                    b *= b
            if arg < 0:
                if acc == 0.0:
                    err[0] = 2
                    return 0.0
                acc = 1.0 / acc
            stack[sp - 1] = acc
        elif op == OP_SIN:
            stack[sp - 1] = sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = cos(stack[sp - 1])
        elif op == OP_EXP:
            stack[sp - 1] = exp(stack[sp - 1])
        elif op == OP_MAX0:
            if stack[sp - 1] <= 0.0:
                stack[sp - 1] = 0.0
        elif op == OP_STEP0:
            stack[sp - 1] = 1.0 if stack[sp - 1] > 0.0 else 0.0
        else:
            err[0] = 3
            return 0.0
    return stack[0]


cdef int _eval_progs(const cnp.int32_t* code, const cnp.int32_t* coff,
                     const double* consts, const cnp.int32_t* kcoff,
                     int nprogs, double x1, double x2, double x3,
                     double* stack, double* out) noexcept nogil:
    cdef int i, err = 0
    for i in range(nprogs):
        out[i] = _eval_one(code + coff[i], coff[i + 1] - coff[i],
                           consts + kcoff[i], x1, x2, x3, stack, &err)
        if err:
            return err
    return 0


cdef inline void _rhs(const double* fv, double u0, double u1, double u2,
                      double* d) noexcept nogil:
    d[0] = u0 * fv[0] + u1 * fv[3] + u2 * fv[6]
    d[1] = u0 * fv[1] + u1 * fv[4] + u2 * fv[7]
    d[2] = u0 * fv[2] + u1 * fv[5] + u2 * fv[8]


cdef inline bint _inside(double x1, double x2, double x3, const double* lo,
                         const double* hi) noexcept nogil:
    return (lo[0] <= x1 <= hi[0] and lo[1] <= x2 <= hi[1]
            and lo[2] <= x3 <= hi[2])


cdef _raise_eval(int err):
    if err == 1:
        raise EvaluationError("division by zero")
    if err == 2:
        raise EvaluationError("zero raised to a negative power")
    raise EvaluationError("bad opcode")


cdef inline const double* _dptr(const double[::1] v) noexcept nogil:
    if v.shape[0] > 0:
        return &v[0]
    return NULL


def eval_scalar(const cnp.int32_t[::1] code, const double[::1] consts,
                int stack_need, double x1, double x2, double x3):
    cdef double stack[STACK_CAP]
    cdef int err = 0
    cdef double v
    if stack_need > STACK_CAP:
        raise ValueError("program too deep")
    v = _eval_one(&code[0], <int> code.shape[0], _dptr(consts), x1, x2, x3,
                  stack, &err)
    if err:
        _raise_eval(err)
    return v


def eval_batch(const cnp.int32_t[::1] code, const double[::1] consts,
               int stack_need, const double[:, ::1] pts):
    cdef Py_ssize_t n = pts.shape[0], i
    cdef double stack[STACK_CAP]
    cdef int err = 0
    if stack_need > STACK_CAP:
        raise ValueError("program too deep")
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef const double* kp = _dptr(consts)
    cdef const cnp.int32_t* cp = &code[0]
    cdef int ncode = <int> code.shape[0]
    for i in range(n):
        out[i] = _eval_one(cp, ncode, kp, pts[i, 0], pts[i, 1], pts[i, 2],
                           stack, &err)
        if err:
            pt = tuple(np.asarray(pts[i]))
            if err == 1:
                raise EvaluationError(f"division by zero at point {pt}")
            if err == 2:
                raise EvaluationError(
                    f"zero raised to a negative power at point {pt}")
            _raise_eval(err)
    return out_arr


def rk4_endpoint(const cnp.int32_t[::1] fcode, const cnp.int32_t[::1] foff,
                 const double[::1] fconsts, const cnp.int32_t[::1] fcoff,
                 int stack_need, const double[::1] x0, double t0,
                 double interval_len, const double[:, ::1] controls, int steps,
                 const double[::1] lo, const double[::1] hi):
    cdef double stack[STACK_CAP]
    cdef double fv[9]
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double x1, x2, x3, u0, u1, u2, h, half, sixth, t
    cdef int k, s, err, nprogs = <int> (foff.shape[0] - 1)
    cdef Py_ssize_t n_ctl = controls.shape[0]
    cdef const cnp.int32_t* cp = &fcode[0]
    cdef const cnp.int32_t* op = &foff[0]
    cdef const double* kp = _dptr(fconsts)
    cdef const cnp.int32_t* kop = &fcoff[0]
    cdef const double* lop = &lo[0]
    cdef const double* hip = &hi[0]
    if stack_need > STACK_CAP:
        raise ValueError("program too deep")
    x1 = x0[0]
    x2 = x0[1]
    x3 = x0[2]
    h = interval_len / steps
    half = h / 2.0
    sixth = h / 6.0
    for k in range(n_ctl):
        u0 = controls[k, 0]
        u1 = controls[k, 1]
        u2 = controls[k, 2]
        for s in range(steps):
            err = _eval_progs(cp, op, kp, kop, nprogs, x1, x2, x3, stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k1)
            err = _eval_progs(cp, op, kp, kop, nprogs, x1 + half * k1[0],
                              x2 + half * k1[1], x3 + half * k1[2], stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k2)
            err = _eval_progs(cp, op, kp, kop, nprogs, x1 + half * k2[0],
                              x2 + half * k2[1], x3 + half * k2[2], stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k3)
            err = _eval_progs(cp, op, kp, kop, nprogs, x1 + h * k3[0],
                              x2 + h * k3[1], x3 + h * k3[2], stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k4)
            x1 = x1 + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            x2 = x2 + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            x3 = x3 + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            if not _inside(x1, x2, x3, lop, hip):
                t = t0 + (k * steps + s + 1) * h
                raise ChartExitError(f"trajectory left the chart at t={t!r}",
                                     t=t, state=np.array([x1, x2, x3]))
    return np.array([x1, x2, x3])


def rk4_record(const cnp.int32_t[::1] fcode, const cnp.int32_t[::1] foff,
               const double[::1] fconsts, const cnp.int32_t[::1] fcoff,
               int stack_need, const double[::1] x0, double t0,
               double interval_len, const double[:, ::1] controls, int steps,
               const double[::1] lo, const double[::1] hi):
    cdef double stack[STACK_CAP]
    cdef double fv[9]
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double v[3]
    cdef double x1, x2, x3, u0, u1, u2, h, half, sixth, t
    cdef int k, s, err, nprogs = <int> (foff.shape[0] - 1)
    cdef Py_ssize_t n_ctl = controls.shape[0], idx = 0, total
    cdef const cnp.int32_t* cp = &fcode[0]
    cdef const cnp.int32_t* op = &foff[0]
    cdef const double* kp = _dptr(fconsts)
    cdef const cnp.int32_t* kop = &fcoff[0]
    cdef const double* lop = &lo[0]
    cdef const double* hip = &hi[0]
    if stack_need > STACK_CAP:
        raise ValueError("program too deep")
    total = n_ctl * steps
    h = interval_len / steps
    times_arr = t0 + np.arange(total + 1) * h
    states_arr = np.empty((total + 1, 3))
    vels_arr = np.empty((total + 1, 3))
    cdef double[:, ::1] states = states_arr
    cdef double[:, ::1] vels = vels_arr
    x1 = x0[0]
    x2 = x0[1]
    x3 = x0[2]
    states[0, 0] = x1
    states[0, 1] = x2
    states[0, 2] = x3
    err = _eval_progs(cp, op, kp, kop, nprogs, x1, x2, x3, stack, fv)
    if err:
        _raise_eval(err)
    _rhs(fv, controls[0, 0], controls[0, 1], controls[0, 2], v)
    vels[0, 0] = v[0]
    vels[0, 1] = v[1]
    vels[0, 2] = v[2]
    half = h / 2.0
    sixth = h / 6.0
    for k in range(n_ctl):
        u0 = controls[k, 0]
        u1 = controls[k, 1]
        u2 = controls[k, 2]
        for s in range(steps):
            err = _eval_progs(cp, op, kp, kop, nprogs, x1, x2, x3, stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k1)
            err = _eval_progs(cp, op, kp, kop, nprogs, x1 + half * k1[0],
                              x2 + half * k1[1], x3 + half * k1[2], stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k2)
            err = _eval_progs(cp, op, kp, kop, nprogs, x1 + half * k2[0],
                              x2 + half * k2[1], x3 + half * k2[2], stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k3)
            err = _eval_progs(cp, op, kp, kop, nprogs, x1 + h * k3[0],
                              x2 + h * k3[1], x3 + h * k3[2], stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, k4)
            x1 = x1 + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            x2 = x2 + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            x3 = x3 + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            idx += 1
            if not _inside(x1, x2, x3, lop, hip):
                t = times_arr[idx]
                raise ChartExitError(f"trajectory left the chart at t={t!r}",
                                     t=t, state=np.array([x1, x2, x3]))
            states[idx, 0] = x1
            states[idx, 1] = x2
            states[idx, 2] = x3
            err = _eval_progs(cp, op, kp, kop, nprogs, x1, x2, x3, stack, fv)
            if err:
                _raise_eval(err)
            _rhs(fv, u0, u1, u2, v)
            vels[idx, 0] = v[0]
            vels[idx, 1] = v[1]
            vels[idx, 2] = v[2]
    return times_arr, states_arr, vels_arr


def rk4_variational(const cnp.int32_t[::1] fcode, const cnp.int32_t[::1] foff,
                    const double[::1] fconsts, const cnp.int32_t[::1] fcoff,
                    const cnp.int32_t[::1] jcode, const cnp.int32_t[::1] joff,
                    const double[::1] jconsts, const cnp.int32_t[::1] jcoff,
                    int stack_need, const double[::1] x0, double t0,
                    double interval_len, const double[:, ::1] controls,
                    int steps, const double[::1] lo, const double[::1] hi):
    cdef double stack[STACK_CAP]
    cdef double fv[9]
    cdef double jv[27]
    cdef double a[9]
    cdef double y[21]
    cdef double y2[21]
    cdef double k1[21]
    cdef double k2[21]
    cdef double k3[21]
    cdef double k4[21]
    cdef double x1, x2, x3, u0, u1, u2, h, half, sixth, t
    cdef int k, s, i, r, c, err
    cdef int nf = <int> (foff.shape[0] - 1), nj = <int> (joff.shape[0] - 1)
    cdef Py_ssize_t n_ctl = controls.shape[0]
    cdef const cnp.int32_t* fcp = &fcode[0]
    cdef const cnp.int32_t* fop = &foff[0]
    cdef const double* fkp = _dptr(fconsts)
    cdef const cnp.int32_t* fkop = &fcoff[0]
    cdef const cnp.int32_t* jcp = &jcode[0]
    cdef const cnp.int32_t* jop = &joff[0]
    cdef const double* jkp = _dptr(jconsts)
    cdef const cnp.int32_t* jkop = &jcoff[0]
    cdef const double* lop = &lo[0]
    cdef const double* hip = &hi[0]
    if stack_need > STACK_CAP:
        raise ValueError("program too deep")
    endpoint_arr = np.empty(3)
    phis_arr = np.empty((n_ctl, 3, 3))
    gs_arr = np.empty((n_ctl, 3, 3))
    cdef double[:, :, ::1] phis = phis_arr
    cdef double[:, :, ::1] gs = gs_arr
    x1 = x0[0]
    x2 = x0[1]
    x3 = x0[2]
    h = interval_len / steps
    half = h / 2.0
    sixth = h / 6.0
    for k in range(n_ctl):
        u0 = controls[k, 0]
        u1 = controls[k, 1]
        u2 = controls[k, 2]
        y[0] = x1
        y[1] = x2
        y[2] = x3
        for i in range(3, 21):
            y[i] = 0.0
        y[3] = 1.0
        y[7] = 1.0
        y[11] = 1.0
        for s in range(steps):
            err = _vderiv(fcp, fop, fkp, fkop, nf, jcp, jop, jkp, jkop, nj,
                          y, u0, u1, u2, stack, fv, jv, a, k1)
            if err:
                _raise_eval(err)
            for i in range(21):
                y2[i] = y[i] + half * k1[i]
            err = _vderiv(fcp, fop, fkp, fkop, nf, jcp, jop, jkp, jkop, nj,
                          y2, u0, u1, u2, stack, fv, jv, a, k2)
            if err:
                _raise_eval(err)
            for i in range(21):
                y2[i] = y[i] + half * k2[i]
            err = _vderiv(fcp, fop, fkp, fkop, nf, jcp, jop, jkp, jkop, nj,
                          y2, u0, u1, u2, stack, fv, jv, a, k3)
            if err:
                _raise_eval(err)
            for i in range(21):
                y2[i] = y[i] + h * k3[i]
            err = _vderiv(fcp, fop, fkp, fkop, nf, jcp, jop, jkp, jkop, nj,
                          y2, u0, u1, u2, stack, fv, jv, a, k4)
            if err:
                _raise_eval(err)
            for i in range(21):
                y[i] = y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i]
                                       + k4[i])
            if not _inside(y[0], y[1], y[2], lop, hip):
                t = t0 + (k * steps + s + 1) * h
                raise ChartExitError(f"trajectory left the chart at t={t!r}",
                                     t=t, state=np.array([y[0], y[1], y[2]]))
        x1 = y[0]
        x2 = y[1]
        x3 = y[2]
        for r in range(3):
            for c in range(3):
                phis[k, r, c] = y[3 + 3 * r + c]
                gs[k, r, c] = y[12 + 3 * r + c]
    endpoint_arr[0] = x1
    endpoint_arr[1] = x2
    endpoint_arr[2] = x3
    return endpoint_arr, phis_arr, gs_arr


cdef int _vderiv(const cnp.int32_t* fcp, const cnp.int32_t* fop,
                 const double* fkp, const cnp.int32_t* fkop, int nf,
                 const cnp.int32_t* jcp, const cnp.int32_t* jop,
                 const double* jkp, const cnp.int32_t* jkop, int nj,
                 const double* y, double u0, double u1, double u2,
                 double* stack, double* fv, double* jv, double* a,
                 double* d) noexcept nogil:
    cdef int err, r, c
    err = _eval_progs(fcp, fop, fkp, fkop, nf, y[0], y[1], y[2], stack, fv)
    if err:
        return err
    err = _eval_progs(jcp, jop, jkp, jkop, nj, y[0], y[1], y[2], stack, jv)
    if err:
        return err
    for r in range(3):
        for c in range(3):
            a[3 * r + c] = (u0 * jv[3 * r + c] + u1 * jv[9 + 3 * r + c]
                            + u2 * jv[18 + 3 * r + c])
    _rhs(fv, u0, u1, u2, d)
    for r in range(3):
        for c in range(3):
            d[3 + 3 * r + c] = (a[3 * r] * y[3 + c] + a[3 * r + 1] * y[6 + c]
                                + a[3 * r + 2] * y[9 + c])
            d[12 + 3 * r + c] = (a[3 * r] * y[12 + c]
                                 + a[3 * r + 1] * y[15 + c]
                                 + a[3 * r + 2] * y[18 + c] + fv[3 * c + r])
    return 0


cdef int _direction_c(const cnp.int32_t* fcp, const cnp.int32_t* fop,
                      const double* fkp, const cnp.int32_t* fkop, int nf,
                      const cnp.int32_t* gcp, const cnp.int32_t* gop,
                      const double* gkp, const cnp.int32_t* gkop, int ng,
                      double x1, double x2, double x3, const double* ref,
                      double cutoff, double reg_tol, double degen_tol,
                      double flip_tol, double* stack, double* fv, double* gv,
                      double* dout, double* margin_out) noexcept nogil:
    cdef double p01[3]
    cdef double p12[3]
    cdef double p20[3]
    cdef double n01, n12, n20, nbest, colmax, c, nn
    cdef double nx, ny, nz, gn, gx, gy, gz, wx, wy, wz, margin
    cdef double dx, dy, dz, ax, ay, az, m, comp, dot
    cdef int err, j
    err = _eval_progs(fcp, fop, fkp, fkop, nf, x1, x2, x3, stack, fv)
    if err:
        return C_EVAL_ERROR
    p01[0] = fv[1] * fv[5] - fv[2] * fv[4]
    p01[1] = fv[2] * fv[3] - fv[0] * fv[5]
    p01[2] = fv[0] * fv[4] - fv[1] * fv[3]
    p12[0] = fv[4] * fv[8] - fv[5] * fv[7]
    p12[1] = fv[5] * fv[6] - fv[3] * fv[8]
    p12[2] = fv[3] * fv[7] - fv[4] * fv[6]
    p20[0] = fv[7] * fv[2] - fv[8] * fv[1]
    p20[1] = fv[8] * fv[0] - fv[6] * fv[2]
    p20[2] = fv[6] * fv[1] - fv[7] * fv[0]
    n01 = p01[0] * p01[0] + p01[1] * p01[1] + p01[2] * p01[2]
    n12 = p12[0] * p12[0] + p12[1] * p12[1] + p12[2] * p12[2]
    n20 = p20[0] * p20[0] + p20[1] * p20[1] + p20[2] * p20[2]
    nbest = n01
    nx = p01[0]
    ny = p01[1]
    nz = p01[2]
    if n12 > nbest:
        nbest = n12
        nx = p12[0]
        ny = p12[1]
        nz = p12[2]
    if n20 > nbest:
        nbest = n20
        nx = p20[0]
        ny = p20[1]
        nz = p20[2]
    colmax = fv[0] * fv[0] + fv[1] * fv[1] + fv[2] * fv[2]
    c = fv[3] * fv[3] + fv[4] * fv[4] + fv[5] * fv[5]
    if c > colmax:
        colmax = c
    c = fv[6] * fv[6] + fv[7] * fv[7] + fv[8] * fv[8]
    if c > colmax:
        colmax = c
    if colmax == 0.0 or sqrt(nbest) <= degen_tol * colmax:
        return C_DEGENERATE
    nn = sqrt(nbest)
    nx = nx / nn
    ny = ny / nn
    nz = nz / nn
    err = _eval_progs(gcp, gop, gkp, gkop, ng, x1, x2, x3, stack, gv)
    if err:
        return C_EVAL_ERROR
    gn = sqrt(gv[0] * gv[0] + gv[1] * gv[1] + gv[2] * gv[2])
    if gn <= reg_tol:
        return C_REG_FAIL
    gx = gv[0] / gn
    gy = gv[1] / gn
    gz = gv[2] / gn
    wx = ny * gz - nz * gy
    wy = nz * gx - nx * gz
    wz = nx * gy - ny * gx
    margin = sqrt(wx * wx + wy * wy + wz * wz)
    margin_out[0] = margin
    if margin < cutoff:
        return C_TANGENT
    dx = wx / margin
    dy = wy / margin
    dz = wz / margin
    if ref == NULL:
        ax = -dx if dx < 0.0 else dx
        ay = -dy if dy < 0.0 else dy
        az = -dz if dz < 0.0 else dz
        m = ax
        j = 0
        if ay > m:
            m = ay
            j = 1
        if az > m:
            m = az
            j = 2
        comp = dx if j == 0 else (dy if j == 1 else dz)
        if comp < 0.0:
            dx = -dx
            dy = -dy
            dz = -dz
    else:
        dot = dx * ref[0] + dy * ref[1] + dz * ref[2]
        if -flip_tol <= dot <= flip_tol:
            dout[0] = dx
            dout[1] = dy
            dout[2] = dz
            return C_FLIP
        if dot < 0.0:
            dx = -dx
            dy = -dy
            dz = -dz
    dout[0] = dx
    dout[1] = dy
    dout[2] = dz
    return C_DONE


def rk4_characteristic(const cnp.int32_t[::1] fcode,
                       const cnp.int32_t[::1] foff,
                       const double[::1] fconsts,
                       const cnp.int32_t[::1] fcoff,
                       const cnp.int32_t[::1] gcode,
                       const cnp.int32_t[::1] goff,
                       const double[::1] gconsts,
                       const cnp.int32_t[::1] gcoff,
                       const cnp.int32_t[::1] dcode,
                       const double[::1] dconsts, int stack_need,
                       const double[::1] x0, double dt, int n_steps,
                       double cutoff, double reg_tol, double degen_tol,
                       double flip_tol, double proj_tol, const double[::1] lo,
                       const double[::1] hi):
    cdef double stack[STACK_CAP]
    cdef double fv[9]
    cdef double gv[3]
    cdef double dvec[3]
    cdef double ref[3]
    cdef double x1, x2, x3, margin, half, sixth
    cdef double a1, a2, a3, b1, b2, b3, c1, c2, c3, e1, e2, e3
    cdef double nx1, nx2, nx3, dx, dy, dz, dval, gg, scale
    cdef int status, st, step, it, err, done = 0
    cdef bint ok
    cdef int nf = <int> (foff.shape[0] - 1), ng = <int> (goff.shape[0] - 1)
    cdef const cnp.int32_t* fcp = &fcode[0]
    cdef const cnp.int32_t* fop = &foff[0]
    cdef const double* fkp = _dptr(fconsts)
    cdef const cnp.int32_t* fkop = &fcoff[0]
    cdef const cnp.int32_t* gcp = &gcode[0]
    cdef const cnp.int32_t* gop = &goff[0]
    cdef const double* gkp = _dptr(gconsts)
    cdef const cnp.int32_t* gkop = &gcoff[0]
    cdef const cnp.int32_t* dcp = &dcode[0]
    cdef int ndc = <int> dcode.shape[0]
    cdef const double* dkp = _dptr(dconsts)
    cdef const double* lop = &lo[0]
    cdef const double* hip = &hi[0]
    if stack_need > STACK_CAP:
        raise ValueError("program too deep")
    states_arr = np.empty((n_steps + 1, 3))
    dirs_arr = np.empty((n_steps + 1, 3))
    margins_arr = np.empty(n_steps + 1)
    cdef double[:, ::1] states = states_arr
    cdef double[:, ::1] dirs = dirs_arr
    cdef double[::1] margins = margins_arr
    x1 = x0[0]
    x2 = x0[1]
    x3 = x0[2]
    states[0, 0] = x1
    states[0, 1] = x2
    states[0, 2] = x3
    margin = 0.0
    dvec[0] = 0.0
    dvec[1] = 0.0
    dvec[2] = 0.0
    st = _direction_c(fcp, fop, fkp, fkop, nf, gcp, gop, gkp, gkop, ng,
                      x1, x2, x3, NULL, cutoff, reg_tol, degen_tol, flip_tol,
                      stack, fv, gv, dvec, &margin)
    dirs[0, 0] = dvec[0]
    dirs[0, 1] = dvec[1]
    dirs[0, 2] = dvec[2]
    margins[0] = margin
    if st != C_DONE:
        return (states_arr[:1], dirs_arr[:1], margins_arr[:1], st, 0)
    dx = dvec[0]
    dy = dvec[1]
    dz = dvec[2]
    half = dt / 2.0
    sixth = dt / 6.0
    status = C_DONE
    for step in range(n_steps):
        ref[0] = dx
        ref[1] = dy
        ref[2] = dz
        a1 = dx
        a2 = dy
        a3 = dz
        st = _direction_c(fcp, fop, fkp, fkop, nf, gcp, gop, gkp, gkop, ng,
                          x1 + half * a1, x2 + half * a2, x3 + half * a3, ref,
                          cutoff, reg_tol, degen_tol, flip_tol, stack, fv, gv,
                          dvec, &margin)
        if st != C_DONE:
            status = st
            break
        b1 = dvec[0]
        b2 = dvec[1]
        b3 = dvec[2]
        st = _direction_c(fcp, fop, fkp, fkop, nf, gcp, gop, gkp, gkop, ng,
                          x1 + half * b1, x2 + half * b2, x3 + half * b3, ref,
                          cutoff, reg_tol, degen_tol, flip_tol, stack, fv, gv,
                          dvec, &margin)
        if st != C_DONE:
            status = st
            break
        c1 = dvec[0]
        c2 = dvec[1]
        c3 = dvec[2]
        st = _direction_c(fcp, fop, fkp, fkop, nf, gcp, gop, gkp, gkop, ng,
                          x1 + dt * c1, x2 + dt * c2, x3 + dt * c3, ref,
                          cutoff, reg_tol, degen_tol, flip_tol, stack, fv, gv,
                          dvec, &margin)
        if st != C_DONE:
            status = st
            break
        e1 = dvec[0]
        e2 = dvec[1]
        e3 = dvec[2]
        nx1 = x1 + sixth * (a1 + 2.0 * b1 + 2.0 * c1 + e1)
        nx2 = x2 + sixth * (a2 + 2.0 * b2 + 2.0 * c2 + e2)
        nx3 = x3 + sixth * (a3 + 2.0 * b3 + 2.0 * c3 + e3)
        ok = True
        for it in range(5):
            err = 0
            dval = _eval_one(dcp, ndc, dkp, nx1, nx2, nx3, stack, &err)
            if err:
                status = C_EVAL_ERROR
                ok = False
                break
            if -proj_tol <= dval <= proj_tol:
                break
            err = _eval_progs(gcp, gop, gkp, gkop, ng, nx1, nx2, nx3, stack,
                              gv)
            if err:
                status = C_EVAL_ERROR
                ok = False
                break
            gg = gv[0] * gv[0] + gv[1] * gv[1] + gv[2] * gv[2]
            if gg == 0.0:
                status = C_REG_FAIL
                ok = False
                break
            scale = dval / gg
            nx1 -= scale * gv[0]
            nx2 -= scale * gv[1]
            nx3 -= scale * gv[2]
        if not ok:
            break
        if not _inside(nx1, nx2, nx3, lop, hip):
            status = C_CHART_EXIT
            break
        st = _direction_c(fcp, fop, fkp, fkop, nf, gcp, gop, gkp, gkop, ng,
                          nx1, nx2, nx3, ref, cutoff, reg_tol, degen_tol,
                          flip_tol, stack, fv, gv, dvec, &margin)
        if st != C_DONE:
            status = st
            break
        dx = dvec[0]
        dy = dvec[1]
        dz = dvec[2]
        x1 = nx1
        x2 = nx2
        x3 = nx3
        done += 1
        states[done, 0] = x1
        states[done, 1] = x2
        states[done, 2] = x3
        dirs[done, 0] = dx
        dirs[done, 1] = dy
        dirs[done, 2] = dz
        margins[done] = margin
    return (states_arr[:done + 1], dirs_arr[:done + 1], margins_arr[:done + 1],
            status, done)
