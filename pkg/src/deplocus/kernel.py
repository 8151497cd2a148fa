"""Numeric kernels: bytecode programs for scalar fields plus the fixed-step
integrators built on them.

Two interchangeable backends implement the same entry points: a Cython
extension (``deplocus._kernel``) and a pure-Python twin
(``deplocus._kernel_py``).  The compiled one is picked at import when
available; set ``DEPLOCUS_BACKEND=pure`` or ``=compiled`` to force a choice.
Both backends execute identical operation sequences (integer powers use the
same square-and-multiply loop, the extension is built with FP contraction
off), so results agree to the last bit on scalar paths.
"""
from __future__ import annotations

import os
from typing import NamedTuple, Sequence

import numpy as np

# opcode table shared with both backends; arg meaning in parentheses
OP_CONST = 0   # push consts[arg]
OP_VAR = 1     # push x[arg]
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5     # errors on exact zero divisor
OP_NEG = 6
OP_SIN = 7
OP_COS = 8
OP_EXP = 9
OP_POWI = 10   # integer exponent in arg
OP_MAX0 = 11
OP_STEP0 = 12

STACK_CAP = 256

# stop codes shared with rk4_characteristic
CHAR_DONE = 0
CHAR_CHART_EXIT = 1
CHAR_TANGENT = 2
CHAR_DEGENERATE = 3
CHAR_REG_FAIL = 4
CHAR_FLIP = 5
CHAR_EVAL_ERROR = 6


class Program(NamedTuple):
    """One compiled scalar field: flat (op, arg) int32 pairs + constants."""

    code: np.ndarray
    consts: np.ndarray
    stack_need: int


class Bundle(NamedTuple):
    """Several programs packed end to end for the integrator loops."""

    code: np.ndarray
    code_off: np.ndarray
    consts: np.ndarray
    const_off: np.ndarray
    stack_need: int
    count: int


def pack(programs: Sequence[Program]) -> Bundle:
    code_off = np.zeros(len(programs) + 1, dtype=np.int32)
    const_off = np.zeros(len(programs) + 1, dtype=np.int32)
    for i, p in enumerate(programs):
        code_off[i + 1] = code_off[i] + p.code.shape[0]
        const_off[i + 1] = const_off[i] + p.consts.shape[0]
    code = np.concatenate([p.code for p in programs]) if programs else np.zeros(0, np.int32)
    consts = np.concatenate([p.consts for p in programs]) if programs else np.zeros(0)
    need = max((p.stack_need for p in programs), default=1)
    return Bundle(np.ascontiguousarray(code, np.int32), code_off,
                  np.ascontiguousarray(consts, np.float64), const_off,
                  need, len(programs))


def _select_backend():
    forced = os.environ.get("DEPLOCUS_BACKEND", "").strip().lower()
    if forced in ("pure", "python"):
        from . import _kernel_py as backend
        return backend, "pure"
    try:
        from . import _kernel as backend  # type: ignore[attr-defined]
        return backend, "compiled"
    except ImportError:
        if forced == "compiled":
            raise
        from . import _kernel_py as backend
        return backend, "pure"


_backend, BACKEND = _select_backend()


def get_backend(name=None):
    """Return a backend module by name ("pure"/"compiled"), default active."""
    if name is None:
        return _backend
    name = name.lower()
    if name in ("pure", "python"):
        from . import _kernel_py
        return _kernel_py
    if name == "compiled":
        from . import _kernel  # type: ignore[attr-defined]
        return _kernel
    raise ValueError(f"unknown backend {name!r}")


def eval_scalar(prog: Program, x1, x2, x3, backend=None):
    be = backend or _backend
    return be.eval_scalar(prog.code, prog.consts, prog.stack_need, x1, x2, x3)


def eval_batch(prog: Program, pts, backend=None):
    be = backend or _backend
    return be.eval_batch(prog.code, prog.consts, prog.stack_need,
                         np.ascontiguousarray(pts, np.float64))


def rk4_endpoint(frame: Bundle, x0, t0, interval_len, controls, steps, lo, hi,
                 backend=None):
    be = backend or _backend
    return be.rk4_endpoint(frame.code, frame.code_off, frame.consts,
                           frame.const_off, frame.stack_need,
                           np.ascontiguousarray(x0, np.float64), float(t0),
                           float(interval_len),
                           np.ascontiguousarray(controls, np.float64),
                           int(steps),
                           np.ascontiguousarray(lo, np.float64),
                           np.ascontiguousarray(hi, np.float64))


def rk4_record(frame: Bundle, x0, t0, interval_len, controls, steps, lo, hi,
               backend=None):
    be = backend or _backend
    return be.rk4_record(frame.code, frame.code_off, frame.consts,
                         frame.const_off, frame.stack_need,
                         np.ascontiguousarray(x0, np.float64), float(t0),
                         float(interval_len),
                         np.ascontiguousarray(controls, np.float64),
                         int(steps),
                         np.ascontiguousarray(lo, np.float64),
                         np.ascontiguousarray(hi, np.float64))


def rk4_variational(frame: Bundle, jac: Bundle, x0, t0, interval_len, controls,
                    steps, lo, hi, backend=None):
    be = backend or _backend
    need = max(frame.stack_need, jac.stack_need)
    return be.rk4_variational(frame.code, frame.code_off, frame.consts,
                              frame.const_off, jac.code, jac.code_off,
                              jac.consts, jac.const_off, need,
                              np.ascontiguousarray(x0, np.float64), float(t0),
                              float(interval_len),
                              np.ascontiguousarray(controls, np.float64),
                              int(steps),
                              np.ascontiguousarray(lo, np.float64),
                              np.ascontiguousarray(hi, np.float64))


def rk4_characteristic(frame: Bundle, grad: Bundle, delta: Program, x0, dt,
                       n_steps, cutoff, reg_tol, degen_tol, flip_tol, proj_tol,
                       lo, hi, backend=None):
    be = backend or _backend
    need = max(frame.stack_need, grad.stack_need, delta.stack_need)
    return be.rk4_characteristic(frame.code, frame.code_off, frame.consts,
                                 frame.const_off, grad.code, grad.code_off,
                                 grad.consts, grad.const_off, delta.code,
                                 delta.consts, need,
                                 np.ascontiguousarray(x0, np.float64),
                                 float(dt), int(n_steps), float(cutoff),
                                 float(reg_tol), float(degen_tol),
                                 float(flip_tol), float(proj_tol),
                                 np.ascontiguousarray(lo, np.float64),
                                 np.ascontiguousarray(hi, np.float64))
