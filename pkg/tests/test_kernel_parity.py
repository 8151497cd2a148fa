"""Backend agreement: the compiled kernels and the pure-Python twins must run
the same operation sequences, so scalar and RK4 paths agree bit for bit."""
import os
import subprocess
import sys

import numpy as np
import pytest

from deplocus import kernel

from helpers import benign_model_system, smooth_random_field, UNIT_CHART

try:
    COMPILED = kernel.get_backend("compiled")
except ImportError:
    COMPILED = None

PURE = kernel.get_backend("pure")

needs_compiled = pytest.mark.skipif(
    COMPILED is None, reason="compiled extension not built")


@needs_compiled
def test_scalar_eval_bit_exact():
    rng = np.random.default_rng(7)
    for _ in range(100):
        f = smooth_random_field(rng)
        prog = f.program
        for _ in range(5):
            x = rng.uniform(-1.5, 1.5, size=3)
            a = kernel.eval_scalar(prog, *x, backend=COMPILED)
            b = kernel.eval_scalar(prog, *x, backend=PURE)
            assert a == b, f"{f}: {a!r} != {b!r} at {x}"


@needs_compiled
def test_batch_eval_matches_scalar_loop():
    rng = np.random.default_rng(8)
    pts = rng.uniform(-1.5, 1.5, size=(400, 3))
    for _ in range(20):
        f = smooth_random_field(rng)
        vals_c = kernel.eval_batch(f.program, pts, backend=COMPILED)
        vals_p = kernel.eval_batch(f.program, pts, backend=PURE)
        scale = 1.0 + np.abs(vals_p)
        assert np.max(np.abs(vals_c - vals_p) / scale) < 1e-14


@needs_compiled
def test_rk4_endpoint_bit_exact():
    rng = np.random.default_rng(9)
    for trial in range(10):
        sys_ = benign_model_system(rng)
        frame = sys_.frame_bundle
        x0 = rng.uniform(-0.2, 0.2, size=3)
        controls = rng.uniform(-1, 1, size=(4, 3))
        args = (frame, x0, 0.0, 0.05, controls, 20,
                np.array(sys_.chart.lo), np.array(sys_.chart.hi))
        a = kernel.rk4_endpoint(*args, backend=COMPILED)
        b = kernel.rk4_endpoint(*args, backend=PURE)
        assert np.array_equal(a, b), f"trial {trial}: {a - b}"


@needs_compiled
def test_rk4_record_bit_exact():
    rng = np.random.default_rng(10)
    sys_ = benign_model_system(rng)
    x0 = np.zeros(3)
    controls = np.array([[0.3, -0.7, 0.1], [0.2, 0.5, -0.4]])
    args = (sys_.frame_bundle, x0, 0.0, 0.1, controls, 40,
            np.array(sys_.chart.lo), np.array(sys_.chart.hi))
    tc, sc, vc = kernel.rk4_record(*args, backend=COMPILED)
    tp, sp, vp = kernel.rk4_record(*args, backend=PURE)
    assert np.array_equal(tc, tp)
    assert np.array_equal(sc, sp)
    assert np.array_equal(vc, vp)


@needs_compiled
def test_rk4_variational_bit_exact():
    rng = np.random.default_rng(11)
    for _ in range(5):
        sys_ = benign_model_system(rng)
        x0 = rng.uniform(-0.1, 0.1, size=3)
        controls = rng.uniform(-1, 1, size=(4, 3))
        args = (sys_.frame_bundle, sys_.jac_bundle, x0, 0.0, 0.08, controls,
                20, np.array(sys_.chart.lo), np.array(sys_.chart.hi))
        xc, pc, gc = kernel.rk4_variational(*args, backend=COMPILED)
        xp, pp, gp = kernel.rk4_variational(*args, backend=PURE)
        assert np.array_equal(xc, xp)
        assert np.array_equal(pc, pp)
        assert np.array_equal(gc, gp)


@needs_compiled
def test_rk4_characteristic_bit_exact():
    rng = np.random.default_rng(12)
    for _ in range(5):
        sys_ = benign_model_system(rng)
        args = (sys_.frame_bundle, sys_.grad_bundle,
                sys_.dependence_function.program,
                np.zeros(3), 1e-2, 60, 1e-4, 1e-8, 1e-12, 0.0, 1e-10,
                np.array(sys_.chart.lo), np.array(sys_.chart.hi))
        out_c = kernel.rk4_characteristic(*args, backend=COMPILED)
        out_p = kernel.rk4_characteristic(*args, backend=PURE)
        assert out_c[3] == out_p[3]          # stop status
        assert out_c[4] == out_p[4]          # steps taken
        for c, p in zip(out_c[:3], out_p[:3]):
            assert np.array_equal(c, p)


@needs_compiled
def test_division_by_zero_raised_identically():
    from deplocus.errors import EvaluationError
    from deplocus.expr import parse_expr

    prog = parse_expr("1 / x1").program
    for be in (COMPILED, PURE):
        with pytest.raises(EvaluationError):
            kernel.eval_scalar(prog, 0.0, 1.0, 1.0, backend=be)


def test_env_override_selects_pure():
    env = dict(os.environ, DEPLOCUS_BACKEND="pure")
    out = subprocess.run(
        [sys.executable, "-c",
         "from deplocus import kernel; print(kernel.BACKEND)"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "pure"


@needs_compiled
def test_env_override_selects_compiled():
    env = dict(os.environ, DEPLOCUS_BACKEND="compiled")
    out = subprocess.run(
        [sys.executable, "-c",
         "from deplocus import kernel; print(kernel.BACKEND)"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "compiled"


def test_get_backend_unknown_name():
    with pytest.raises(ValueError):
        kernel.get_backend("gpu")
