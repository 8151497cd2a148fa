import numpy as np
import pytest

from deplocus import (Box, ControlSignal, build_model_system,
                      endpoint_jacobian, endpoint_map,
                      integrate_characteristic, integrate_trajectory,
                      singular_controls_along, singularity_verdict)
from deplocus.errors import ChartExitError

from helpers import UNIT_CHART, WIDE_CHART, benign_model_system


def constant_signal(u, T=1.0, n=4):
    return ControlSignal(t0=0.0, t1=T, values=np.tile(u, (n, 1)))


# -- ControlSignal -----------------------------------------------------------

def test_signal_validation():
    with pytest.raises(ValueError):
        ControlSignal(t0=1.0, t1=0.0, values=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ControlSignal(t0=0.0, t1=1.0, values=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ControlSignal(t0=0.0, t1=1.0, values=np.full((2, 3), 100.0))
    sig = constant_signal([0.0, 1.0, 0.0], T=2.0, n=5)
    assert sig.n_intervals == 5
    assert sig.interval_length == pytest.approx(0.4)
    assert np.allclose(sig.grid(), np.linspace(0, 2, 6))


def test_signal_from_samples_midpoints():
    # linear ramp u2(t) = t resampled onto 2 intervals: midpoint values
    times = np.linspace(0.0, 1.0, 11)
    samples = np.column_stack([np.zeros(11), times, np.zeros(11)])
    sig = ControlSignal.from_samples(times, samples, 2)
    assert sig.values.shape == (2, 3)
    assert sig.values[0, 1] == pytest.approx(0.25)
    assert sig.values[1, 1] == pytest.approx(0.75)


# -- integration oracles -------------------------------------------------------

def test_endpoint_constant_translation():
    # X1 = (1, 0, P) with P = 0: control (1, 0, 0) translates along x1
    sys = build_model_system("0", "0", WIDE_CHART)
    sig = constant_signal([1.0, 0.0, 0.0], T=0.5)
    end = endpoint_map(sys, np.zeros(3), sig)
    assert np.allclose(end, [0.5, 0.0, 0.0], atol=1e-14)


def test_endpoint_quadratic_flow_exact():
    # u = e2: dx2/dt = 1, dx3/dt = x2 -> x3(T) = T^2/2, exactly representable
    # by fourth-order steps
    sys = build_model_system("0", "x2", WIDE_CHART)
    sig = constant_signal([0.0, 1.0, 0.0], T=1.0)
    end = endpoint_map(sys, np.zeros(3), sig)
    assert end[1] == pytest.approx(1.0, abs=1e-14)
    assert end[2] == pytest.approx(0.5, abs=1e-14)


def test_endpoint_exponential_flow_accuracy():
    # u = e2 with Q = x3: dx3/dt = x3 from 1 -> x3(T) = e^T
    sys = build_model_system("0", "x3", WIDE_CHART)
    sig = constant_signal([0.0, 1.0, 0.0], T=0.6)
    end = endpoint_map(sys, np.array([0.0, 0.0, 1.0]), sig,
                       steps_per_interval=40)
    assert end[2] == pytest.approx(np.exp(0.6), rel=1e-11)


def test_integrate_trajectory_records_grid():
    sys = build_model_system("0", "x2", WIDE_CHART)
    sig = constant_signal([0.0, 1.0, 0.0], T=1.0, n=5)
    traj = integrate_trajectory(sys, np.zeros(3), sig, steps_per_interval=20)
    assert traj.n_samples == 101
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(1.0)
    assert np.abs(traj.states[-1, 2] - 0.5) < 1e-12


def test_step_refinement_converges():
    rng = np.random.default_rng(40)
    sys = benign_model_system(rng, WIDE_CHART)
    sig = ControlSignal(t0=0.0, t1=0.8,
                        values=rng.uniform(-0.5, 0.5, size=(10, 3)))
    coarse = endpoint_map(sys, np.zeros(3), sig, steps_per_interval=20)
    fine = endpoint_map(sys, np.zeros(3), sig, steps_per_interval=40)
    assert np.abs(coarse - fine).max() < 1e-9


def test_chart_exit_raises():
    sys = build_model_system("0", "0", UNIT_CHART)
    sig = constant_signal([1.0, 0.0, 0.0], T=5.0)
    with pytest.raises(ChartExitError) as err:
        endpoint_map(sys, np.zeros(3), sig)
    assert err.value.t is not None
    assert err.value.t <= 5.0


def test_minimum_steps_enforced():
    sys = build_model_system("0", "0", UNIT_CHART)
    sig = constant_signal([0.1, 0.0, 0.0], T=0.5)
    with pytest.raises(ValueError):
        endpoint_map(sys, np.zeros(3), sig, steps_per_interval=5)


# -- endpoint Jacobian ---------------------------------------------------------

def test_jacobian_shape_and_zero_third_field():
    # P = Q = 0 and x0 on the locus: motion in x3 needs x1 != 0, and with
    # u = 0 nothing moves, so the x3 row of the Jacobian vanishes
    sys = build_model_system("0", "0", UNIT_CHART)
    sig = ControlSignal(t0=0.0, t1=1.0, values=np.zeros((4, 3)))
    jac = endpoint_jacobian(sys, np.zeros(3), sig)
    assert jac.shape == (3, 12)
    assert np.abs(jac[2, :]).max() == 0.0


def test_jacobian_single_interval_zero_control():
    # frozen frame at the origin: J = T * [X1 | X2 | X3](0) for N = 1, u = 0
    sys = build_model_system("0", "0", UNIT_CHART)
    sig = ControlSignal(t0=0.0, t1=0.7, values=np.zeros((1, 3)))
    jac = endpoint_jacobian(sys, np.zeros(3), sig)
    expect = 0.7 * np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0.0]])
    assert np.abs(jac - expect).max() < 1e-14


def test_jacobian_methods_agree():
    rng = np.random.default_rng(50)
    for _ in range(5):
        sys = benign_model_system(rng, WIDE_CHART)
        sig = ControlSignal(t0=0.0, t1=0.6,
                            values=rng.uniform(-0.5, 0.5, size=(6, 3)))
        var = endpoint_jacobian(sys, np.zeros(3), sig, method="variational")
        fd = endpoint_jacobian(sys, np.zeros(3), sig,
                               method="finite-difference")
        scale = np.linalg.svd(var, compute_uv=False)[0]
        assert np.abs(var - fd).max() < 1e-5 * max(scale, 1.0)


def test_jacobian_rejects_unknown_method():
    sys = build_model_system("0", "0", UNIT_CHART)
    sig = constant_signal([0.0, 0.1, 0.0], T=0.5)
    with pytest.raises(ValueError):
        endpoint_jacobian(sys, np.zeros(3), sig, method="adjoint")


# -- verdicts ------------------------------------------------------------------

def test_verdict_classification():
    base = np.zeros((3, 9))
    base[0, 0] = 1.0
    base[1, 1] = 0.5
    base[2, 2] = 1e-9
    v = singularity_verdict(base, tol=1e-6, n_intervals=3)
    assert v.singular
    assert v.ratio == pytest.approx(1e-9, rel=1e-12)
    v2 = singularity_verdict(np.eye(3), tol=1e-6, n_intervals=1)
    assert not v2.singular
    assert v2.ratio == pytest.approx(1.0)


def test_verdict_zero_matrix():
    v = singularity_verdict(np.zeros((3, 6)), n_intervals=2)
    assert v.singular
    assert v.ratio == 0.0


def test_verdict_rejects_bad_input():
    with pytest.raises(ValueError):
        singularity_verdict(np.full((3, 6), np.nan), n_intervals=2)
    with pytest.raises(ValueError):
        singularity_verdict(np.zeros((2, 6)), n_intervals=2)


def test_verdict_to_dict():
    v = singularity_verdict(np.eye(3), tol=1e-6, method="variational",
                            n_intervals=1)
    d = v.to_dict()
    assert d["singular"] is False
    assert d["method"] == "variational"
    assert d["N"] == 1
    assert len(d["sigma"]) == 3


# -- certification of singular trajectories -------------------------------------

def certify(sys, T=0.8, dt=1e-3, n_intervals=50, x0=None):
    x0 = np.zeros(3) if x0 is None else x0
    traj = integrate_characteristic(sys, x0, T, dt)
    u = singular_controls_along(sys, traj)
    sig = ControlSignal.from_samples(traj.times, u, n_intervals)
    jac = endpoint_jacobian(sys, traj.states[0], sig)
    return traj, sig, jac


def test_seed_system_certifies_singular():
    sys = build_model_system("0", "x2", UNIT_CHART)
    traj, sig, jac = certify(sys)
    v = singularity_verdict(jac, tol=1e-6, n_intervals=50)
    assert v.singular
    assert v.ratio < 1e-6


def test_off_locus_start_not_singular():
    sys = build_model_system("0", "x2", UNIT_CHART)
    traj, sig, jac = certify(sys)
    jac_off = endpoint_jacobian(sys, np.array([0.5, 0.0, 0.0]), sig)
    v = singularity_verdict(jac_off, tol=1e-6, n_intervals=50)
    assert not v.singular
    assert v.ratio > 1e-2


def test_random_systems_certify_at_trial_tolerance():
    # resampling the exact singular control onto N piecewise-constant
    # intervals leaves an O((T/N)^2) rank defect, so certification for
    # generic systems runs at the 1e-3 tolerance, still four orders below
    # the off-locus ratio
    rng = np.random.default_rng(60)
    for _ in range(5):
        sys = benign_model_system(rng, UNIT_CHART)
        traj, sig, jac = certify(sys, T=0.5)
        v = singularity_verdict(jac, tol=1e-3, n_intervals=50)
        assert v.singular, v.ratio
        jac_off = endpoint_jacobian(
            sys, np.array([0.35, 0.0, 0.0]), sig)
        v_off = singularity_verdict(jac_off, tol=1e-3, n_intervals=50)
        assert not v_off.singular, v_off.ratio


def test_interval_refinement_shrinks_ratio():
    # doubling N must shrink the resampling rank defect by about 4x
    rng = np.random.default_rng(61)
    sys = benign_model_system(rng, UNIT_CHART)
    traj, _, jac50 = certify(sys, T=0.5, n_intervals=50)
    _, _, jac100 = certify(sys, T=0.5, n_intervals=100)
    r50 = singularity_verdict(jac50, n_intervals=50).ratio
    r100 = singularity_verdict(jac100, n_intervals=100).ratio
    assert r100 < r50
    assert r100 < 0.5 * r50
