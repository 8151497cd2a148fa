import numpy as np
import pytest

from deplocus import (build_general_system, build_model_system,
                      closed_form_p3, constraint_residuals,
                      integrate_adjoint_general, integrate_characteristic,
                      lift_to_extremal, residual_samples, singular_control_at,
                      singular_controls_along, write_lift_csv)
from deplocus.charfield import Trajectory
from deplocus.errors import (ControlSolveError, GridMismatchError,
                             NotOnLocusError)

from helpers import UNIT_CHART, WIDE_CHART, benign_model_system


def exp_system():
    return build_model_system("0", "x3", WIDE_CHART)


def exp_trajectory(sys, T=1.0, dt=1e-3):
    return integrate_characteristic(sys, np.array([0.0, 0.0, 1.0]), T, dt)


# -- closed-form adjoint -----------------------------------------------------

def test_closed_form_p3_exponential_case():
    # Q = x3 gives Q_x3 = 1, so p3(t) = a * exp(-x2(t))
    sys = exp_system()
    traj = exp_trajectory(sys)
    p3 = closed_form_p3(sys, traj, a=0.3)
    expect = 0.3 * np.exp(-traj.states[:, 1])
    assert np.abs(p3 - expect).max() < 1e-8


def test_closed_form_p3_constant_when_q_independent_of_x3():
    # Q = x2 has Q_x3 = 0: the third adjoint coordinate is frozen at a
    sys = build_model_system("0", "x2", UNIT_CHART)
    traj = integrate_characteristic(sys, np.zeros(3), 0.8, 1e-3)
    p3 = closed_form_p3(sys, traj, a=2.0)
    assert np.array_equal(p3, np.full(traj.n_samples, 2.0))


def test_closed_form_p3_rejects_zero_scale():
    sys = exp_system()
    traj = exp_trajectory(sys, T=0.1, dt=1e-2)
    with pytest.raises(ValueError):
        closed_form_p3(sys, traj, a=0.0)


def test_closed_form_p3_never_vanishes():
    rng = np.random.default_rng(31)
    for _ in range(10):
        sys = benign_model_system(rng, WIDE_CHART)
        traj = integrate_characteristic(sys, np.zeros(3), 0.5, 1e-3)
        p3 = np.abs(closed_form_p3(sys, traj, a=1.0))
        # interval bound: |p3| >= |a| exp(-T * max |Q_x3|)
        qx3 = sys.Q.diff(2)
        lo, hi = qx3.bound_range(sys.chart.lo, sys.chart.hi)
        bound = np.exp(-0.5 * max(abs(lo), abs(hi)))
        assert p3.min() >= bound - 1e-12


# -- lift --------------------------------------------------------------------

def test_lift_annihilates_frame_exactly_for_seed():
    sys = build_model_system("0", "x2", UNIT_CHART)
    traj = integrate_characteristic(sys, np.zeros(3), 0.8, 1e-3)
    lift = lift_to_extremal(sys, traj)
    res = residual_samples(sys, lift)
    assert np.abs(res).max() == 0.0


def test_lift_conservation_identity():
    # p2 + Q(x) p3 stays exactly zero along the lift by construction, and
    # the delivered adjoint never vanishes
    rng = np.random.default_rng(5)
    for _ in range(20):
        sys = benign_model_system(rng, UNIT_CHART)
        traj = integrate_characteristic(sys, np.zeros(3), 0.5, 1e-3)
        lift = lift_to_extremal(sys, traj)
        q = sys.Q.eval_many(traj.states)
        cons = lift.adjoint[:, 1] + q * lift.adjoint[:, 2]
        assert np.abs(cons).max() < 1e-12
        assert np.linalg.norm(lift.adjoint, axis=1).min() > 1e-12


def test_lift_residuals_small_for_random_systems():
    rng = np.random.default_rng(6)
    for _ in range(10):
        sys = benign_model_system(rng, UNIT_CHART)
        traj = integrate_characteristic(sys, np.zeros(3), 0.5, 1e-3)
        lift = lift_to_extremal(sys, traj)
        stats = constraint_residuals(sys, lift)
        assert stats.max_abs.max() < 1e-8
        assert stats.hamiltonian_max < 1e-8


def test_lift_control_satisfies_model_relation():
    # u1 = 0 and u3 = u2 * K along any lifted locus trajectory
    rng = np.random.default_rng(9)
    sys = benign_model_system(rng, UNIT_CHART)
    traj = integrate_characteristic(sys, np.zeros(3), 0.5, 1e-3)
    lift = lift_to_extremal(sys, traj)
    k = sys.model_bracket_coefficient.eval_many(traj.states)
    assert np.abs(lift.control[:, 0]).max() == 0.0
    assert np.abs(lift.control[:, 2] - lift.control[:, 1] * k).max() < 1e-13


def test_lift_scale_equivariance():
    # scaling a scales the adjoint linearly and leaves the control unchanged
    sys = exp_system()
    traj = exp_trajectory(sys, T=0.5)
    one = lift_to_extremal(sys, traj, a=1.0)
    two = lift_to_extremal(sys, traj, a=-2.5)
    assert np.array_equal(one.control, two.control)
    assert np.abs(two.adjoint - (-2.5) * one.adjoint).max() < 1e-12


def test_lift_rejects_off_locus_trajectory():
    sys = build_model_system("0", "x2", UNIT_CHART)
    t = np.linspace(0.0, 1.0, 11)
    states = np.column_stack([np.full(11, 0.3), t, np.zeros(11)])
    traj = Trajectory(times=t, states=states)
    with pytest.raises(NotOnLocusError):
        lift_to_extremal(sys, traj)


def test_lift_requires_model_form():
    cols = (("1", "0", "0"), ("0", "1", "x2"), ("0", "0", "x1"))
    sys = build_general_system(cols, UNIT_CHART)
    traj = Trajectory(times=np.array([0.0, 1.0]),
                      states=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        lift_to_extremal(sys, traj)


def test_hamiltonian_vanishes_along_lift():
    sys = exp_system()
    traj = exp_trajectory(sys, T=0.8)
    lift = lift_to_extremal(sys, traj, a=1.7)
    res = residual_samples(sys, lift)
    h = np.sum(lift.control * res, axis=1)
    assert np.abs(h).max() < 1e-8


# -- general adjoint integration ----------------------------------------------

def test_integrated_adjoint_matches_closed_form():
    sys = exp_system()
    traj = exp_trajectory(sys)
    lift = lift_to_extremal(sys, traj, a=0.3)
    path = integrate_adjoint_general(sys, traj, lift.control, lift.adjoint[0])
    assert not path.degenerate
    assert np.abs(path.adjoint - lift.adjoint).max() < 1e-7


def test_integrated_adjoint_conservation_random_systems():
    rng = np.random.default_rng(12)
    for _ in range(20):
        sys = benign_model_system(rng, UNIT_CHART)
        traj = integrate_characteristic(sys, np.zeros(3), 0.5, 1e-3)
        lift = lift_to_extremal(sys, traj)
        path = integrate_adjoint_general(sys, traj, lift.control,
                                         lift.adjoint[0])
        q = sys.Q.eval_many(traj.states)
        cons = path.adjoint[:, 1] + q * path.adjoint[:, 2]
        assert np.abs(cons - cons[0]).max() < 1e-8


def test_integrated_adjoint_zero_start_flags_degenerate():
    sys = exp_system()
    traj = exp_trajectory(sys, T=0.2, dt=1e-2)
    lift = lift_to_extremal(sys, traj)
    path = integrate_adjoint_general(sys, traj, lift.control, np.zeros(3))
    assert path.degenerate
    assert np.abs(path.adjoint).max() == 0.0


def test_integrated_adjoint_rejects_grid_mismatch():
    sys = exp_system()
    traj = exp_trajectory(sys, T=0.2, dt=1e-2)
    bad = np.zeros((traj.n_samples + 3, 3))
    with pytest.raises(GridMismatchError):
        integrate_adjoint_general(sys, traj, bad, np.array([0.0, 0.0, 1.0]))


# -- pointwise singular control ----------------------------------------------

def test_singular_control_matches_model_recipe():
    # the bracket construction must reproduce u = (0, v2, v2 K) on the locus
    rng = np.random.default_rng(14)
    for _ in range(10):
        sys = benign_model_system(rng, UNIT_CHART)
        traj = integrate_characteristic(sys, np.zeros(3), 0.4, 1e-2)
        kf = sys.model_bracket_coefficient
        for idx in (0, traj.n_samples // 2, traj.n_samples - 1):
            x = traj.states[idx]
            v = traj.velocities[idx]
            u = singular_control_at(sys, x, v)
            k = kf.eval(x)
            expect = np.array([0.0, v[1], v[1] * k])
            assert np.abs(u - expect).max() < 1e-10


def test_singular_control_velocity_consistency():
    # F(x) u reproduces the requested velocity
    rng = np.random.default_rng(15)
    sys = benign_model_system(rng, UNIT_CHART)
    traj = integrate_characteristic(sys, np.zeros(3), 0.4, 1e-2)
    for idx in (0, 10, 20):
        x, v = traj.states[idx], traj.velocities[idx]
        u = singular_control_at(sys, x, v)
        again = sys.eval_frame(x).matrix @ u
        assert np.abs(again - v).max() < 1e-12


def test_singular_control_rejects_unreachable_velocity():
    # a velocity outside the span of the kernel direction cannot be matched
    sys = build_model_system("0", "x2", UNIT_CHART)
    x = np.zeros(3)
    with pytest.raises(ControlSolveError):
        singular_control_at(sys, x, np.array([0.0, 0.0, 1.0]))


def test_singular_controls_along_shape():
    sys = build_model_system("0", "x2", UNIT_CHART)
    traj = integrate_characteristic(sys, np.zeros(3), 0.5, 1e-2)
    u = singular_controls_along(sys, traj)
    assert u.shape == (traj.n_samples, 3)
    assert np.abs(u[:, 0]).max() == 0.0
    assert np.abs(u[:, 2]).max() == 0.0   # K = 0 for constant P


def test_write_lift_csv(tmp_path):
    sys = exp_system()
    traj = exp_trajectory(sys, T=0.2, dt=1e-2)
    lift = lift_to_extremal(sys, traj)
    path = tmp_path / "lift.csv"
    write_lift_csv(sys, lift, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,x1,x2,x3,p1,p2,p3,u1,u2,u3,res1,res2,res3"
    assert len(lines) == traj.n_samples + 1
