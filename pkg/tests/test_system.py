import numpy as np
import pytest

from deplocus import Box, build_general_system, build_model_system, parse_expr
from deplocus.errors import ChartExitError
from deplocus.expr import Const, Var

from helpers import UNIT_CHART, WIDE_CHART, benign_model_system, central_diff


def test_box_validation():
    with pytest.raises(ValueError):
        Box((0, 0, 0), (0, 1, 1))
    with pytest.raises(ValueError):
        Box((1, 0, 0), (0, 1, 1))
    b = Box((-1, -2, -3), (1, 2, 3))
    assert b.widths() == (2.0, 4.0, 6.0)
    assert b.center() == (0.0, 0.0, 0.0)
    assert b.contains((0.5, -1.5, 2.9))
    assert not b.contains((1.5, 0, 0))


def test_box_contains_slack():
    b = Box((-1, -1, -1), (1, 1, 1))
    assert not b.contains((1.0 + 1e-12, 0, 0))
    assert b.contains((1.0 + 1e-12, 0, 0), slack=1e-9)


def test_model_frame_layout():
    sys = build_model_system("x3^2", "x2*x3", WIDE_CHART)
    x = np.array([0.5, 1.0, 2.0])
    f = sys.eval_frame(x)
    # columns are the fields: X1 = (1, 0, P), X2 = (0, 1, Q), X3 = (0, 0, x1)
    expect = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [4.0, 2.0, 0.5],
    ])
    assert np.allclose(f.matrix, expect, rtol=0, atol=0)
    assert tuple(f.basepoint) == (0.5, 1.0, 2.0)


def test_model_rejects_x1_dependence():
    with pytest.raises(ValueError):
        build_model_system("x1 + x2", "0", UNIT_CHART)
    with pytest.raises(ValueError):
        build_model_system("0", "sin(x1)", UNIT_CHART)


def test_model_dependence_function_collapses():
    # the determinant of the model frame reduces to the bare first coordinate
    sys = build_model_system("x3^2", "x2*x3", WIDE_CHART)
    assert sys.dependence_function.root == Var(0)


def test_general_dependence_repeated_column():
    cols = (("x2", "x3", "1"), ("x2", "x3", "1"), ("1", "0", "0"))
    sys = build_general_system(cols, WIDE_CHART)
    assert sys.dependence_function.root == Const(0.0)


def test_general_dependence_diagonal():
    cols = (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "x3"))
    sys = build_general_system(cols, WIDE_CHART)
    x = np.array([0.1, 0.2, 0.7])
    assert sys.delta(x) == pytest.approx(0.7, rel=1e-15)
    assert sys.dependence_function.root == Var(2)


def test_delta_matches_numpy_det():
    rng = np.random.default_rng(42)
    for _ in range(10):
        sys = benign_model_system(rng, WIDE_CHART)
        pts = rng.uniform(-1.5, 1.5, size=(20, 3))
        for x in pts:
            d = sys.delta(x)
            det = np.linalg.det(sys.eval_frame(x).matrix)
            assert d == pytest.approx(det, rel=1e-12, abs=1e-14)


def test_delta_many_matches_scalar():
    rng = np.random.default_rng(1)
    sys = benign_model_system(rng, WIDE_CHART)
    pts = rng.uniform(-1, 1, size=(30, 3))
    batch = sys.delta_many(pts)
    for k, x in enumerate(pts):
        assert batch[k] == pytest.approx(sys.delta(x), rel=1e-14)


def test_eval_frame_outside_chart():
    sys = build_model_system("0", "x2", UNIT_CHART)
    with pytest.raises(ChartExitError):
        sys.eval_frame(np.array([1.5, 0.0, 0.0]))


def test_delta_grad_exact_vs_finite_difference():
    rng = np.random.default_rng(7)
    sys = benign_model_system(rng, WIDE_CHART)
    f = sys.dependence_function
    for x in rng.uniform(-1, 1, size=(10, 3)):
        g = sys.delta_grad(x)
        for i in range(3):
            assert g[i] == pytest.approx(central_diff(f, x, i),
                                         rel=2e-6, abs=2e-6)


def test_component_jacobians_match_finite_difference():
    rng = np.random.default_rng(13)
    sys = benign_model_system(rng, WIDE_CHART)
    x = np.array([0.3, -0.4, 0.6])
    jacs = sys.frame_jacobians(x)
    for i in range(3):
        for j in range(3):
            comp = sys.columns[i][j]
            for k in range(3):
                assert jacs[i][j, k] == pytest.approx(
                    central_diff(comp, x, k), rel=2e-6, abs=2e-6)


def test_model_bracket_coefficient_formula():
    # for P = x3^2, Q = x2*x3:  K = P_x2 + P_x3 Q - P Q_x3
    sys = build_model_system("x3^2", "x2*x3", WIDE_CHART)
    K = sys.model_bracket_coefficient
    x = (0.0, 0.7, -0.5)
    expect = 0.0 + (2 * -0.5) * (0.7 * -0.5) - (0.25) * 0.7
    assert K.eval(x) == pytest.approx(expect, rel=1e-14)


def test_model_bracket_coefficient_zero_for_constant_p():
    sys = build_model_system("0", "x2", UNIT_CHART)
    assert sys.model_bracket_coefficient.root == Const(0.0)


def test_general_form_has_no_bracket_coefficient():
    cols = (("1", "0", "0"), ("0", "1", "x2"), ("0", "0", "x1"))
    sys = build_general_system(cols, UNIT_CHART)
    with pytest.raises(ValueError):
        sys.model_bracket_coefficient


def test_general_matches_equivalent_model():
    model = build_model_system("x3^2", "x2*x3", WIDE_CHART)
    cols = (("1", "0", "x3^2"), ("0", "1", "x2*x3"), ("0", "0", "x1"))
    general = build_general_system(cols, WIDE_CHART)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.5, 1.5, size=(25, 3))
    for x in pts:
        assert general.delta(x) == pytest.approx(model.delta(x), rel=1e-13,
                                                 abs=1e-15)
        assert np.allclose(general.eval_frame(x).matrix,
                           model.eval_frame(x).matrix, rtol=0, atol=0)


def test_rejects_non_evaluable_fields():
    # division by zero at probe points must be caught at construction
    cols = (("1/x1", "0", "0"), ("0", "1", "0"), ("0", "0", "1"))
    with pytest.raises(ValueError):
        build_general_system(cols, UNIT_CHART)


def test_rejects_wrong_shape():
    with pytest.raises(ValueError):
        build_general_system((("1", "0"), ("0", "1"), ("0", "0")), UNIT_CHART)
