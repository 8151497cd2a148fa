import numpy as np
import pytest

from deplocus import (Box, build_general_system, build_model_system,
                      check_regularity, check_transversality, detect_locus,
                      tangency_report, write_mesh_csv)
from deplocus.errors import NotOnLocusError, RegularityError

from helpers import UNIT_CHART, WIDE_CHART, benign_model_system


def model_seed():
    return build_model_system("0", "x2", UNIT_CHART)


def test_detect_plane_locus_exact():
    # the model locus is the plane x1 = 0; every mesh point must sit on it
    sys = model_seed()
    mesh = detect_locus(sys, 9)
    assert len(mesh) > 50
    assert np.abs(mesh.points[:, 0]).max() < 1e-10
    assert np.abs(mesh.points[:, 1:]).max() <= 1.0 + 1e-12


def test_detected_points_satisfy_residual_bound():
    rng = np.random.default_rng(21)
    for _ in range(5):
        sys = benign_model_system(rng, WIDE_CHART)
        mesh = detect_locus(sys, 7)
        assert len(mesh) > 0
        resid = np.abs(sys.delta_many(mesh.points))
        grads = np.linalg.norm(
            [sys.delta_grad(x) for x in mesh.points], axis=1)
        assert np.all(resid <= 1e-10 * (1.0 + grads))


def test_detect_empty_locus():
    # determinant x1 - 5 never vanishes inside the unit chart
    cols = (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "x1 - 5"))
    sys = build_general_system(cols, UNIT_CHART)
    mesh = detect_locus(sys, 9)
    assert len(mesh) == 0


def test_detect_respects_resolution_tuple():
    sys = model_seed()
    a = detect_locus(sys, (5, 5, 5))
    b = detect_locus(sys, 5)
    assert np.array_equal(a.points, b.points)
    with pytest.raises(ValueError):
        detect_locus(sys, 1)
    with pytest.raises(ValueError):
        detect_locus(sys, (9, 9))


def test_detect_is_deterministic():
    rng = np.random.default_rng(3)
    sys = benign_model_system(rng, WIDE_CHART)
    a = detect_locus(sys, 8)
    b = detect_locus(sys, 8)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.normals, b.normals)


def test_normals_are_unit_gradients():
    sys = model_seed()
    mesh = detect_locus(sys, 5)
    # grad Delta = (1, 0, 0) everywhere for the seed system
    assert np.allclose(mesh.normals, [1.0, 0.0, 0.0], rtol=0, atol=1e-14)


def test_merge_deduplicates_close_points():
    sys = model_seed()
    mesh = detect_locus(sys, 9)
    d = mesh.points[:, None, :] - mesh.points[None, :, :]
    dist = np.sqrt((d * d).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    assert dist.min() > 1e-6


def test_check_regularity_plane():
    sys = model_seed()
    verdict = check_regularity(sys, np.array([0.0, 0.3, -0.2]))
    assert verdict.passed
    assert verdict.margin == pytest.approx(1.0)


def test_check_regularity_off_locus_raises():
    sys = model_seed()
    with pytest.raises(NotOnLocusError):
        check_regularity(sys, np.array([0.5, 0.0, 0.0]))


def test_regularity_fails_for_degenerate_determinant():
    # Delta = x1^2 has zero gradient on its own zero set
    cols = (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "x1^2"))
    sys = build_general_system(cols, UNIT_CHART)
    verdict = check_regularity(sys, np.array([0.0, 0.0, 0.0]))
    assert not verdict.passed
    assert verdict.margin < 1e-6


def test_check_transversality_plane():
    sys = model_seed()
    verdict = check_transversality(sys, np.array([0.0, 0.5, 0.1]))
    # plane field span{X1, X2} contains (1,0,0)-ish directions; margin is
    # the sine of the angle between its normal and the locus normal
    assert verdict.passed
    assert 0.0 < verdict.margin <= 1.0


def test_transversality_requires_regularity():
    cols = (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "x1^2"))
    sys = build_general_system(cols, UNIT_CHART)
    with pytest.raises(RegularityError):
        check_transversality(sys, np.array([0.0, 0.0, 0.0]))


def test_tangency_report_counts_plane():
    sys = model_seed()
    mesh = detect_locus(sys, 7)
    report = tangency_report(sys, mesh)
    counts = report.counts()
    assert counts["points"] == len(mesh)
    assert counts["regular"] == len(mesh)
    assert counts["transverse"] == len(mesh)
    assert counts["gamma"] == 0
    assert report.margins.shape == (len(mesh),)
    assert np.all(report.margins[report.transverse_ok] > 1e-6)


def test_tangency_report_flags_tangent_points():
    # span{X1, X2} = span{(0,0,1), (0,1,0)} has plane normal (1,0,0), which
    # aligns with the locus normal of Delta = x1; the plane field is tangent
    # to the locus everywhere, so no point is transverse
    cols = (("0", "0", "1"), ("0", "1", "0"), ("x1", "0", "0"))
    sys = build_general_system(cols, UNIT_CHART)
    x = np.array([0.0, 0.2, 0.2])
    assert abs(sys.delta(x)) < 1e-12
    verdict = check_transversality(sys, x)
    assert not verdict.passed
    assert verdict.margin < 1e-10
    mesh = detect_locus(sys, 5)
    report = tangency_report(sys, mesh)
    assert report.counts()["transverse"] == 0
    assert report.counts()["gamma"] == len(mesh)


def test_write_mesh_csv_round_trip(tmp_path):
    sys = model_seed()
    mesh = detect_locus(sys, 5)
    report = tangency_report(sys, mesh)
    path = tmp_path / "mesh.csv"
    write_mesh_csv(mesh, report, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "x1,x2,x3,n1,n2,n3,regular_ok,transverse_ok"
    assert len(lines) == len(mesh) + 1
    first = lines[1].split(",")
    assert len(first) == 8
    back = np.array([float(v) for v in first[:6]])
    assert np.array_equal(back[:3], mesh.points[0])
    assert np.array_equal(back[3:], mesh.normals[0])
    assert first[6] == "1" and first[7] == "1"


def test_mesh_survives_curved_locus():
    # Delta = x1 - 0.25*(x2^2 + x3^2): a paraboloid sheet through the chart
    cols = (("1", "0", "0"),
            ("0", "1", "0"),
            ("0", "0", "x1 - 0.25*(x2^2 + x3^2)"))
    sys = build_general_system(cols, WIDE_CHART)
    mesh = detect_locus(sys, 9)
    assert len(mesh) > 30
    expect = 0.25 * (mesh.points[:, 1] ** 2 + mesh.points[:, 2] ** 2)
    assert np.abs(mesh.points[:, 0] - expect).max() < 1e-9
