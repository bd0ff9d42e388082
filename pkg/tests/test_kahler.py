import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kflow.geometry import geometry
from kflow.kahler import (
    AngleUndefinedError, ComplexStructure, classify, kahler_angle, lagrangian_angle, loop_winding,
    mean_curvature_form_residual, plane_cos_alpha, rotate_structure, standard_structure, vertex_circulation,
    wrap, write_angle_csv,
)
from kflow.scenarios import graph_mesh, icosphere, plane_mesh, scenario

E = np.eye(4)


def test_standard_structure_squares_to_minus_identity():
    J, Omega = standard_structure()
    assert np.array_equal(J.J @ J.J, -np.eye(4))
    # Omega(dx1, dx2) = 1 for dz1 ^ dz2
    assert Omega(E[0], E[2]) == pytest.approx(1.0)
    assert Omega(E[0], E[3]) == pytest.approx(1j)


def test_structure_validation():
    with pytest.raises(ValueError):
        ComplexStructure(np.eye(4), np.zeros((4, 4)), "bad")


@pytest.mark.parametrize("e1,e2,expected", [
    (E[0], E[1], 1.0),      # complex line
    (E[1], E[0], -1.0),     # same line, opposite orientation
    (E[0], E[2], 0.0),      # Lagrangian plane
])
def test_coordinate_planes(e1, e2, expected):
    assert float(plane_cos_alpha(e1, e2)) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(0.0, np.pi))
def test_tilted_plane_angle(theta):
    e2 = np.cos(theta) * E[1] + np.sin(theta) * E[2]
    assert float(plane_cos_alpha(E[0], e2)) == pytest.approx(np.cos(theta), abs=1e-14)


@pytest.mark.parametrize("theta0", [0.3, 0.7])
def test_rotated_structure(theta0):
    Js = rotate_structure(theta0)
    assert np.abs(Js.J @ Js.J + np.eye(4)).max() <= 1e-12
    e2 = theta0 * E[1] + np.sqrt(1 - theta0 ** 2) * E[2]
    assert float(plane_cos_alpha(E[0], e2, Js)) == pytest.approx(1.0, abs=1e-10)
    assert np.isfinite(Js.orthogonality_defect)


def test_holomorphic_graph_is_symplectic_near_one():
    sc = scenario("holomorphic_graph", 40)
    ang = kahler_angle(sc.mesh)
    cls = classify(sc.mesh, ang)
    assert cls.kind == "symplectic"
    # analytic minimum of cos(alpha) on a holomorphic graph is 1
    assert cls.eps0 == pytest.approx(1.0, abs=1e-2)
    assert np.abs(ang.frame_cos - 1).max() < 1e-4


def test_clifford_torus_is_lagrangian_not_almost_calibrated():
    m = scenario("clifford_torus", 24).mesh
    ang = kahler_angle(m)
    lagrangian_angle(m, angles=ang)
    cls = classify(m, ang)
    assert cls.kind == "lagrangian"
    assert np.cos(ang.face_beta).min() < 0 < np.cos(ang.face_beta).max()


def test_lagrangian_plane_is_almost_calibrated_with_zero_angle():
    m = plane_mesh(8, 1.0, "lagrangian")
    ang = kahler_angle(m)
    lagrangian_angle(m, angles=ang)
    cls = classify(m, ang)
    assert cls.kind == "almost-calibrated"
    assert np.abs(ang.face_beta).max() < 1e-14


def test_sphere_is_unclassified():
    m = icosphere(2)
    assert classify(m, kahler_angle(m)).kind == "none"


def test_beta_on_non_lagrangian_input_raises():
    with pytest.raises(AngleUndefinedError, match="angle undefined"):
        lagrangian_angle(plane_mesh(4, 1.0, "holomorphic"))


def test_clifford_windings_and_no_branch_flags():
    sc = scenario("clifford_torus", 24)
    ang = lagrangian_angle(sc.mesh)
    assert tuple(loop_winding(ang, lp) for lp in sc.oracle["generator_loops"]) == (1, 1)
    assert not ang.branch_flag.any()
    assert np.all(np.abs(vertex_circulation(sc.mesh, ang.face_beta_raw)) < np.pi)


def test_potential_graph_beta_matches_oracle():
    sc = scenario("lagrangian_potential_graph", 48, potential="cosine", eps=0.3)
    ang = lagrangian_angle(sc.mesh)
    xy = sc.mesh.vertices[:, [0, 2]]
    beta = sc.oracle["beta"](xy)
    err = np.abs(wrap(ang.vertex_beta - beta))
    assert err.max() < 2e-2


def test_separable_bump_is_exactly_lagrangian():
    sc = scenario("lagrangian_potential_graph", 16, potential="bump-sum")
    ang = kahler_angle(sc.mesh)
    lagrangian_angle(sc.mesh, angles=ang)
    assert classify(sc.mesh, ang).kind == "almost-calibrated"


def test_mean_curvature_form_residual_requires_beta():
    m = scenario("clifford_torus", 12).mesh
    g = geometry(m)
    with pytest.raises(AngleUndefinedError):
        mean_curvature_form_residual(m, kahler_angle(m, geom=g), g)


def test_gradient_identity_away_from_holomorphic_points():
    # |grad a|^2 sin^2 a = |grad cos a|^2 on the anti-holomorphic graph w = conj(z)^2
    m = graph_mesh(lambda z: np.conj(z) ** 2, 24, 1.0)
    ang = kahler_angle(m)
    s2 = 1 - ang.frame_cos ** 2
    ok = np.isfinite(ang.grad_alpha2)
    lhs = ang.grad_alpha2[ok] * s2[ok]
    rhs = np.sum(ang.grad_cos[ok] ** 2, axis=1)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_angle_csv(tmp_path):
    m = scenario("clifford_torus", 8).mesh
    ang = lagrangian_angle(m)
    path = tmp_path / "angles.csv"
    write_angle_csv(ang, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "face_id,cos_alpha,beta,branch_flag"
    assert len(lines) == m.n_faces + 1


def test_wrap_range():
    x = np.linspace(-20, 20, 101)
    w = wrap(x)
    assert np.all((w > -np.pi - 1e-12) & (w <= np.pi + 1e-12))
    assert np.allclose(np.exp(1j * w), np.exp(1j * x))
