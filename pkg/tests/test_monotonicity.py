import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kflow.flow import FlowConfig, run
from kflow.kahler import AngleUndefinedError
from kflow.monotonicity import (
    BETA2, INV_COS, UNIT, WeightSingularError, backward_heat_kernel, density_trace, gaussian_density, write_trace_csv,
)
from kflow.scenarios import icosphere, plane_mesh, scenario


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(0.1, 10.0), tau=st.floats(0.01, 5.0),
       x=st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_kernel_parabolic_scaling(lam, tau, x):
    X = np.array([x])
    r1 = backward_heat_kernel(X, np.zeros(4), -tau, 0.0)
    r2 = backward_heat_kernel(lam * X, np.zeros(4), -lam ** 2 * tau, 0.0)
    assert r2[0] == pytest.approx(r1[0] / lam ** 2, rel=1e-12)


def test_kernel_rejects_future_times():
    with pytest.raises(ValueError):
        backward_heat_kernel(np.zeros((1, 4)), np.zeros(4), 1.0, 0.5)


@pytest.fixture(scope="module")
def big_plane():
    return plane_mesh(64, 4.0)


@pytest.mark.parametrize("tau", [0.05, 0.25, 0.5])
def test_plane_density_is_one(big_plane, tau):
    for mode in (UNIT, INV_COS):
        d = gaussian_density(big_plane, -tau, 0.0, np.zeros(4), mode)
        assert d.phi == pytest.approx(1.0, abs=1e-2)
        assert d.term_shrinker < 1e-20
        assert d.quad_error < 1e-2


def test_offset_plane_density_decays_like_gaussian(big_plane):
    tau, dist = 0.25, 0.6
    X0 = np.array([0, 0, dist, 0])
    d = gaussian_density(big_plane, -tau, 0.0, X0)
    assert d.phi == pytest.approx(np.exp(-dist ** 2 / (4 * tau)), rel=1e-2)


def test_self_shrinking_sphere():
    r, s0 = 1.0, 0.25
    d = gaussian_density(icosphere(4, r), 0.0, s0, np.zeros(4))
    assert d.phi == pytest.approx(4 / np.e, rel=1e-2)
    assert d.term_shrinker < 1e-3
    assert d.truncation_bias == 0.0


def test_inverse_cos_needs_symplectic_surface():
    with pytest.raises(WeightSingularError):
        gaussian_density(plane_mesh(8, 1.0, "lagrangian"), -0.1, 0.0, np.zeros(4), INV_COS)


def test_beta_weight_needs_lagrangian_surface():
    with pytest.raises(AngleUndefinedError):
        gaussian_density(plane_mesh(8, 1.0), -0.1, 0.0, np.zeros(4), BETA2)


def test_beta_weight_vanishes_on_a_special_lagrangian_plane():
    d = gaussian_density(plane_mesh(16, 2.0, "lagrangian"), -0.1, 0.0, np.zeros(4), BETA2)
    assert d.phi == pytest.approx(0.0, abs=1e-20)


def test_sample_must_precede_reference_time():
    with pytest.raises(ValueError):
        gaussian_density(icosphere(1), 0.5, 0.5, np.zeros(4))


def test_coarse_mesh_is_flagged_under_resolved():
    d = gaussian_density(icosphere(1), 0.0, 1e-3, np.array([1.0, 0, 0, 0]))
    assert d.under_resolved


@settings(max_examples=15, deadline=None)
@given(tau=st.floats(0.05, 1.0), cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5))
def test_inverse_cos_density_dominates_unit_density(tau, cx, cy):
    m = scenario("symplectic_perturbed_graph", 16).mesh
    X0 = np.array([cx, cy, 0.0, 0.0])
    d = gaussian_density(m, -tau, 0.0, X0, INV_COS)
    assert d.phi >= d.unweighted - 1e-15


def test_sphere_flow_trace_is_monotone(tmp_path):
    sc = scenario("round_sphere", 3)
    traj = run(sc.mesh, FlowConfig(t_end=0.15, snapshot_stride=10))
    stack = [(s.t, s.mesh) for s in traj.snapshots]
    tr = density_trace(stack, 0.25, np.zeros(4))
    assert tr.monotone
    assert tr.accounting_ok
    assert tr.dyadic
    phi = tr.column("phi")
    assert phi[-1] == pytest.approx(4 / np.e, rel=2e-2)   # a shrinking sphere is self-similar
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "s,phi,term_shrinker,term_grad,under_resolved_flag"
    assert len(rows) == len(tr.samples) + 1


def test_truncated_samples_are_excluded():
    m = plane_mesh(24, 1.0)
    stack = [(-1.0, m), (-0.5, m)]
    tr = density_trace(stack, 0.0, np.zeros(4))
    assert tr.excluded == 2
    assert not tr.monotone
    tr = density_trace(stack, 0.0, np.zeros(4), trunc_tol=1.0)
    assert tr.excluded == 0
