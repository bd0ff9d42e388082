import numpy as np
import pytest

from kflow.flow import (
    BLOW_UP, FIXED, MESH_FAILURE, REMESH_FLIP_SMOOTH, T_END, FlowConfig, FlowTrajectory, NoBlowUpError, Snapshot,
    cfl_dt, estimate_singular_time, interior_mask, min_face_angle, remesh, run, step, summarize, track_extrema,
)
from kflow.mesh import MeshError
from kflow.scenarios import icosphere, plane_mesh, scenario


def test_cfl_dt_scales_quadratically():
    m = icosphere(2)
    assert cfl_dt(m.with_vertices(3 * m.vertices)) == pytest.approx(9 * cfl_dt(m), rel=1e-12)


def test_flat_plane_is_stationary():
    m = plane_mesh(10, 1.0)
    traj = run(m, FlowConfig(t_end=0.05))
    assert traj.termination == T_END
    assert np.abs(traj.snapshots[-1].mesh.vertices - m.vertices).max() < 1e-12


def test_pinned_vertices_do_not_move():
    sc = scenario("symplectic_perturbed_graph", 16)
    out = step(sc.mesh, cfl_dt(sc.mesh))
    b = sc.mesh.pinned
    assert np.array_equal(out.vertices[b], sc.mesh.vertices[b])


@pytest.mark.parametrize("scheme", ["rk2", "semi-implicit"])
def test_sphere_radius_follows_closed_form(scheme):
    sc = scenario("round_sphere", 2)
    traj = run(sc.mesh, FlowConfig(t_end=0.1, scheme=scheme, snapshot_stride=50))
    r = np.linalg.norm(traj.snapshots[-1].mesh.vertices, axis=1).mean()
    assert r == pytest.approx(sc.oracle["radius"](traj.times[-1]), rel=2e-2)


def test_snapshot_cadence_and_final_snapshot():
    traj = run(icosphere(1), FlowConfig(t_end=0.02, dt_policy=FIXED, dt=1e-3, snapshot_stride=4))
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(0.02)
    steps = [s.step for s in traj.snapshots]
    assert steps[:-1] == list(range(0, steps[-1], 4))


def test_blow_up_threshold_on_sphere():
    traj = run(icosphere(1), FlowConfig(stop_factor=20.0))
    assert traj.termination == BLOW_UP
    assert traj.series("max_A2")[-1] >= traj.a2_stop
    assert traj.a2_stop == pytest.approx(20 * traj.series("max_A2")[0])


def test_step_failure_ends_run_with_mesh_failure(monkeypatch):
    calls = []

    def failing(mesh, dt, scheme="rk2"):
        calls.append(dt)
        if len(calls) > 3:
            raise MeshError("area floor violated")
        return mesh
    monkeypatch.setattr("kflow.flow.step", failing)
    traj = run(icosphere(1), FlowConfig(dt_policy=FIXED, dt=1e-3, snapshot_stride=1))
    assert traj.termination == MESH_FAILURE
    assert traj.failure == "area floor violated"
    assert len(traj.snapshots) == 4


def test_step_rejects_collapsed_result():
    # every face of a mesh collapsed to a point sits below the area floor
    m = icosphere(1)
    flat = m.with_vertices(np.zeros_like(m.vertices))
    with pytest.raises(MeshError):
        step(flat, 1e-3)


def test_invalid_initial_mesh_rejected():
    m = icosphere(1)
    v = m.vertices.copy()
    v[0] = np.nan
    with pytest.raises(MeshError):
        run(m.with_vertices(v), FlowConfig())


@pytest.mark.parametrize("kwargs", [
    {"dt_policy": "adaptive"}, {"cfl": 0.0}, {"cfl": 1.5}, {"t_end": -1.0}, {"remesh": "loop"},
    {"scheme": "euler"}, {"snapshot_stride": 0}, {"stop_factor": 0.0},
])
def test_flow_config_validation(kwargs):
    with pytest.raises(ValueError):
        FlowConfig(**kwargs)


def test_config_echo_lists_every_knob():
    echo = FlowConfig().echo()
    for key in ("dt_policy", "cfl", "dt", "t_end", "snapshot_stride", "stop_factor", "a2_stop", "remesh",
                "remesh_every", "scheme", "max_steps"):
        assert key in echo


def test_remesh_does_not_worsen_angles_and_logs_event(rng):
    m = icosphere(2)
    v = m.vertices + rng.normal(scale=0.02, size=m.vertices.shape)
    v[:, 3] = 0
    noisy = m.with_vertices(v)
    out, event = remesh(noisy)
    assert min_face_angle(out) >= min_face_angle(noisy) - 1e-12
    assert set(event) >= {"flips", "skipped", "min_angle_before", "min_angle_after", "max_displacement"}


def test_remeshing_run_flags_snapshots():
    traj = run(icosphere(2), FlowConfig(t_end=0.05, remesh=REMESH_FLIP_SMOOTH, remesh_every=5, snapshot_stride=5))
    assert traj.events
    assert any(s.remesh_flag for s in traj.snapshots)


def test_summary_keys():
    s = summarize(icosphere(1))
    assert set(s) == {"area", "max_A2", "argmax_A2", "min_cos_alpha", "max_abs_cos_alpha", "max_H", "beta_min", "beta_max"}
    assert np.isnan(s["beta_min"])


def test_lagrangian_runs_record_beta_range():
    traj = run(scenario("clifford_torus", 16).mesh, FlowConfig(t_end=0.01))
    assert np.isfinite(traj.series("beta_min")).all()


def _synthetic(times, a2):
    snaps = [Snapshot(float(t), icosphere(0), {"max_A2": float(a), "min_cos_alpha": 0.5}, i)
             for i, (t, a) in enumerate(zip(times, a2))]
    return FlowTrajectory(snaps, BLOW_UP, None)


def test_singular_time_fit_on_exact_type_one_series():
    t = np.linspace(0, 0.24, 40)
    fit = estimate_singular_time(_synthetic(t, 2 / (1 - 4 * t)))
    assert fit.T == pytest.approx(0.25, abs=1e-12)
    assert fit.residual < 1e-12


def test_no_blow_up_detected():
    t = np.linspace(0, 1, 20)
    with pytest.raises(NoBlowUpError, match="no blow-up"):
        estimate_singular_time(_synthetic(t, np.exp(-t)))


def test_track_extrema_flags_decrease():
    traj = _synthetic(np.linspace(0, 1, 5), np.ones(5))
    for s, c in zip(traj.snapshots, [0.5, 0.5, 0.49, 0.49, 0.5]):
        s.summary["min_cos_alpha"] = c
    for s in traj.snapshots:
        s.summary.update(max_H=0.0, area=1.0)
    ex = track_extrema(traj, 1e-3)
    assert ex.max_drop_rate == pytest.approx(0.04)
    assert not ex.monotone_min_cos


def test_interior_mask_excludes_boundary():
    m = plane_mesh(20, 1.0)
    mask = interior_mask(m, 0.2)
    assert not mask[m.boundary_vertices].any()
    assert mask.any()
    assert interior_mask(icosphere(1)).all()
