"""Blow-up analysis of a recorded trajectory, from singular time to verified limit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import AnalysisConfig
from .flow import FlowTrajectory, NoBlowUpError, estimate_singular_time, track_extrema
from .geometry import area_ratio
from .monotonicity import BETA2, INV_COS, UNIT, WeightSingularError, density_trace
from .singularity import (
    BlowupReport, SelectionError, classify_type, extract_limit, rescale, select_rescaling, verify_limit,
)


def surface_kind(traj: FlowTrajectory, eps_sym: float = 1e-3, eps_lag: float = 1e-6) -> str:
    s = traj.snapshots[0].summary
    if s["max_abs_cos_alpha"] <= eps_lag:
        return "lagrangian"
    if s["min_cos_alpha"] >= eps_sym:
        return "symplectic"
    return "none"


def blowup_center(traj: FlowTrajectory, fraction: float = 0.5) -> np.ndarray:
    """Centroid of the last snapshot's vertices with |A|^2 above ``fraction`` of its maximum."""
    snap = traj.snapshots[-1]
    a2, flagged = snap.curvature()
    a2 = np.where(flagged, -np.inf, a2)
    hot = a2 >= fraction * a2.max()
    return snap.mesh.vertices[hot].mean(axis=0)


@dataclass
class Analysis:
    report: BlowupReport
    variant: str = "blow-up"
    T_fit: object = None
    sequence: object = None
    limit: object = None
    traces: list = field(default_factory=list)
    extrema: object = None


def analyze(traj: FlowTrajectory, cfg: AnalysisConfig | None = None) -> Analysis:
    cfg = AnalysisConfig() if cfg is None else cfg
    kind = surface_kind(traj, cfg.eps_sym, cfg.eps_lag)
    mode = "lagrangian" if kind == "lagrangian" else "symplectic"
    out = Analysis(BlowupReport(mode))
    if len(traj.snapshots) >= 2:
        out.extrema = track_extrema(traj, cfg.tol_mp)
    try:
        fit = estimate_singular_time(traj, cfg.fit_fraction)
    except NoBlowUpError as err:
        out.variant = "no blow-up"
        out.report.notes.append(str(err))
        return out
    out.T_fit = fit
    X0 = np.asarray(cfg.X0, dtype=float) if cfg.X0 is not None else blowup_center(traj)
    try:
        tv = classify_type(traj, fit.T, cfg.slope_tol, cfg.ratio_tol)
        verdict, series, m_limit = tv.verdict, [list(map(float, tv.t)), list(map(float, tv.m))], tv.m_limit
    except NoBlowUpError as err:
        verdict, series, m_limit = "undetermined", [], float("nan")
        out.report.notes.append(str(err))
    try:
        params, errors = select_rescaling(traj, X0, fit.T, cfg.r0, cfg.n_scales, sigma_samples=cfg.sigma_samples,
                                          readout_tol=cfg.readout_tol)
        seq = rescale(traj, params, X0, fit.T, cfg.norm_tol, errors=errors)
        out.sequence = seq
    except SelectionError as err:
        out.report.type_verdict, out.report.m_series, out.report.m_limit = verdict, series, m_limit
        out.report.notes.append(str(err))
        return out
    try:
        lim = extract_limit(seq, cfg.limit_R, cfg.conv_tol)
        out.limit = lim
        rep = verify_limit(lim.mesh, mode, cfg.minimal_tol, cfg.k_tol)
        rep.notes.append(f"limit {lim.flag}; gauges {['%.3g' % g for g in lim.gauges]}")
    except SelectionError as err:
        rep = BlowupReport(mode)
        rep.notes.append(str(err))
    rep.type_verdict, rep.m_series, rep.m_limit = verdict, series, m_limit
    for e in seq.entries:
        rep.notes.append(f"k={e.params.k}: |A_k|(0,0)={e.A_at_origin:.4f} max|A_k|^2={e.max_A2_region:.4f} "
                         f"normalization {'ok' if e.normalization_ok else 'FAILED'}")
        rep.area_ratio_bounded &= all(area_ratio(e.meshes[-1], np.zeros(4), R) <= 4 * np.pi * 1.1
                                      for R in (1.0, 2.0, 4.0, 8.0))
    out.report = rep

    weight = {"lagrangian": BETA2, "symplectic": INV_COS}.get(kind, UNIT)
    for e in seq.entries:
        if e.s0 is None or len(e.s) < 1:
            continue
        stack = list(zip(e.s, e.meshes))
        for w in dict.fromkeys((UNIT, weight)):
            try:
                out.traces.append((e.params.k, w, density_trace(stack, e.s0, e.X0, w, cfg.eps_sym, cfg.mono_base_tol)))
            except WeightSingularError as err:
                rep.notes.append(f"k={e.params.k} {w}: {err}")
    return out
