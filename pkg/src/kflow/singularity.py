"""Blow-up analysis: type classification, parabolic rescaling, limit extraction and verification."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .flow import FlowTrajectory, NoBlowUpError, interior_mask
from .geometry import (
    area_ratio, components_in_ball, corner_data, cotan_laplacian, edge_graph, face_barycenters, geometry,
    mean_curvature, vertex_sum,
)
from .kahler import (
    SIN_FLOOR, AngleUndefinedError, kahler_angle, lagrangian_angle, rotate_structure, standard_structure,
)
from .mesh import SurfaceMesh

FINITE_TIME = "finite-time"
AT_INFINITY = "at-infinity"


class SelectionError(RuntimeError):
    pass


class InsufficientSequenceError(SelectionError):
    pass


# -- type classification ----------------------------------------------------


@dataclass
class TypeVerdict:
    verdict: str
    t: np.ndarray
    m: np.ndarray
    slope: float
    early_median: float
    late_median: float
    m_limit: float


def classify_type(traj: FlowTrajectory, T_hat: float, slope_tol: float = 0.05, ratio_tol: float = 2.0,
                  m_cap: float = 1e3, window_fraction: float = 0.5) -> TypeVerdict:
    """Type I / II / undetermined from m(t) = (T_hat - t) max|A|^2(t).

    The slope is that of m against -log(T_hat - t), relative to the median of m,
    over the trailing half of the approach window.
    """
    t = traj.times
    a2 = traj.series("max_A2")
    keep = t < T_hat
    t, a2 = t[keep], a2[keep]
    n = len(t)
    start = int(np.floor((1 - window_fraction) * n))
    tw, aw = t[start:], a2[start:]
    if len(tw) < 5:
        raise NoBlowUpError("fewer than 5 snapshots in the approach window")
    m = (T_hat - tw) * aw
    x = -np.log(T_hat - tw)
    third = max(len(m) // 3, 1)
    early, late = float(np.median(m[:third])), float(np.median(m[-third:]))
    half = len(m) // 2
    slope = float(np.polyfit(x[half:], m[half:], 1)[0]) / max(float(np.median(m[half:])), 1e-300)
    bounded = bool(np.all(m < m_cap))
    if bounded and slope <= slope_tol:
        verdict = "I"
    elif late > ratio_tol * early:
        verdict = "II"
    else:
        verdict = "undetermined"
    return TypeVerdict(verdict, tw, m, slope, early, late, late)


# -- rescaling ----------------------------------------------------------------


@dataclass
class RescalingParams:
    k: int
    r: float
    sigma: float
    t_k: float
    snapshot: int
    x_k: int
    X_k: np.ndarray
    lam: float
    window: tuple
    check_max_A2: float
    check_ok: bool


@dataclass
class RescaledEntry:
    params: RescalingParams
    s: np.ndarray
    meshes: list
    s0: float | None
    X0: np.ndarray
    A_at_origin: float
    max_A2_region: float
    max_A2_global: float
    normalization_ok: bool


@dataclass
class RescalingSequence:
    mode: str
    X0: np.ndarray
    entries: list
    errors: dict = field(default_factory=dict)
    source: str = ""

    def stack(self, k: int):
        e = self.entries[k]
        return list(zip(e.s, e.meshes))


def _ball_max(traj, idx, X0, radius, readout_tol: float = 0.0):
    """Max |A|^2 over the vertices in the ball for snapshots ``idx``, and where it is attained.

    The time is that of the largest value (earliest snapshot on exact ties);
    at that snapshot the smallest vertex index whose value is within
    ``readout_tol`` (relative) of the maximum is returned.
    """
    best, where = -np.inf, None
    for i in idx:
        snap = traj.snapshots[i]
        a2, flagged = snap.curvature()
        inside = (np.linalg.norm(snap.mesh.vertices - X0, axis=1) < radius) & ~flagged
        if not inside.any():
            continue
        vals = np.where(inside, a2, -np.inf)
        top = float(vals.max())
        if top > best:
            v = int(np.flatnonzero(vals >= top * (1 - readout_tol))[0])
            best, where = top, (i, v)
    return best, where


def _indices_in(t, lo, hi):
    eps = 1e-12 * max(1.0, abs(hi))
    return np.flatnonzero((t >= lo - eps) & (t <= hi + eps))


def select_rescaling(traj: FlowTrajectory, X0, T_hat: float | None = None, r0: float | None = None,
                     n_scales: int = 6, mode: str = FINITE_TIME, t_list=None, r_fixed: float | None = None,
                     sigma_samples: int = 64, check_factor: float = 4.0,
                     readout_tol: float = 0.05) -> tuple[list, dict]:
    """Choose (r_k, sigma_k, t_k, x_k, lambda_k) by brute force over snapshots and vertices.

    In finite-time mode r_k = r0 2^-k and the time window is
    [T_hat - (r - sigma)^2, T_hat - (r/4)^2], clipped to the recorded times.
    In at-infinity mode r is fixed and the window for t_k is [t_k - (r - sigma)^2, t_k].
    """
    X0 = np.asarray(X0, dtype=float)
    t = traj.times
    params, errors = [], {}
    if mode == FINITE_TIME:
        if T_hat is None:
            raise ValueError("finite-time mode needs T_hat")
        if r0 is None:
            r0 = 4.0 * np.sqrt(max(T_hat - t[0], 0.0))
        schedule = [(k, r0 * 2.0 ** -k, None) for k in range(n_scales)]
    elif mode == AT_INFINITY:
        if t_list is None or r_fixed is None:
            raise ValueError("at-infinity mode needs t_list and r_fixed")
        schedule = [(k, float(r_fixed), float(tk)) for k, tk in enumerate(t_list)]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    for k, r, tk in schedule:
        sig = (np.arange(1, sigma_samples + 1) / sigma_samples) * (r / 2)
        score = np.full(len(sig), -np.inf)
        for j, s in enumerate(sig):
            if mode == FINITE_TIME:
                lo, hi = T_hat - (r - s) ** 2, min(T_hat - (r / 4) ** 2, t[-1])
            else:
                lo, hi = tk - (r - s) ** 2, tk
            idx = _indices_in(t, lo, hi)
            if len(idx) == 0:
                continue
            best, _ = _ball_max(traj, idx, X0, r - s)
            if np.isfinite(best):
                score[j] = s * s * best
        if not np.isfinite(score).any():
            errors[k] = "no blow-up in window: no snapshot meets the ball"
            continue
        j = int(np.argmax(score))
        s = float(sig[j])
        if mode == FINITE_TIME:
            lo, hi = T_hat - (r - s) ** 2, min(T_hat - (r / 4) ** 2, t[-1])
        else:
            lo, hi = tk - (r - s) ** 2, tk
        idx = _indices_in(t, lo, hi)
        top, (i, v) = _ball_max(traj, idx, X0, r - s, readout_tol)
        if top <= 0:
            errors[k] = "no blow-up in window: |A| vanishes"
            continue
        lam2 = float(traj.snapshots[i].curvature()[0][v])
        lam = float(np.sqrt(lam2))
        t_k = float(t[i])
        # curvature control on the parabolic neighbourhood of the selected point
        cidx = _indices_in(t, t_k - (s / 2) ** 2, t_k)
        cmax, _ = _ball_max(traj, cidx, X0, r - s / 2)
        params.append(RescalingParams(k, r, s, t_k, int(i), v, traj.snapshots[i].mesh.vertices[v].copy(), lam,
                                      (float(lo), float(hi)), float(cmax / lam2), bool(cmax <= check_factor * lam2 * (1 + 1e-9))))
    if len(params) < 2:
        raise InsufficientSequenceError(f"insufficient sequence: {len(params)} valid entries; {errors}")
    return params, errors


def rescale(traj: FlowTrajectory, params: list, X0, T_hat: float | None = None, norm_tol: float = 0.05,
            mode: str = FINITE_TIME, source: str = "", errors: dict | None = None) -> RescalingSequence:
    """Rescaled stacks lambda (F - X_k) at times s = lambda^2 (t - t_k), s in [-lambda^2 sigma^2 / 4, 0]."""
    X0 = np.asarray(X0, dtype=float)
    t = traj.times
    entries = []
    for p in params:
        idx = _indices_in(t, p.t_k - p.sigma ** 2 / 4, p.t_k)
        meshes = [traj.snapshots[i].mesh.translated_scaled(p.lam, p.X_k) for i in idx]
        s = p.lam ** 2 * (t[idx] - p.t_k)
        last = meshes[-1]
        g = geometry(last)
        A0 = float(np.sqrt(g.A2[p.x_k]))
        X0r = p.lam * (X0 - p.X_k)
        mx_region, mx_global = 0.0, 0.0
        for i in idx:
            a2, flagged = traj.snapshots[i].curvature()
            a2 = a2 / p.lam ** 2
            ok = ~flagged
            inside = ok & (np.linalg.norm(traj.snapshots[i].mesh.vertices - X0, axis=1) < p.r - p.sigma / 2)
            if inside.any():
                mx_region = max(mx_region, float(a2[inside].max()))
            if ok.any():
                mx_global = max(mx_global, float(a2[ok].max()))
        s0 = None if T_hat is None or mode != FINITE_TIME else p.lam ** 2 * (T_hat - p.t_k)
        ok_norm = abs(A0 - 1.0) <= norm_tol and mx_region <= 4.0 + norm_tol
        entries.append(RescaledEntry(p, s, meshes, s0, X0r, A0, mx_region, mx_global, bool(ok_norm)))
    return RescalingSequence(mode, X0, entries, dict(errors or {}), source)


# -- limits -------------------------------------------------------------------


@dataclass
class LimitResult:
    mesh: SurfaceMesh
    gauges: list
    converged: bool
    flag: str


def restrict_to_ball(mesh: SurfaceMesh, center, R: float) -> SurfaceMesh | None:
    bary = face_barycenters(mesh)
    keep = np.flatnonzero(np.linalg.norm(bary - np.asarray(center, dtype=float), axis=1) < R)
    if len(keep) == 0:
        return None
    return mesh.submesh(keep)


def closest_points(a: SurfaceMesh, pts: np.ndarray, k: int = 3):
    """Approximate closest points on ``a``: best projection onto faces around the k nearest vertices.

    Returns (distance, face id, barycentric weights).
    """
    _, near = cKDTree(a.vertices).query(pts, k=k)
    near = near.reshape(len(pts), -1)
    vf = a.vertex_faces.tocsr()
    rows = [np.unique(np.concatenate([vf.indices[vf.indptr[v]:vf.indptr[v + 1]] for v in nv])) for nv in near]
    width = max(len(r) for r in rows)
    cand = np.array([np.pad(r, (0, width - len(r)), mode="edge") for r in rows])
    tri = a.vertices[a.faces[cand]]                       # (p, c, 3, 4)
    e1 = tri[:, :, 1] - tri[:, :, 0]
    e2 = tri[:, :, 2] - tri[:, :, 0]
    d = pts[:, None, :] - tri[:, :, 0]
    g11 = np.einsum("pci,pci->pc", e1, e1)
    g22 = np.einsum("pci,pci->pc", e2, e2)
    g12 = np.einsum("pci,pci->pc", e1, e2)
    b1 = np.einsum("pci,pci->pc", e1, d)
    b2 = np.einsum("pci,pci->pc", e2, d)
    det = g11 * g22 - g12 * g12
    u = (g22 * b1 - g12 * b2) / det
    v = (g11 * b2 - g12 * b1) / det
    # clamp to the triangle (approximately) and measure the distance
    u, v = np.clip(u, 0, 1), np.clip(v, 0, 1)
    over = u + v > 1
    tot = np.where(over, u + v, 1.0)
    u, v = u / tot, v / tot
    q = tri[:, :, 0] + u[..., None] * e1 + v[..., None] * e2
    dist = np.linalg.norm(pts[:, None, :] - q, axis=2)
    j = np.argmin(dist, axis=1)
    r = np.arange(len(pts))
    bary = np.column_stack([1 - u[r, j] - v[r, j], u[r, j], v[r, j]])
    return dist[r, j], cand[r, j], bary


def _gauge(a: SurfaceMesh, b: SurfaceMesh) -> float:
    """One-sided Hausdorff distance from ``b`` to ``a`` plus the largest normal-plane deviation."""
    ga, gb = geometry(a), geometry(b)
    ok = ~gb.flagged
    pts = b.vertices[ok]
    dist, face, bary = closest_points(a, pts)
    Pa = ga.normal_projector()[a.faces[face]]
    P = np.einsum("pc,pcij->pij", bary, Pa)
    dev = np.linalg.norm(P - gb.normal_projector()[ok], axis=(1, 2)) / np.sqrt(2)
    inner = ~ga.flagged[a.faces[face]].any(axis=1)
    nd = float(dev[inner].max()) if inner.any() else 0.0
    return float(dist.max()) + nd


def extract_limit(seq: RescalingSequence, R: float, conv_tol: float = 1e-2) -> LimitResult:
    """Last entry's s = 0 snapshot inside B_R(0), with a convergence gauge across entries."""
    pieces = [restrict_to_ball(e.meshes[-1], np.zeros(4), R) for e in seq.entries]
    pieces = [p for p in pieces if p is not None]
    if len(pieces) < 3:
        raise InsufficientSequenceError("need >= 3 entries meeting B_R(0) at s = 0")
    gauges = [_gauge(pieces[i], pieces[i + 1]) for i in range(len(pieces) - 1)]
    decreasing = all(gauges[i + 1] <= gauges[i] + 1e-12 for i in range(len(gauges) - 1))
    converged = decreasing and gauges[-1] < conv_tol
    flag = "converged" if converged else "not converged"
    return LimitResult(pieces[-1], gauges, converged, flag)


# -- quantization ---------------------------------------------------------------


@dataclass
class Quantization:
    N_hat: float
    nearest: int
    distance: float
    radii: list
    values: list
    boundary_form: list
    fit_values: list
    extrapolated: bool


def _region_total_curvature(mesh: SurfaceMesh, center, R: float):
    """Minus total curvature of the faces fully inside B_R, from angle defects.

    Returns (defect form, Gauss-Bonnet boundary form, lumped fit-K form); the
    first two agree identically and the third is an independent quadrature.
    """
    d = np.linalg.norm(mesh.vertices - center, axis=1)
    keep = np.flatnonzero((d[mesh.faces] < R).all(axis=1))
    if len(keep) == 0:
        return 0.0, 0.0, 0.0
    sub = mesh.submesh(keep)
    angles = corner_data(sub)[1]
    angle_sum = vertex_sum(sub, angles)
    bnd = sub.is_boundary_vertex
    interior_defect = float(np.sum(2 * np.pi - angle_sum[~bnd]))
    chi = sub.n_vertices - len(sub.edges) + sub.n_faces
    turning = float(np.sum(np.pi - angle_sum[bnd]))
    gb = turning - 2 * np.pi * chi
    g = geometry(mesh)
    inside = (d < R) & ~mesh.is_boundary_vertex
    fitK = float(-np.sum(g.K[inside] * g.dual_area[inside]))
    return -interior_defect, gb, fitK


def quantization(mesh: SurfaceMesh, center=None, radii=None, fractions=(0.25, 0.5, 1.0), shrink: float = 0.95) -> Quantization:
    """N_hat = -int K / (2 pi) over growing balls, extrapolated in the radius.

    Closed meshes use the whole surface.  Otherwise the radii default to
    ``shrink * fractions * R_max`` with R_max the distance from ``center`` to
    the mesh boundary, and the three values are Aitken-extrapolated.
    """
    c = np.zeros(4) if center is None else np.asarray(center, dtype=float)
    bnd = mesh.boundary_vertices
    if len(bnd) == 0:
        total = float(np.sum(2 * np.pi - vertex_sum(mesh, corner_data(mesh)[1])))
        N = -total / (2 * np.pi)
        return Quantization(N, int(round(N)), abs(N - round(N)), [], [N], [N], [N], False)
    if radii is None:
        R_max = float(np.linalg.norm(mesh.vertices[bnd] - c, axis=1).min())
        radii = [shrink * f * R_max for f in fractions]
    vals, gbs, fits = [], [], []
    for R in radii:
        a, b, k = _region_total_curvature(mesh, c, R)
        vals.append(a / (2 * np.pi))
        gbs.append(b / (2 * np.pi))
        fits.append(k / (2 * np.pi))
    N = vals[-1]
    extrap = False
    if len(vals) >= 3:
        x0, x1, x2 = vals[-3:]
        den = (x2 - x1) - (x1 - x0)
        if abs(den) > 1e-12 and (x2 - x1) * (x1 - x0) > 0 and abs(x2 - x1) < abs(x1 - x0):
            N = x2 - (x2 - x1) ** 2 / den
            extrap = True
    return Quantization(float(N), int(round(N)), float(abs(N - round(N))), list(radii), vals, gbs, fits, extrap)


# -- verification -------------------------------------------------------------


@dataclass
class ComponentInfo:
    n_faces: int
    simplicity_ratio: float


def simplicity_ratio(mesh: SurfaceMesh, face_ids, n_sources: int = 16, seed: int = 0, min_sep: float = 2.0) -> float:
    """sup of intrinsic over extrinsic distance for sampled vertex pairs of a component."""
    sub = mesh.submesh(face_ids)
    n = sub.n_vertices
    rng = np.random.default_rng(seed)
    src = np.sort(rng.choice(n, size=min(n_sources, n), replace=False))
    D = csgraph.dijkstra(edge_graph(sub), directed=False, indices=src)
    E = np.linalg.norm(sub.vertices[src][:, None, :] - sub.vertices[None, :, :], axis=2)
    h = float(sub.edge_lengths.mean())
    ok = (E > min_sep * h) & np.isfinite(D)
    return float((D[ok] / E[ok]).max()) if ok.any() else 1.0


@dataclass
class BlowupReport:
    mode: str
    type_verdict: str = "undetermined"
    m_series: list = field(default_factory=list)
    m_limit: float = float("nan")
    minimality_residual: float = float("nan")
    minimal: bool = False
    holomorphicity_gap: float = float("nan")
    cos_alpha_spread: float = float("nan")
    jstar_angle: float = float("nan")
    beta_spread: float = float("nan")
    beta_deviation: float = float("nan")
    min_K: float = float("nan")
    max_K: float = float("nan")
    A_at_origin: float = float("nan")
    max_A2: float = float("nan")
    curvature_window_ok: bool = False
    e1_residual: float = 0.0
    e1_points: int = 0
    N_hat: float = float("nan")
    N_distance: float = float("nan")
    components: list = field(default_factory=list)
    nontrivial: bool = False
    area_ratios: dict = field(default_factory=dict)
    area_ratio_bounded: bool = True
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, (np.floating, float)):
                return float(x) if np.isfinite(x) else None
            if isinstance(x, (np.integer,)):
                return int(x)
            if isinstance(x, np.bool_):
                return bool(x)
            return x
        return json.dumps(clean(asdict(self)), indent=2, sort_keys=True)


def e1_residual(mesh: SurfaceMesh, geom, angles, keep, sin_floor: float = SIN_FLOOR):
    """RMS of -Laplacian(cos a) - 2 |grad a|^2 cos a over vertices with sin^2 a > sin_floor."""
    c = angles.frame_cos
    L = cotan_laplacian(mesh)
    lap = (L @ c) / geom.dual_area
    sel = keep & ((1 - c * c) > sin_floor) & np.isfinite(angles.grad_alpha2)
    if not sel.any():
        return 0.0, 0
    r = -lap[sel] - 2 * angles.grad_alpha2[sel] * c[sel]
    w = geom.dual_area[sel]
    return float(np.sqrt(np.sum(w * r * r) / np.sum(w))), int(sel.sum())


def verify_limit(mesh: SurfaceMesh, mode: str = "symplectic", minimal_tol: float = 1e-2, k_tol: float = 0.05,
                 spread_tol: float = 1e-3, R_components: float = 4.0, interior_fraction: float = 0.2,
                 radii_area=(1.0, 2.0, 4.0, 8.0), area_bound: float = 4 * np.pi * 1.1) -> BlowupReport:
    """Minimality, holomorphicity or Lagrangian-angle constancy, curvature window and quantization."""
    if mesh is None or mesh.n_faces == 0:
        raise ValueError("empty limit mesh")
    if mode not in ("symplectic", "lagrangian"):
        raise ValueError(f"unknown mode {mode!r}")
    rep = BlowupReport(mode)
    g = geometry(mesh)
    J, _ = standard_structure()
    ang = kahler_angle(mesh, J, g)
    keep = interior_mask(mesh, interior_fraction) & ~g.flagged
    if not keep.any():
        keep = ~g.flagged
    rep.minimality_residual = float(g.H_norm[keep].max())
    rep.minimal = rep.minimality_residual <= minimal_tol
    if not rep.minimal:
        rep.notes.append("minimality failed")
    c = ang.frame_cos[keep]
    if mode == "symplectic":
        rep.holomorphicity_gap = float(1 - c.min())
        rep.cos_alpha_spread = float(c.max() - c.min())
        level = float(c.mean())
        if rep.cos_alpha_spread < spread_tol and 0 < level < 1 - spread_tol:
            Js = rotate_structure(level)
            vals = Js.form(g.frame[keep, 0], g.frame[keep, 1])
            rep.jstar_angle = float(np.mean(vals))
    else:
        try:
            lagrangian_angle(mesh, geom=g, angles=ang)
            b = ang.vertex_beta[keep]
            bbar = float(np.angle(np.mean(np.exp(1j * b))))
            dev = np.abs(np.angle(np.exp(1j * (b - bbar))))
            rep.beta_spread = float(2 * dev.max())
            rep.beta_deviation = float(dev.max())
        except AngleUndefinedError as err:
            rep.notes.append(str(err))
    K = g.K[keep]
    rep.min_K, rep.max_K = float(K.min()), float(K.max())
    rep.curvature_window_ok = rep.min_K >= -2 - k_tol and rep.max_K <= k_tol
    origin = int(np.argmin(np.linalg.norm(mesh.vertices, axis=1)))
    rep.A_at_origin = float(np.sqrt(g.A2[origin]))
    rep.max_A2 = float(g.A2[keep].max())
    rep.nontrivial = rep.max_A2 >= 0.5
    rep.e1_residual, rep.e1_points = e1_residual(mesh, g, ang, keep)
    q = quantization(mesh)
    rep.N_hat, rep.N_distance = q.N_hat, q.distance
    for fids in components_in_ball(mesh, np.zeros(4), R_components):
        rep.components.append(asdict(ComponentInfo(len(fids), simplicity_ratio(mesh, fids))))
    for R in radii_area:
        rep.area_ratios[R] = area_ratio(mesh, np.zeros(4), R)
    rep.area_ratio_bounded = all(v <= area_bound for v in rep.area_ratios.values())
    return rep


# -- space-time curvature integral --------------------------------------------


def integral_curvature_window(traj: FlowTrajectory, X0, r: float, t: float | None = None) -> float:
    """r^-2 int_{t - r^2}^{t} int_{B_r(X0)} |A|^2 dmu dt by trapezoid in time and lumping in space."""
    X0 = np.asarray(X0, dtype=float)
    times = traj.times
    t = float(times[-1]) if t is None else float(t)
    lo = t - r * r
    tol = 1e-9 * max(1.0, abs(t))
    if times[0] > lo + tol or times[-1] < t - tol:
        raise ValueError(f"insufficient temporal coverage for [{lo:.6g}, {t:.6g}]")
    idx = np.flatnonzero((times >= lo - tol) & (times <= t + tol))
    vals = []
    for i in idx:
        snap = traj.snapshots[i]
        a2, _ = snap.curvature()
        dual = mean_curvature(snap.mesh)[1]
        inside = np.linalg.norm(snap.mesh.vertices - X0, axis=1) < r
        vals.append(float(np.sum(a2[inside] * dual[inside])))
    vals = np.array(vals)
    ts = times[idx]
    if len(ts) < 2:
        return 0.0
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts))) / (r * r)
