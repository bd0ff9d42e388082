"""Mean curvature flow dF/dt = H on triangle meshes in R^4."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import spsolve

from .geometry import corner_data, cotan_laplacian, distance_to_set, face_frames, geometry, mean_curvature, mixed_area_corners, vertex_sum
from .kahler import OMEGA_UNIT_TOL, AngleUndefinedError, kahler_angle, lagrangian_angle, standard_structure, wrap
from .mesh import MeshError, SurfaceMesh, validate_mesh

EXPLICIT_CFL = "explicit-cfl"
FIXED = "fixed"
REMESH_OFF = "off"
REMESH_FLIP_SMOOTH = "edge-flip+tangential-smooth"

T_END = "t_end"
BLOW_UP = "blow-up-threshold"
MESH_FAILURE = "mesh-failure"


class NoBlowUpError(RuntimeError):
    """Curvature does not grow over the fit window."""


@dataclass
class FlowConfig:
    dt_policy: str = EXPLICIT_CFL
    cfl: float = 0.5
    dt: float = 1e-4
    t_end: float = 1.0
    snapshot_stride: int = 10
    stop_factor: float = 1e4
    a2_stop: float | None = None
    remesh: str = REMESH_OFF
    remesh_every: int = 20
    scheme: str = "rk2"
    max_steps: int = 2_000_000
    provenance: str = ""

    def __post_init__(self):
        if self.dt_policy not in (EXPLICIT_CFL, FIXED):
            raise ValueError(f"unknown dt policy {self.dt_policy!r}")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl safety factor must lie in (0, 1]")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.stop_factor <= 0 or (self.a2_stop is not None and self.a2_stop <= 0):
            raise ValueError("blow-up threshold must be positive")
        if self.remesh not in (REMESH_OFF, REMESH_FLIP_SMOOTH):
            raise ValueError(f"unknown remesh policy {self.remesh!r}")
        if self.scheme not in ("rk2", "semi-implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.snapshot_stride < 1 or self.remesh_every < 1:
            raise ValueError("strides must be >= 1")

    def echo(self) -> dict:
        return asdict(self)


@dataclass
class Snapshot:
    t: float
    mesh: SurfaceMesh
    summary: dict
    step: int
    remesh_flag: bool = False
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def curvature(self):
        """Per-vertex |A|^2 and the mask of vertices excluded from maxima, computed once."""
        if "A2" not in self.cache:
            g = geometry(self.mesh)
            self.cache["A2"], self.cache["flagged"] = g.A2, g.flagged
        return self.cache["A2"], self.cache["flagged"]


@dataclass
class FlowTrajectory:
    snapshots: list
    termination: str
    config: FlowConfig
    events: list = field(default_factory=list)
    failure: str = ""
    a2_stop: float = np.inf

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def series(self, key: str) -> np.ndarray:
        return np.array([s.summary[key] for s in self.snapshots], dtype=float)


# -- stepping ----------------------------------------------------------------


def cfl_dt(mesh: SurfaceMesh, c: float = 0.5) -> float:
    """dt = c (min edge)^2 / 4."""
    h = mesh.edge_lengths.min()
    if not np.isfinite(h) or h <= 0 or mesh.face_areas.min() <= 0:
        raise MeshError("degenerate mesh: zero edge length or zero-area face")
    return c * h * h / 4.0


def _velocity(mesh: SurfaceMesh) -> np.ndarray:
    H, _ = mean_curvature(mesh)
    H[mesh.pinned] = 0.0
    return H


def _quick_check(mesh: SurfaceMesh) -> str:
    if not np.all(np.isfinite(mesh.vertices)):
        return "non-finite vertex positions"
    amin = mesh.face_areas.min()
    if amin < mesh.area_floor():
        return f"area floor violated (min face area {amin:.3e})"
    return ""


def step(mesh: SurfaceMesh, dt: float, scheme: str = "rk2") -> SurfaceMesh:
    """One time step of dF/dt = H with pinned vertices held fixed."""
    x = mesh.vertices
    if scheme == "rk2":
        half = mesh.with_vertices(x + 0.5 * dt * _velocity(mesh))
        new = mesh.with_vertices(x + dt * _velocity(half))
    elif scheme == "semi-implicit":
        cot, angles, areas = corner_data(mesh)
        L = cotan_laplacian(mesh, cot)
        M = vertex_sum(mesh, mixed_area_corners(mesh, cot, angles, areas))
        A = (diags(M) - dt * L).tolil()
        rhs = M[:, None] * x
        pinned = np.flatnonzero(mesh.pinned)
        for i in pinned:
            A.rows[i] = [i]
            A.data[i] = [1.0]
        rhs[pinned] = x[pinned]
        new = mesh.with_vertices(spsolve(A.tocsc(), rhs))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    problem = _quick_check(new)
    if problem:
        raise MeshError(problem)
    return new


def summarize(mesh: SurfaceMesh, lagrangian: bool = False, geom=None) -> dict:
    g = geometry(mesh) if geom is None else geom
    J, _ = standard_structure()
    ang = kahler_angle(mesh, J, g)
    ok = ~g.flagged
    a2 = g.A2[ok] if ok.any() else g.A2
    hn = g.H_norm[~g.boundary] if (~g.boundary).any() else g.H_norm
    out = {
        "area": float(g.face_area.sum()),
        "max_A2": float(a2.max()),
        "argmax_A2": int(np.flatnonzero(ok)[np.argmax(a2)]) if ok.any() else int(np.argmax(a2)),
        "min_cos_alpha": float(ang.face_cos.min()),
        "max_abs_cos_alpha": float(np.abs(ang.face_cos).max()),
        "max_H": float(hn.max()),
        "beta_min": np.nan,
        "beta_max": np.nan,
    }
    if lagrangian:
        try:
            lagrangian_angle(mesh, geom=g, angles=ang)
            out["beta_min"] = float(ang.face_beta.min())
            out["beta_max"] = float(ang.face_beta.max())
        except AngleUndefinedError:
            pass
    return out


def run(mesh: SurfaceMesh, config: FlowConfig, lagrangian: bool | None = None,
        start_time: float = 0.0, start_step: int = 0) -> FlowTrajectory:
    """Integrate until ``t_end``, the blow-up threshold, or a mesh failure."""
    problems = validate_mesh(mesh)
    if problems:
        raise MeshError(f"invalid initial mesh: {problems}")
    if lagrangian is None:
        # beta is defined where |Omega(e1, e2)| = sin(alpha) stays within the unit tolerance
        lagrangian = bool(np.abs(kahler_angle(mesh).face_cos).max() <= np.sqrt(1 - (1 - OMEGA_UNIT_TOL) ** 2))
    t = float(start_time)
    k = int(start_step)
    g = geometry(mesh)
    first = summarize(mesh, lagrangian, g)
    a2_stop = config.a2_stop if config.a2_stop is not None else config.stop_factor * max(first["max_A2"], 1e-300)
    snaps = [Snapshot(t, mesh, first, k, cache={"A2": g.A2, "flagged": g.flagged})]
    traj = FlowTrajectory(snaps, T_END, config, a2_stop=a2_stop)
    if first["max_A2"] >= a2_stop:
        traj.termination = BLOW_UP
        return traj
    remeshed = False
    eps_t = 1e-12 * max(1.0, config.t_end)
    while t < config.t_end - eps_t and k - start_step < config.max_steps:
        dt = cfl_dt(mesh, config.cfl) if config.dt_policy == EXPLICIT_CFL else config.dt
        dt = min(dt, config.t_end - t)
        try:
            mesh = step(mesh, dt, config.scheme)
        except MeshError as err:
            traj.termination = MESH_FAILURE
            traj.failure = str(err)
            return traj
        t += dt
        k += 1
        if config.remesh == REMESH_FLIP_SMOOTH and k % config.remesh_every == 0:
            mesh, event = remesh(mesh)
            event["t"], event["step"] = t, k
            traj.events.append(event)
            remeshed = True
        last = t >= config.t_end - eps_t
        if k % config.snapshot_stride == 0 or last:
            problems = validate_mesh(mesh)
            if problems:
                traj.termination = MESH_FAILURE
                traj.failure = "; ".join(problems)
                return traj
            g = geometry(mesh)
            summ = summarize(mesh, lagrangian, g)
            snaps.append(Snapshot(t, mesh, summ, k, remeshed, cache={"A2": g.A2, "flagged": g.flagged}))
            remeshed = False
            if summ["max_A2"] >= a2_stop:
                traj.termination = BLOW_UP
                return traj
    return traj


# -- extrema and singular time -----------------------------------------------


@dataclass
class ExtremaSeries:
    t: np.ndarray
    min_cos_alpha: np.ndarray
    max_A2: np.ndarray
    max_H: np.ndarray
    area: np.ndarray
    max_drop_rate: float
    monotone_min_cos: bool
    tol_mp: float


def track_extrema(traj: FlowTrajectory, tol_mp: float = 1e-3) -> ExtremaSeries:
    """Per-snapshot extrema and the maximum-principle verdict for min cos(alpha)."""
    if len(traj.snapshots) < 2:
        raise ValueError("need at least 2 snapshots")
    t = traj.times
    c = traj.series("min_cos_alpha")
    # worst average decrease rate of min cos(alpha) over any pair of snapshots
    dc = c[:, None] - c[None, :]
    dt = t[None, :] - t[:, None]
    later = dt > 0
    rate = np.where(later, dc / np.where(later, dt, 1.0), -np.inf)
    worst = float(max(rate.max(), 0.0))
    return ExtremaSeries(t, c, traj.series("max_A2"), traj.series("max_H"), traj.series("area"),
                         worst, worst <= tol_mp, tol_mp)


@dataclass
class SingularTimeFit:
    T: float
    slope: float
    intercept: float
    residual: float
    window: tuple


def estimate_singular_time(traj: FlowTrajectory, fraction: float = 0.25) -> SingularTimeFit:
    """Extrapolated zero of a linear fit to 1/max|A|^2 over the trailing snapshots."""
    t = traj.times
    a2 = traj.series("max_A2")
    n = len(t)
    k = max(3, int(np.ceil(fraction * n)))
    if n < 3:
        raise NoBlowUpError("no blow-up detected: fewer than 3 snapshots")
    tw, aw = t[-k:], a2[-k:]
    if not np.all(np.diff(aw) > 0):
        raise NoBlowUpError("no blow-up detected: max|A|^2 not increasing over the fit window")
    y = 1.0 / aw
    slope, intercept = np.polyfit(tw, y, 1)
    if slope >= 0:
        raise NoBlowUpError("no blow-up detected: 1/max|A|^2 not decreasing")
    res = float(np.sqrt(np.mean((slope * tw + intercept - y) ** 2)))
    return SingularTimeFit(float(-intercept / slope), float(slope), float(intercept), res, (float(tw[0]), float(tw[-1])))


# -- remeshing ---------------------------------------------------------------


def _flip_pass(mesh: SurfaceMesh):
    f = mesh.faces.copy()
    v = mesh.vertices
    ef = mesh.edge_faces
    e = mesh.edges
    existing = {tuple(x) for x in e.tolist()}
    touched = np.zeros(len(f), dtype=bool)
    flips = skipped = 0
    for k in range(len(e)):
        f0, f1 = ef[k]
        if f0 < 0 or f1 < 0 or touched[f0] or touched[f1]:
            continue
        a, b = e[k]
        # orient so that face f0 contains a -> b
        r0 = list(f[f0])
        ia = r0.index(a)
        if r0[(ia + 1) % 3] != b:
            f0, f1 = f1, f0
            r0 = list(f[f0])
            ia = r0.index(a)
        c = r0[(ia + 2) % 3]
        r1 = list(f[f1])
        d = [x for x in r1 if x != a and x != b][0]

        def angle(p, q, r):
            u, w = v[q] - v[p], v[r] - v[p]
            return np.arctan2(np.linalg.norm(u) * np.linalg.norm(w) * np.sqrt(max(1 - (u @ w / (np.linalg.norm(u) * np.linalg.norm(w))) ** 2, 0)), u @ w)

        if angle(c, a, b) + angle(d, b, a) <= np.pi + 1e-12:
            continue
        key = (min(c, d), max(c, d))
        if key in existing:
            skipped += 1
            continue
        n0, n1 = [a, d, c], [d, b, c]
        ar = [0.5 * np.sqrt(max(np.dot(v[q] - v[p], v[q] - v[p]) * np.dot(v[r] - v[p], v[r] - v[p]) - np.dot(v[q] - v[p], v[r] - v[p]) ** 2, 0))
              for p, q, r in (n0, n1)]
        if min(ar) < mesh.area_floor() * 1e3:
            skipped += 1
            continue
        f[f0], f[f1] = n0, n1
        existing.discard((min(a, b), max(a, b)))
        existing.add(key)
        touched[f0] = touched[f1] = True
        flips += 1
    return f, flips, skipped


def min_face_angle(mesh: SurfaceMesh) -> float:
    return float(corner_data(mesh)[1].min())


def remesh(mesh: SurfaceMesh, passes: int = 3, smooth_steps: int = 2, relax: float = 0.5):
    """Intrinsic Delaunay edge flips followed by tangential Laplacian smoothing."""
    before_angle = min_face_angle(mesh)
    faces = mesh.faces
    flips = skipped = 0
    cur = mesh
    for _ in range(passes):
        faces, nf, ns = _flip_pass(cur)
        flips += nf
        skipped += ns
        cand = SurfaceMesh(cur.vertices, faces, cur.boundary_policy, dict(cur.tags))
        if validate_mesh(cand):
            break
        cur = cand
        if nf == 0:
            break
    x0 = cur.vertices
    x = x0.copy()
    pinned = cur.pinned
    for _ in range(smooth_steps):
        m = cur.with_vertices(x)
        fr = face_frames(m)
        proj_f = np.einsum("fai,faj->fij", fr, fr) * m.face_areas[:, None, None]
        proj = m.vertex_faces @ proj_f.reshape(len(fr), 16)
        proj = proj.reshape(-1, 4, 4)
        # tangent projector from the dominant 2-plane of the area-weighted face projectors
        w, U = np.linalg.eigh(proj)
        T = U[:, :, 2:]
        P = np.einsum("nia,nja->nij", T, T)
        A = m.adjacency
        deg = np.asarray(A.sum(axis=1)).ravel()
        centroid = (A @ x) / deg[:, None]
        d = relax * np.einsum("nij,nj->ni", P, centroid - x)
        d[pinned] = 0.0
        x = x + d
    out = cur.with_vertices(x)
    if validate_mesh(out):
        out = cur
    drift = float(np.linalg.norm(out.vertices - mesh.vertices, axis=1).max())
    event = {"flips": flips, "skipped": skipped, "min_angle_before": before_angle,
             "min_angle_after": min_face_angle(out), "max_displacement": drift}
    return out, event


# -- Lagrangian angle evolution ----------------------------------------------


def beta_heat_residual(mesh: SurfaceMesh, dt: float, interior_fraction: float = 0.2,
                       scheme: str = "rk2") -> float:
    """RMS of d(beta)/dt - Laplacian(beta) over one step, away from the boundary."""
    g0 = geometry(mesh)
    a0 = lagrangian_angle(mesh, geom=g0)
    new = step(mesh, dt, scheme)
    g1 = geometry(new)
    a1 = lagrangian_angle(new, geom=g1)
    b0, b1 = a0.vertex_beta, a1.vertex_beta
    dbdt = wrap(b1 - b0) / dt
    mid = mesh.with_vertices(0.5 * (mesh.vertices + new.vertices))
    cot, angles, areas = corner_data(mid)
    L = cotan_laplacian(mid, cot)
    dual = vertex_sum(mid, mixed_area_corners(mid, cot, angles, areas))
    bm = b0 + 0.5 * wrap(b1 - b0)
    Lc = L.tocoo()
    off = Lc.row != Lc.col
    lap = np.bincount(Lc.row[off], weights=Lc.data[off] * wrap(bm[Lc.col[off]] - bm[Lc.row[off]]),
                      minlength=mesh.n_vertices) / dual
    keep = interior_mask(mesh, interior_fraction)
    r = dbdt - lap
    return float(np.sqrt(np.sum(dual[keep] * r[keep] ** 2) / np.sum(dual[keep])))


def interior_mask(mesh: SurfaceMesh, fraction: float = 0.2) -> np.ndarray:
    """Vertices whose graph distance to the boundary is at least ``fraction`` of the largest such distance."""
    bnd = mesh.boundary_vertices
    if len(bnd) == 0:
        return np.ones(mesh.n_vertices, dtype=bool)
    d = distance_to_set(mesh, bnd)
    finite = np.isfinite(d)
    return finite & (d >= fraction * d[finite].max())
