"""Complex structures on R^4, Kahler angle and Lagrangian angle fields."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph

from .geometry import GeometryField, face_frames, geometry, vertex_sum
from .mesh import SurfaceMesh

SIN_FLOOR = 1e-6
EPS_SYM = 1e-3
EPS_LAG = 1e-6
DELTA_CAL = 1e-3
OMEGA_UNIT_TOL = 1e-3
BRANCH_TOL = np.pi / 2


class AngleUndefinedError(ValueError):
    """Lagrangian angle requested on a surface that is not Lagrangian."""


@dataclass(frozen=True)
class ComplexStructure:
    """Linear complex structure ``J`` with Kahler form ``omega(u, v) = u @ omega @ v``."""

    J: np.ndarray
    omega: np.ndarray
    label: str = "J0"
    orthogonality_defect: float = 0.0

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if np.abs(J @ J + np.eye(4)).max() > 1e-12:
            raise ValueError(f"{self.label}: J o J != -Id")
        if np.abs(self.omega + self.omega.T).max() > 1e-12:
            raise ValueError(f"{self.label}: omega is not antisymmetric")

    def form(self, u, v):
        return np.einsum("...i,ij,...j->...", u, self.omega, v)


@dataclass(frozen=True)
class HolomorphicVolumeForm:
    re: np.ndarray
    im: np.ndarray

    def __call__(self, u, v):
        r = np.einsum("...i,ij,...j->...", u, self.re, v)
        i = np.einsum("...i,ij,...j->...", u, self.im, v)
        return r + 1j * i


def standard_structure() -> tuple[ComplexStructure, HolomorphicVolumeForm]:
    """J0 on coordinates (x1, y1, x2, y2), omega0 = dx1^dy1 + dx2^dy2, Omega0 = dz1^dz2."""
    J = np.zeros((4, 4))
    J[1, 0], J[0, 1] = 1.0, -1.0
    J[3, 2], J[2, 3] = 1.0, -1.0
    # omega(u, v) = <J u, v>
    omega = J.T.copy()
    a = np.array([1, 1j, 0, 0])
    b = np.array([0, 0, 1, 1j])
    M = np.outer(a, b) - np.outer(b, a)
    return ComplexStructure(J, omega, "J0"), HolomorphicVolumeForm(M.real.copy(), M.imag.copy())


def rotate_structure(theta0: float) -> ComplexStructure:
    """The structure J* with holomorphic coordinates x1 + i y1/theta0, x2/theta0 + i y2.

    ``omega*`` is the standard form in those coordinates, so a plane with
    constant Kahler angle theta0 under omega0 has omega*(e1, e2) = 1 on a
    Euclidean orthonormal frame.  J* is not orthogonal for theta0 < 1; the
    deviation is stored in ``orthogonality_defect``.
    """
    if not 0.0 < theta0 <= 1.0:
        raise ValueError(f"theta0 must lie in (0, 1], got {theta0}")
    J0, _ = standard_structure()
    phi = np.diag([1.0, 1.0 / theta0, 1.0 / theta0, 1.0])
    J = np.linalg.inv(phi) @ J0.J @ phi
    omega = phi.T @ J0.omega @ phi
    defect = float(np.abs(J.T @ J - np.eye(4)).max())
    return ComplexStructure(J, omega, f"J*({theta0:g})", defect)


def plane_cos_alpha(e1, e2, J: ComplexStructure | None = None) -> np.ndarray:
    J = standard_structure()[0] if J is None else J
    return J.form(e1, e2)


def face_cos_alpha(mesh: SurfaceMesh, J: ComplexStructure) -> np.ndarray:
    fr = face_frames(mesh)
    return J.form(fr[:, 0], fr[:, 1])


def wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


# -- angle fields ------------------------------------------------------------


@dataclass
class AngleField:
    face_cos: np.ndarray
    vertex_cos: np.ndarray
    frame_cos: np.ndarray
    grad_cos: np.ndarray
    grad_alpha2: np.ndarray
    face_beta: np.ndarray | None = None
    face_beta_raw: np.ndarray | None = None
    vertex_beta: np.ndarray | None = None
    branch_flag: np.ndarray | None = None
    windings: list = field(default_factory=list)
    omega_modulus_min: float | None = None

    @property
    def has_beta(self) -> bool:
        return self.face_beta is not None


def face_gradients(mesh: SurfaceMesh, values: np.ndarray, periodic: bool = False) -> np.ndarray:
    """Gradient (m, 4) of the piecewise-linear interpolant on each face.

    With ``periodic`` the vertex values are angles and differences are wrapped.
    """
    a, b = mesh.face_edge_vectors
    f = mesh.faces
    d1 = values[f[:, 1]] - values[f[:, 0]]
    d2 = values[f[:, 2]] - values[f[:, 0]]
    if periodic:
        d1, d2 = wrap(d1), wrap(d2)
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    det = aa * bb - ab * ab
    ca = (bb * d1 - ab * d2) / det
    cb = (aa * d2 - ab * d1) / det
    return ca[:, None] * a + cb[:, None] * b


def vertex_average(mesh: SurfaceMesh, face_values: np.ndarray, face_area: np.ndarray) -> np.ndarray:
    fv = np.asarray(face_values)
    w = face_area
    num = mesh.vertex_faces @ (w.reshape(-1, *([1] * (fv.ndim - 1))) * fv)
    den = mesh.vertex_faces @ w
    return num / den.reshape(-1, *([1] * (fv.ndim - 1)))


def vertex_gradient(mesh: SurfaceMesh, values: np.ndarray, geom: GeometryField, periodic: bool = False) -> np.ndarray:
    g = vertex_average(mesh, face_gradients(mesh, values, periodic), geom.face_area)
    # keep only the tangential part at the vertex
    return np.einsum("nai,naj,nj->ni", geom.frame, geom.frame, g)


def kahler_angle(mesh: SurfaceMesh, J: ComplexStructure | None = None,
                 geom: GeometryField | None = None, sin_floor: float = SIN_FLOOR) -> AngleField:
    """cos(alpha) per face, per vertex, and its gradient."""
    J = standard_structure()[0] if J is None else J
    geom = geometry(mesh) if geom is None else geom
    fcos = J.form(geom.face_frame[:, 0], geom.face_frame[:, 1])
    vcos = vertex_average(mesh, fcos, geom.face_area)
    frcos = J.form(geom.frame[:, 0], geom.frame[:, 1])
    grad = vertex_gradient(mesh, frcos, geom)
    g2 = np.einsum("ni,ni->n", grad, grad)
    sin2 = 1.0 - frcos ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ga2 = np.where(sin2 > sin_floor, g2 / sin2, np.nan)
    return AngleField(face_cos=fcos, vertex_cos=vcos, frame_cos=frcos, grad_cos=grad, grad_alpha2=ga2)


def _tree_cotree(mesh: SurfaceMesh, root: int = 0):
    """BFS dual tree over faces and the primal edges that close homology loops."""
    order, pred = csgraph.breadth_first_order(mesh.face_adjacency, root, directed=False)
    ef = mesh.edge_faces
    n_edges = len(mesh.edges)
    # dual tree edges: the primal edge shared by a face and its predecessor
    in_dual_tree = np.zeros(n_edges, dtype=bool)
    child = order[1:]
    parent = pred[child]
    fe = mesh.face_edges
    for c, p in zip(child, parent):
        for e in fe[c]:
            if ef[e, 0] == p or ef[e, 1] == p:
                in_dual_tree[e] = True
                break
    rest = np.flatnonzero(~in_dual_tree)
    e = mesh.edges[rest]
    n = mesh.n_vertices
    from scipy import sparse
    g = sparse.coo_matrix((np.arange(1, len(rest) + 1, dtype=float), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    tree = csgraph.minimum_spanning_tree(g).tocoo()
    in_primal_tree = np.zeros(n_edges, dtype=bool)
    in_primal_tree[rest[(tree.data - 1).astype(np.int64)]] = True
    interior = (ef[:, 0] >= 0) & (ef[:, 1] >= 0)
    generators = np.flatnonzero(interior & ~in_dual_tree & ~in_primal_tree)
    return generators


def lagrangian_angle(mesh: SurfaceMesh, Omega: HolomorphicVolumeForm | None = None,
                     geom: GeometryField | None = None, angles: AngleField | None = None,
                     unit_tol: float = OMEGA_UNIT_TOL, branch_tol: float = BRANCH_TOL) -> AngleField:
    """Lagrangian angle beta = arg Omega(e1, e2), unwrapped along a face spanning tree."""
    J0, Om0 = standard_structure()
    Omega = Om0 if Omega is None else Omega
    geom = geometry(mesh) if geom is None else geom
    angles = kahler_angle(mesh, J0, geom) if angles is None else angles
    fr = geom.face_frame
    val = Omega(fr[:, 0], fr[:, 1])
    mod = np.abs(val)
    if mod.min() < 1.0 - unit_tol:
        raise AngleUndefinedError(f"angle undefined: |Omega(e1,e2)| != 1 (min modulus {mod.min():.3e})")
    raw = np.angle(val)
    m = mesh.n_faces
    beta = np.empty(m)
    generators = _tree_cotree(mesh)
    reached = np.zeros(m, dtype=bool)
    for start in range(m):
        if reached[start]:
            continue
        o, p = csgraph.breadth_first_order(mesh.face_adjacency, start, directed=False)
        beta[start] = raw[start]
        for f in o[1:]:
            q = p[f]
            beta[f] = beta[q] + wrap(raw[f] - raw[q])
        reached[o] = True

    ef = mesh.edge_faces
    interior = (ef[:, 0] >= 0) & (ef[:, 1] >= 0)
    f0, f1 = ef[interior, 0], ef[interior, 1]
    step = wrap(raw[f1] - raw[f0])
    jump = np.rint(((beta[f1] - beta[f0]) - step) / (2 * np.pi)).astype(int)
    edge_ids = np.flatnonzero(interior)
    windings = [int(j) for j in jump[np.isin(edge_ids, generators)]]
    # a nonzero circulation of beta around an interior vertex is a genuine branch defect
    circ = vertex_circulation(mesh, raw)
    bad_v = (np.abs(circ) > np.pi) & ~mesh.is_boundary_vertex
    branch = np.zeros(m, dtype=bool)
    branch[np.flatnonzero(mesh.vertex_faces[bad_v].sum(axis=0).A1 > 0)] = True
    steep = np.abs(step) > branch_tol
    branch[f0[steep]] = True
    branch[f1[steep]] = True

    vbeta = _vertex_beta(mesh, beta, raw, geom.face_area)
    angles.face_beta = beta
    angles.face_beta_raw = raw
    angles.vertex_beta = vbeta
    angles.branch_flag = branch
    angles.windings = windings
    angles.omega_modulus_min = float(mod.min())
    return angles


def vertex_circulation(mesh: SurfaceMesh, raw: np.ndarray) -> np.ndarray:
    """Sum of wrapped face-to-face steps of an angle around each vertex (a multiple of 2 pi)."""
    f = mesh.faces
    fe = mesh.face_edges
    e = mesh.edges
    m = mesh.n_faces
    # face on the side where the edge runs from its smaller to its larger index
    left = np.full(len(e), -1)
    right = np.full(len(e), -1)
    for c in range(3):
        a, b = f[:, (c + 1) % 3], f[:, (c + 2) % 3]
        ids = fe[:, c]
        fwd = a < b
        left[ids[fwd]] = np.arange(m)[fwd]
        right[ids[~fwd]] = np.arange(m)[~fwd]
    ok = (left >= 0) & (right >= 0)
    d = np.zeros(len(e))
    d[ok] = wrap(raw[left[ok]] - raw[right[ok]])
    n = mesh.n_vertices
    return np.bincount(e[:, 0], weights=d, minlength=n) - np.bincount(e[:, 1], weights=d, minlength=n)


def _vertex_beta(mesh, beta, raw, area):
    # local unwrapping around each vertex, anchored at the first incident face
    inc = mesh.vertex_faces.tocsr()
    ref = np.full(mesh.n_vertices, np.nan)
    rows = np.repeat(np.arange(mesh.n_vertices), np.diff(inc.indptr))
    first = inc.indptr[:-1][np.diff(inc.indptr) > 0]
    has = np.diff(inc.indptr) > 0
    ref[has] = inc.indices[first]
    ref_face = np.where(has, ref, 0).astype(np.int64)
    cols = inc.indices
    dev = wrap(raw[cols] - raw[ref_face[rows]])
    num = np.bincount(rows, weights=area[cols] * dev, minlength=mesh.n_vertices)
    den = np.bincount(rows, weights=area[cols], minlength=mesh.n_vertices)
    return beta[ref_face] + num / np.where(den > 0, den, 1.0)


def loop_winding(angles: AngleField, face_loop) -> int:
    """Winding number of beta around a closed loop of adjacent faces."""
    raw = angles.face_beta_raw
    loop = np.asarray(face_loop, dtype=np.int64)
    steps = wrap(raw[np.roll(loop, -1)] - raw[loop])
    return int(np.rint(steps.sum() / (2 * np.pi)))


# -- classification ----------------------------------------------------------


@dataclass
class Classification:
    kind: str
    eps0: float
    max_abs_cos: float
    delta: float | None = None

    def __str__(self):
        if self.kind == "symplectic":
            return f"symplectic(eps0={self.eps0:.4g})"
        if self.kind == "almost-calibrated":
            return f"almost-calibrated(delta0={self.delta:.4g})"
        return self.kind


def classify(mesh: SurfaceMesh, angles: AngleField, eps_sym: float = EPS_SYM, eps_lag: float = EPS_LAG,
             delta: float = DELTA_CAL, channel: str = "face") -> Classification:
    """Symplectic, Lagrangian, almost-calibrated or none, from the chosen cos(alpha) channel."""
    cos = angles.frame_cos if channel == "frame" else angles.face_cos
    cmin = float(np.min(cos))
    cmax_abs = float(np.max(np.abs(cos)))
    if cmin >= eps_sym:
        return Classification("symplectic", cmin, cmax_abs)
    if cmax_abs <= eps_lag:
        if not angles.has_beta:
            try:
                lagrangian_angle(mesh, angles=angles)
            except AngleUndefinedError:
                return Classification("lagrangian", cmin, cmax_abs)
        cb = float(np.cos(angles.face_beta).min())
        if cb >= delta:
            return Classification("almost-calibrated", cmin, cmax_abs, cb)
        return Classification("lagrangian", cmin, cmax_abs, cb)
    return Classification("none", cmin, cmax_abs)


# -- mean curvature form -----------------------------------------------------


def mean_curvature_form_residual(mesh: SurfaceMesh, angles: AngleField, geom: GeometryField,
                                 J: ComplexStructure | None = None) -> float:
    """RMS mismatch between d(beta) and the mean curvature one-form omega(., H).

    Per edge ``(i, j)`` the residual is ``(beta_j - beta_i) - omega(x_j - x_i, H_mid)``,
    divided by the edge length and averaged with the edge diamond areas.
    """
    if not angles.has_beta:
        raise AngleUndefinedError("lagrangian angle not computed for this mesh")
    J = standard_structure()[0] if J is None else J
    e = mesh.edges
    i, j = e[:, 0], e[:, 1]
    x = mesh.vertices
    dbeta = wrap(angles.vertex_beta[j] - angles.vertex_beta[i])
    Hmid = 0.5 * (geom.H[i] + geom.H[j])
    form = J.form(x[j] - x[i], Hmid)
    ln = np.linalg.norm(x[j] - x[i], axis=1)
    r = (dbeta - form) / ln
    ef = mesh.edge_faces
    area = np.where(ef[:, 0] >= 0, geom.face_area[ef[:, 0]], 0.0) + np.where(ef[:, 1] >= 0, geom.face_area[ef[:, 1]], 0.0)
    ok = ~(geom.boundary[i] | geom.boundary[j])
    if angles.branch_flag is not None and angles.branch_flag.any():
        bad_v = np.zeros(mesh.n_vertices, dtype=bool)
        bad_v[mesh.faces[angles.branch_flag].ravel()] = True
        ok &= ~(bad_v[i] | bad_v[j])
    w = area[ok] / 3.0
    return float(np.sqrt(np.sum(w * r[ok] ** 2) / np.sum(w)))


def write_angle_csv(angles: AngleField, path) -> None:
    m = len(angles.face_cos)
    beta = angles.face_beta if angles.has_beta else np.full(m, np.nan)
    flag = angles.branch_flag if angles.branch_flag is not None else np.zeros(m, dtype=bool)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["face_id", "cos_alpha", "beta", "branch_flag"])
        for k in range(m):
            w.writerow([k, repr(float(angles.face_cos[k])), repr(float(beta[k])), int(flag[k])])
