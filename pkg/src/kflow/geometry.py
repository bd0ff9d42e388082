"""Intrinsic and extrinsic operators on triangle meshes in R^4.

Mean curvature comes from the cotangent Laplacian of the position map.
The second fundamental form is read off a quadratic fit of the two normal
coordinates over the 2-ring, in a tangent frame that is re-levelled once
with the fitted gradient.  Gauss curvature has two channels: the flat
ambient Gauss equation ``K = (|H|^2 - |A|^2) / 2`` and the angle defect.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .mesh import MeshError, SurfaceMesh

logger = logging.getLogger(__name__)

FIT_RCOND = 1e-10
IMPUTE_SWEEPS = 8


class DisconnectedError(MeshError):
    """Vertices lie on different connected components."""


class ClosedSubdomainError(MeshError):
    """The requested subdomain has no boundary."""


# -- per-face quantities -------------------------------------------------


def face_frames(mesh: SurfaceMesh) -> np.ndarray:
    """Oriented orthonormal frame ``(m, 2, 4)`` of every face plane."""
    a, b = mesh.face_edge_vectors
    e1 = a / np.linalg.norm(a, axis=1, keepdims=True)
    b = b - np.einsum("ij,ij->i", b, e1)[:, None] * e1
    e2 = b / np.linalg.norm(b, axis=1, keepdims=True)
    return np.stack([e1, e2], axis=1)


def corner_data(mesh: SurfaceMesh):
    """Cotangents, angles and face areas; column c refers to corner c."""
    v, f = mesh.vertices, mesh.faces
    p = [v[f[:, c]] for c in range(3)]
    a, b = p[1] - p[0], p[2] - p[0]
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    twice_area = np.sqrt(np.maximum(aa * bb - ab * ab, 0.0))
    dots = np.empty((len(f), 3))
    for c in range(3):
        u = p[(c + 1) % 3] - p[c]
        w = p[(c + 2) % 3] - p[c]
        dots[:, c] = np.einsum("ij,ij->i", u, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = dots / twice_area[:, None]
    angles = np.arctan2(twice_area[:, None], dots)
    return cot, angles, 0.5 * twice_area


def cotan_laplacian(mesh: SurfaceMesh, cot: np.ndarray | None = None) -> sparse.csr_matrix:
    """Stiffness matrix with ``(L x)_i = sum_j w_ij (x_j - x_i)``."""
    if cot is None:
        cot = corner_data(mesh)[0]
    f = mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for c in range(3):
        i, j = f[:, (c + 1) % 3], f[:, (c + 2) % 3]
        w = 0.5 * cot[:, c]
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (off - sparse.diags(diag)).tocsr()


def mixed_area_corners(mesh: SurfaceMesh, cot=None, angles=None, areas=None) -> np.ndarray:
    """Mixed Voronoi area of each face corner; rows sum to the face area."""
    if cot is None:
        cot, angles, areas = corner_data(mesh)
    v, f = mesh.vertices, mesh.faces
    p = [v[f[:, c]] for c in range(3)]
    out = np.empty((len(f), 3))
    for c in range(3):
        q, r = (c + 1) % 3, (c + 2) % 3
        pq = np.einsum("ij,ij->i", p[q] - p[c], p[q] - p[c])
        pr = np.einsum("ij,ij->i", p[r] - p[c], p[r] - p[c])
        out[:, c] = (pr * cot[:, q] + pq * cot[:, r]) / 8.0
    obtuse = angles > np.pi / 2
    any_obtuse = obtuse.any(axis=1)
    fallback = np.where(obtuse, 0.5, 0.25) * areas[:, None]
    out[any_obtuse] = fallback[any_obtuse]
    return out


def vertex_sum(mesh: SurfaceMesh, corner_values: np.ndarray) -> np.ndarray:
    return np.bincount(mesh.faces.reshape(-1), weights=corner_values.reshape(-1), minlength=mesh.n_vertices)


def mean_curvature(mesh: SurfaceMesh):
    """Cotangent mean curvature vector and mixed dual areas.

    This is the cheap path used inside the time stepper.
    """
    cot, angles, areas = corner_data(mesh)
    L = cotan_laplacian(mesh, cot)
    dual = vertex_sum(mesh, mixed_area_corners(mesh, cot, angles, areas))
    H = (L @ mesh.vertices) / dual[:, None]
    return H, dual


# -- full geometry ---------------------------------------------------------


@dataclass
class GeometryField:
    dual_area: np.ndarray
    H: np.ndarray
    A2: np.ndarray
    K: np.ndarray
    K_defect: np.ndarray
    frame: np.ndarray
    normal: np.ndarray
    sff: np.ndarray
    H_fit: np.ndarray
    face_area: np.ndarray
    face_frame: np.ndarray
    corner_area: np.ndarray
    angle_defect: np.ndarray
    flagged: np.ndarray
    boundary: np.ndarray
    mean_edge: float
    notes: list = field(default_factory=list)

    @property
    def H_norm(self) -> np.ndarray:
        return np.linalg.norm(self.H, axis=1)

    @property
    def gauss_residual(self) -> np.ndarray:
        """Angle-defect K against the Gauss-equation K, per vertex."""
        return np.abs(self.K_defect - self.K)

    @property
    def valid(self) -> np.ndarray:
        return ~self.flagged

    def normal_projector(self) -> np.ndarray:
        return np.einsum("nai,naj->nij", self.normal, self.normal)


def two_ring(mesh: SurfaceMesh) -> sparse.csr_matrix:
    a = mesh.adjacency
    r = (a + a @ a).tocsr()
    r.setdiag(0)
    r.eliminate_zeros()
    r.sort_indices()
    return r


def _padded_rows(csr: sparse.csr_matrix):
    counts = np.diff(csr.indptr)
    kmax = int(counts.max()) if len(counts) else 0
    n = csr.shape[0]
    idx = np.zeros((n, kmax), dtype=np.int64)
    mask = np.arange(kmax)[None, :] < counts[:, None]
    idx[mask] = csr.indices
    return idx, mask


def _initial_frames(mesh: SurfaceMesh, fframe: np.ndarray, areas: np.ndarray):
    e1, e2 = fframe[:, 0], fframe[:, 1]
    proj = np.einsum("mi,mj->mij", e1, e1) + np.einsum("mi,mj->mij", e2, e2)
    biv = np.einsum("mi,mj->mij", e1, e2) - np.einsum("mi,mj->mij", e2, e1)
    inc = mesh.vertex_faces
    P = (inc @ (areas[:, None] * proj.reshape(-1, 16))).reshape(-1, 4, 4)
    B = (inc @ (areas[:, None] * biv.reshape(-1, 16))).reshape(-1, 4, 4)
    _, vecs = np.linalg.eigh(P)
    t1, t2 = vecs[:, :, 3], vecs[:, :, 2]
    n1, n2 = vecs[:, :, 1], vecs[:, :, 0]
    sign = np.einsum("ni,nij,nj->n", t1, B, t2)
    t2 = np.where(sign[:, None] < 0, -t2, t2)
    return np.stack([t1, t2], axis=1), np.stack([n1, n2], axis=1), B


def _fit(mesh, centre_ids, nbr, mask, tang, norm):
    """One least-squares pass; returns coefficients (k, 5, 2) and a rank flag."""
    x = mesh.vertices
    d = x[nbr] - x[centre_ids][:, None, :]
    u = np.einsum("nki,ni->nk", d, tang[:, 0])
    v = np.einsum("nki,ni->nk", d, tang[:, 1])
    z = np.einsum("nki,nai->nka", d, norm)
    w = mask.astype(float)
    cnt = np.maximum(w.sum(axis=1), 1.0)
    s = np.sqrt(((u * u + v * v) * w).sum(axis=1) / cnt)
    s = np.where(s > 0, s, 1.0)
    U, V = u / s[:, None], v / s[:, None]
    D = np.stack([U, V, 0.5 * U * U, U * V, 0.5 * V * V], axis=-1) * w[..., None]
    G = np.einsum("nkp,nkq->npq", D, D)
    rhs = np.einsum("nkp,nka->npa", D, z)
    ev = np.linalg.eigvalsh(G)
    bad = (ev[:, 0] <= FIT_RCOND * np.maximum(ev[:, -1], np.finfo(float).tiny)) | (mask.sum(axis=1) < 5)
    G_safe = G.copy()
    G_safe[bad] = np.eye(5)
    coef = np.linalg.solve(G_safe, rhs)
    coef[bad] = 0.0
    grad = coef[:, 0:2, :] / s[:, None, None]
    hess = coef[:, 2:5, :] / (s * s)[:, None, None]
    return grad, hess, bad


def _relevel(tang, norm, grad):
    # tilt the tangent plane by the fitted normal gradient, then re-orthonormalise
    t1 = tang[:, 0] + np.einsum("na,nai->ni", grad[:, 0, :], norm)
    t2 = tang[:, 1] + np.einsum("na,nai->ni", grad[:, 1, :], norm)
    t1 = t1 / np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = t2 - np.einsum("ni,ni->n", t2, t1)[:, None] * t1
    t2 = t2 / np.linalg.norm(t2, axis=1, keepdims=True)
    n1 = norm[:, 0] - np.einsum("ni,ni->n", norm[:, 0], t1)[:, None] * t1 \
        - np.einsum("ni,ni->n", norm[:, 0], t2)[:, None] * t2
    n1 = n1 / np.linalg.norm(n1, axis=1, keepdims=True)
    n2 = norm[:, 1]
    for b in (t1, t2, n1):
        n2 = n2 - np.einsum("ni,ni->n", n2, b)[:, None] * b
    n2 = n2 / np.linalg.norm(n2, axis=1, keepdims=True)
    return np.stack([t1, t2], axis=1), np.stack([n1, n2], axis=1)


def _impute(mesh: SurfaceMesh, values: np.ndarray, flagged: np.ndarray) -> np.ndarray:
    """Fill flagged entries with the 1-ring average of known neighbours."""
    out = values.copy()
    known = ~flagged
    if known.all() or not known.any():
        return out
    A = mesh.adjacency
    flat = out.reshape(len(out), -1)
    for _ in range(IMPUTE_SWEEPS):
        todo = ~known
        if not todo.any():
            break
        w = A @ known.astype(float)
        s = A @ (flat * known[:, None])
        fill = todo & (w > 0)
        flat[fill] = s[fill] / w[fill, None]
        known = known | fill
    return flat.reshape(values.shape)


def geometry(mesh: SurfaceMesh) -> GeometryField:
    """Per-vertex and per-face differential geometry of a mesh."""
    cot, angles, areas = corner_data(mesh)
    corner_area = mixed_area_corners(mesh, cot, angles, areas)
    dual = vertex_sum(mesh, corner_area)
    L = cotan_laplacian(mesh, cot)
    H = (L @ mesh.vertices) / dual[:, None]
    fframe = face_frames(mesh)

    boundary = mesh.is_boundary_vertex.copy()
    angle_sum = vertex_sum(mesh, angles)
    defect = np.where(boundary, np.nan, 2 * np.pi - angle_sum)

    tang, norm, _ = _initial_frames(mesh, fframe, areas)
    nbr, mask = _padded_rows(two_ring(mesh))
    ids = np.arange(mesh.n_vertices)
    grad, _, bad = _fit(mesh, ids, nbr, mask, tang, norm)
    tang2, norm2 = _relevel(tang, norm, grad)
    ok = ~bad
    tang = np.where(ok[:, None, None], tang2, tang)
    norm = np.where(ok[:, None, None], norm2, norm)
    _, hess, bad2 = _fit(mesh, ids, nbr, mask, tang, norm)
    bad = bad | bad2

    # hess[:, p, a]: p = (uu, uv, vv), a = normal index
    sff = np.empty((mesh.n_vertices, 2, 2, 2))
    sff[:, :, 0, 0] = hess[:, 0, :]
    sff[:, :, 0, 1] = hess[:, 1, :]
    sff[:, :, 1, 0] = hess[:, 1, :]
    sff[:, :, 1, 1] = hess[:, 2, :]
    A2 = np.einsum("naij,naij->n", sff, sff)
    trace = sff[:, :, 0, 0] + sff[:, :, 1, 1]
    H_fit = np.einsum("na,nai->ni", trace, norm)

    flagged = bad | boundary
    notes = []
    if bad.any():
        notes.append(f"{int(bad.sum())} vertices with rank-deficient fit stencil")
    A2 = _impute(mesh, A2, flagged)
    sff = _impute(mesh, sff, flagged)
    H = _impute(mesh, H, boundary)
    K_defect = _impute(mesh, defect / dual, boundary)
    K = 0.5 * (np.einsum("ni,ni->n", H, H) - A2)

    return GeometryField(
        dual_area=dual, H=H, A2=A2, K=K, K_defect=K_defect, frame=tang, normal=norm, sff=sff,
        H_fit=H_fit, face_area=areas, face_frame=fframe, corner_area=corner_area,
        angle_defect=defect, flagged=flagged, boundary=boundary,
        mean_edge=float(mesh.edge_lengths.mean()), notes=notes,
    )


# -- integrals and regions ---------------------------------------------------

EXTRINSIC_BALL = "extrinsic-ball"
FACE_SUBSET = "face-subset"


@dataclass
class RegionSelector:
    center: np.ndarray
    radius: float
    mode: str = EXTRINSIC_BALL
    faces: np.ndarray | None = None

    def __post_init__(self):
        self.center = np.zeros(4) if self.center is None else np.asarray(self.center, dtype=float)
        if not self.radius > 0:
            raise ValueError("region radius must be positive")
        if self.mode not in (EXTRINSIC_BALL, FACE_SUBSET):
            raise ValueError(f"unknown region mode {self.mode!r}")


@dataclass
class TotalCurvature:
    int_A2: float
    minus_int_K: float
    int_K: float
    minimal_ratio: float
    empty: bool


def vertex_weights(mesh: SurfaceMesh, geom: GeometryField, region: RegionSelector | None) -> np.ndarray:
    """Lumped quadrature weights of the vertices inside ``region``."""
    if region is None:
        return geom.dual_area.copy()
    if region.mode == FACE_SUBSET:
        faces = np.zeros(mesh.n_faces, dtype=bool)
        faces[np.asarray(region.faces, dtype=np.int64)] = True
        return vertex_sum(mesh, geom.corner_area * faces[:, None])
    inside = np.linalg.norm(mesh.vertices - region.center, axis=1) <= region.radius
    return np.where(inside, geom.dual_area, 0.0)


def total_curvature(mesh: SurfaceMesh, region: RegionSelector | None = None,
                    geom: GeometryField | None = None) -> TotalCurvature:
    """Lumped integrals of |A|^2 and -K over a region."""
    geom = geometry(mesh) if geom is None else geom
    w = vertex_weights(mesh, geom, region)
    if not np.any(w > 0):
        warnings.warn("total_curvature: empty region", RuntimeWarning, stacklevel=2)
        return TotalCurvature(0.0, 0.0, 0.0, float("nan"), True)
    iA2 = float(np.dot(w, geom.A2))
    iK = float(np.dot(w, geom.K))
    ratio = iA2 / (-2.0 * iK) if iK != 0 else float("nan")
    return TotalCurvature(iA2, -iK, iK, ratio, False)


def edge_graph(mesh: SurfaceMesh) -> sparse.csr_matrix:
    e = mesh.edges
    n = mesh.n_vertices
    ln = mesh.edge_lengths
    g = sparse.coo_matrix((np.r_[ln, ln], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
    return g.tocsr()


def intrinsic_distance(mesh: SurfaceMesh, i: int, j: int) -> float:
    """Shortest edge-path length between two vertices."""
    d = csgraph.dijkstra(edge_graph(mesh), directed=False, indices=int(i))
    dist = float(d[int(j)])
    if not np.isfinite(dist):
        raise DisconnectedError(f"vertices {i} and {j} are disconnected")
    return dist


def intrinsic_distances_from(mesh: SurfaceMesh, sources) -> np.ndarray:
    return csgraph.dijkstra(edge_graph(mesh), directed=False, indices=np.asarray(sources, dtype=np.int64))


def distance_to_set(mesh: SurfaceMesh, sources) -> np.ndarray:
    """Edge-path distance from every vertex to the nearest source vertex."""
    return csgraph.dijkstra(edge_graph(mesh), directed=False, indices=np.asarray(sources, dtype=np.int64),
                            min_only=True)


def face_barycenters(mesh: SurfaceMesh) -> np.ndarray:
    return mesh.vertices[mesh.faces].mean(axis=1)


def components_in_ball(mesh: SurfaceMesh, center, R: float) -> list[np.ndarray]:
    """Face sets of the components of the part of the mesh in B_R meeting B_{R/2}."""
    if not R > 0:
        raise ValueError("R must be positive")
    c = np.asarray(center, dtype=float)
    bary = face_barycenters(mesh)
    inside = np.flatnonzero(np.linalg.norm(bary - c, axis=1) < R)
    if len(inside) == 0:
        return []
    sub = mesh.face_adjacency[inside][:, inside]
    _, labels = csgraph.connected_components(sub, directed=False)
    vdist = np.linalg.norm(mesh.vertices - c, axis=1)
    out = []
    for lab in np.unique(labels):
        fids = inside[labels == lab]
        verts = np.unique(mesh.faces[fids])
        near = vdist[verts].min() < R / 2 or np.linalg.norm(bary[fids] - c, axis=1).min() < R / 2
        if near:
            out.append((int(verts.min()), np.sort(fids)))
    out.sort(key=lambda t: t[0])
    return [f for _, f in out]


def subdomain_boundary_length(mesh: SurfaceMesh, face_ids) -> float:
    sel = np.zeros(mesh.n_faces, dtype=bool)
    sel[np.asarray(face_ids, dtype=np.int64)] = True
    ef = mesh.edge_faces
    c0 = np.where(ef[:, 0] >= 0, sel[ef[:, 0]], False)
    c1 = np.where(ef[:, 1] >= 0, sel[ef[:, 1]], False)
    border = c0 ^ c1
    return float(mesh.edge_lengths[border].sum())


def isoperimetric_ratio(mesh: SurfaceMesh, face_ids) -> float:
    """Area(A) / Length(dA)^2 of a face subset."""
    face_ids = np.asarray(face_ids, dtype=np.int64)
    length = subdomain_boundary_length(mesh, face_ids)
    if length <= 0:
        raise ClosedSubdomainError("closed subdomain: boundary is empty")
    return float(mesh.face_areas[face_ids].sum()) / length ** 2


_SUBDIV_LEVEL = 3


def _subdivision_barycentrics(level: int) -> np.ndarray:
    # centroids of the 4^level congruent sub-triangles, in barycentric coordinates
    n = 2 ** level
    pts = []
    for i in range(n):
        for j in range(n - i):
            pts.append(((i + 1 / 3) / n, (j + 1 / 3) / n))
            if i + j < n - 1:
                pts.append(((i + 2 / 3) / n, (j + 2 / 3) / n))
    pts = np.array(pts)
    return np.column_stack([1 - pts.sum(axis=1), pts[:, 0], pts[:, 1]])


_BARY = _subdivision_barycentrics(_SUBDIV_LEVEL)


def area_in_ball(mesh: SurfaceMesh, center, R: float) -> float:
    """Area of the mesh inside B_R(center); cut faces are resolved by subdivision."""
    c = np.asarray(center, dtype=float)
    tri = mesh.vertices[mesh.faces]
    d = np.linalg.norm(tri - c, axis=2)
    areas = mesh.face_areas
    full = (d <= R).all(axis=1)
    edge_len = np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2).max(axis=1)
    maybe = ~full & (d.min(axis=1) <= R + edge_len)
    total = areas[full].sum()
    if maybe.any():
        pts = np.einsum("sk,fki->fsi", _BARY, tri[maybe])
        frac = (np.linalg.norm(pts - c, axis=2) <= R).mean(axis=1)
        total += float(np.dot(frac, areas[maybe]))
    return float(total)


def area_ratio(mesh: SurfaceMesh, center, R: float) -> float:
    """Area(mesh inside B_R) / R^2."""
    if not R > 0:
        raise ValueError("R must be positive")
    return area_in_ball(mesh, center, R) / R ** 2
