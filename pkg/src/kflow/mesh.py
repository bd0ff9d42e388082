"""Triangle meshes immersed in R^4 and their combinatorial helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

CLOSED = "closed"
PINNED = "pinned-boundary"
BOUNDARY_POLICIES = (CLOSED, PINNED)

AREA_FLOOR_FACTOR = 1e-14


class MeshError(ValueError):
    """Raised when a mesh cannot be used for the requested operation."""


@dataclass(eq=False)
class SurfaceMesh:
    """Oriented triangle mesh with vertices in R^4.

    Vertices are stored as an ``(n, 4)`` float array and faces as an
    ``(m, 3)`` integer array. Meshes are treated as immutable: derived
    connectivity is cached on first use, so never modify the arrays in place.
    Use :meth:`with_vertices` to get a moved copy sharing the topology caches.
    """

    vertices: np.ndarray
    faces: np.ndarray
    boundary_policy: str = CLOSED
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2:
            raise MeshError("vertices must be a 2-d array")
        if v.shape[1] == 3:
            v = np.hstack([v, np.zeros((len(v), 1))])
        if v.shape[1] != 4:
            raise MeshError(f"vertices must have 4 coordinates, got {v.shape[1]}")
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise MeshError(f"unknown boundary policy {self.boundary_policy!r}")
        self.vertices = v
        self.faces = f
        self.tags = {k: np.asarray(sorted(set(int(i) for i in val)), dtype=np.int64)
                     for k, val in self.tags.items()}
        if self.boundary_policy == PINNED and "boundary" not in self.tags:
            self.tags["boundary"] = self.boundary_vertices

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "SurfaceMesh":
        """Copy with new positions and identical topology (caches are shared)."""
        new = SurfaceMesh.__new__(SurfaceMesh)
        new.vertices = np.asarray(vertices, dtype=float)
        new.faces = self.faces
        new.boundary_policy = self.boundary_policy
        new.tags = self.tags
        for name in _TOPOLOGY_CACHES:
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new

    # -- topology ---------------------------------------------------------

    @cached_property
    def _edge_data(self):
        f = self.faces
        half = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = np.sort(half, axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        return edges, inverse, counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as an ``(k, 2)`` array with ``i < j``."""
        return self._edge_data[0]

    @property
    def edge_face_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def face_edges(self) -> np.ndarray:
        """``(m, 3)`` edge ids; column c is the edge opposite corner c."""
        m = self.n_faces
        inv = self._edge_data[1]
        # half-edge blocks are (0,1), (1,2), (2,0): opposite corners 2, 0, 1
        fe = np.empty((m, 3), dtype=np.int64)
        fe[:, 2] = inv[:m]
        fe[:, 0] = inv[m:2 * m]
        fe[:, 1] = inv[2 * m:]
        return fe

    @cached_property
    def edge_faces(self) -> np.ndarray:
        """``(k, 2)`` incident faces per edge, ``-1`` where missing."""
        k = len(self.edges)
        out = -np.ones((k, 2), dtype=np.int64)
        fe = self.face_edges.reshape(-1)
        fid = np.repeat(np.arange(self.n_faces), 3)
        order = np.argsort(fe, kind="stable")
        fe_sorted, fid_sorted = fe[order], fid[order]
        first = np.ones(len(fe_sorted), dtype=bool)
        first[1:] = fe_sorted[1:] != fe_sorted[:-1]
        out[fe_sorted[first], 0] = fid_sorted[first]
        second = ~first
        # only the second incidence is kept for non-manifold edges
        out[fe_sorted[second], 1] = fid_sorted[second]
        return out

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_face_counts == 1)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges])

    @cached_property
    def is_boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = True
        return mask

    @property
    def pinned(self) -> np.ndarray:
        """Boolean mask of vertices held fixed by the flow."""
        if self.boundary_policy != PINNED:
            return np.zeros(self.n_vertices, dtype=bool)
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.tags.get("boundary", self.boundary_vertices)] = True
        return mask

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        a = sparse.coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
        return a.tocsr()

    @cached_property
    def face_adjacency(self) -> sparse.csr_matrix:
        ef = self.edge_faces
        inner = ef[(ef[:, 0] >= 0) & (ef[:, 1] >= 0)]
        m = self.n_faces
        data = np.ones(2 * len(inner))
        a = sparse.coo_matrix((data, (np.r_[inner[:, 0], inner[:, 1]], np.r_[inner[:, 1], inner[:, 0]])),
                              shape=(m, m))
        return a.tocsr()

    @cached_property
    def vertex_faces(self) -> sparse.csr_matrix:
        """Incidence matrix, vertices by faces."""
        m = self.n_faces
        rows = self.faces.reshape(-1)
        cols = np.repeat(np.arange(m), 3)
        return sparse.csr_matrix((np.ones(3 * m), (rows, cols)), shape=(self.n_vertices, m))

    @cached_property
    def vertex_components(self) -> np.ndarray:
        _, labels = csgraph.connected_components(self.adjacency, directed=False)
        return labels

    # -- geometry primitives ---------------------------------------------

    @property
    def face_edge_vectors(self):
        v, f = self.vertices, self.faces
        return v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]

    @property
    def face_areas(self) -> np.ndarray:
        a, b = self.face_edge_vectors
        return 0.5 * np.sqrt(np.maximum(_gram_det(a, b), 0.0))

    @property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @property
    def bbox_scale(self) -> float:
        if self.n_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def area_floor(self, factor: float = AREA_FLOOR_FACTOR) -> float:
        return factor * self.bbox_scale ** 2

    def total_area(self) -> float:
        return float(self.face_areas.sum())

    def submesh(self, face_ids) -> "SurfaceMesh":
        """Mesh made of the given faces, with unused vertices dropped.

        The original vertex ids are kept in ``tags['parent_vertex']``.
        """
        face_ids = np.asarray(face_ids, dtype=np.int64)
        f = self.faces[face_ids]
        used = np.unique(f)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[used] = np.arange(len(used))
        sub = SurfaceMesh(self.vertices[used], remap[f], boundary_policy=PINNED if len(face_ids) else self.boundary_policy)
        sub.tags = dict(sub.tags)
        sub.tags["parent_vertex"] = used
        sub.tags["parent_face"] = face_ids
        return sub

    def translated_scaled(self, scale: float, center=None) -> "SurfaceMesh":
        """Positions ``scale * (x - center)``."""
        c = np.zeros(4) if center is None else np.asarray(center, dtype=float)
        return self.with_vertices(scale * (self.vertices - c))


_TOPOLOGY_CACHES = ("_edge_data", "face_edges", "edge_faces", "boundary_edges", "boundary_vertices",
                    "is_boundary_vertex", "adjacency", "face_adjacency", "vertex_faces", "vertex_components")


def _gram_det(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    return aa * bb - ab * ab


def disjoint_union(*meshes: SurfaceMesh) -> SurfaceMesh:
    verts, faces, offset = [], [], 0
    boundary = []
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        if m.boundary_policy == PINNED:
            boundary.append(m.tags.get("boundary", m.boundary_vertices) + offset)
        offset += m.n_vertices
    policy = PINNED if boundary else CLOSED
    tags = {"boundary": np.concatenate(boundary)} if boundary else {}
    return SurfaceMesh(np.vstack(verts), np.vstack(faces), boundary_policy=policy, tags=tags)


def validate_mesh(mesh: SurfaceMesh, area_floor_factor: float = AREA_FLOOR_FACTOR) -> list[str]:
    """List the violated mesh invariants; an empty list means the mesh is valid."""
    problems = []
    if not np.all(np.isfinite(mesh.vertices)):
        problems.append("non-finite vertex positions")
        return problems
    if mesh.n_faces == 0:
        problems.append("mesh has no faces")
        return problems
    f = mesh.faces
    if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
        problems.append("face with repeated vertex")

    counts = mesh.edge_face_counts
    if np.any(counts > 2):
        problems.append(f"edge with 3 incident faces ({int(np.sum(counts > 2))} edges)")
    n_open = int(np.sum(counts == 1))
    if mesh.boundary_policy == CLOSED and n_open:
        problems.append(f"open boundary on closed mesh ({n_open} edges)")
    if mesh.boundary_policy == PINNED and n_open:
        tagged = np.zeros(mesh.n_vertices, dtype=bool)
        tagged[mesh.tags.get("boundary", [])] = True
        bv = mesh.edges[mesh.boundary_edges]
        if not np.all(tagged[bv]):
            problems.append("untagged boundary edge")

    if not _orientation_consistent(mesh):
        problems.append("inconsistent face orientation")

    floor = mesh.area_floor(area_floor_factor)
    small = mesh.face_areas < max(floor, np.finfo(float).tiny)
    if np.any(small):
        problems.append(f"area floor violated ({int(small.sum())} faces below {floor:.3e})")
    return problems


def _orientation_consistent(mesh: SurfaceMesh) -> bool:
    # each manifold edge must be traversed once in each direction
    f = mesh.faces
    half = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    inner = mesh.edge_face_counts[mesh._edge_data[1]] == 2
    directed = half[inner]
    if len(directed) == 0:
        return True
    _, c = np.unique(directed, axis=0, return_counts=True)
    return bool(np.all(c == 1))


# -- file formats ----------------------------------------------------------

KF_MESH_HEADER = "KF-MESH v1"


def write_kfmesh(mesh: SurfaceMesh, path) -> None:
    """Write the text format; ``repr`` of a float round-trips exactly."""
    lines = [KF_MESH_HEADER, f"{mesh.n_vertices} {mesh.n_faces} {mesh.boundary_policy}"]
    lines.extend(" ".join(repr(float(c)) for c in row) for row in mesh.vertices)
    lines.extend(f"{a} {b} {c}" for a, b, c in mesh.faces)
    if mesh.boundary_policy == PINNED:
        lines.append("boundary " + " ".join(str(int(i)) for i in mesh.tags.get("boundary", [])))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> SurfaceMesh:
    """Read KF-MESH v1, or an OFF-style file with 3 or 4 coordinates."""
    with open(path) as fh:
        tokens_by_line = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    head = " ".join(tokens_by_line[0])
    if head == KF_MESH_HEADER:
        nv, nf, policy = tokens_by_line[1][0], tokens_by_line[1][1], tokens_by_line[1][2]
        nv, nf = int(nv), int(nf)
        body = tokens_by_line[2:]
        verts = np.array([[float(x) for x in row] for row in body[:nv]], dtype=float)
        faces = np.array([[int(x) for x in row] for row in body[nv:nv + nf]], dtype=np.int64)
        tags = {}
        for row in body[nv + nf:]:
            tags[row[0]] = [int(x) for x in row[1:]]
        return SurfaceMesh(verts, faces.reshape(-1, 3), boundary_policy=policy, tags=tags)
    if tokens_by_line[0][0] in ("OFF", "4OFF", "COFF", "NOFF"):
        counts = tokens_by_line[1]
        nv, nf = int(counts[0]), int(counts[1])
        body = tokens_by_line[2:]
        verts = np.array([[float(x) for x in row] for row in body[:nv]], dtype=float)
        faces = []
        for row in body[nv:nv + nf]:
            k = int(row[0])
            idx = [int(x) for x in row[1:1 + k]]
            # fan-triangulate polygons
            faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, k - 1))
        mesh = SurfaceMesh(verts, np.array(faces, dtype=np.int64))
        if len(mesh.boundary_edges):
            mesh = SurfaceMesh(mesh.vertices, mesh.faces, boundary_policy=PINNED)
        return mesh
    raise MeshError(f"unrecognised mesh header {head!r}")
