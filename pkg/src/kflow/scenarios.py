"""Initial surfaces with their closed-form oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import CLOSED, PINNED, SurfaceMesh, disjoint_union, validate_mesh


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    mesh: SurfaceMesh
    params: dict
    oracle: dict = field(default_factory=dict)
    expectation: str = "none"


# -- mesh builders -----------------------------------------------------------


def icosphere(subdivisions: int, radius: float = 1.0) -> SurfaceMesh:
    """Subdivided icosahedron projected to the sphere, in R^3 x {0}."""
    t = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        v, f = _midpoint_subdivide(v, f)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return SurfaceMesh(radius * v, f, boundary_policy=CLOSED)


def _midpoint_subdivide(v, f):
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    m = len(f)
    base = len(v)
    a, b, c = inv[:m] + base, inv[m:2 * m] + base, inv[2 * m:] + base
    f0, f1, f2 = f[:, 0], f[:, 1], f[:, 2]
    nf = np.concatenate([np.column_stack([f0, a, c]), np.column_stack([f1, b, a]),
                         np.column_stack([f2, c, b]), np.column_stack([a, b, c])])
    return np.vstack([v, mid]), nf


def torus_lattice(n1: int, n2: int):
    """Faces of a periodic n1 x n2 grid with one diagonal per cell."""
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i, j = i.ravel(), j.ravel()
    idx = lambda a, b: (a % n1) * n2 + (b % n2)  # noqa: E731
    v00, v10, v01, v11 = idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)
    faces = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    return faces


def clifford_torus_mesh(n: int, radius: float = 1.0) -> SurfaceMesh:
    th = 2 * np.pi * np.arange(n) / n
    t1, t2 = np.meshgrid(th, th, indexing="ij")
    t1, t2 = t1.ravel(), t2.ravel()
    v = radius * np.column_stack([np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)])
    return SurfaceMesh(v, torus_lattice(n, n), boundary_policy=CLOSED)


def clifford_generator_loops(n: int):
    """Face loops (along theta1 at fixed theta2, and vice versa) of the lattice torus."""
    # face ids: lower triangle of cell (i, j) is i*n + j, upper is n*n + i*n + j
    m = n * n
    loop1, loop2 = [], []
    for i in range(n):
        # walk in theta1 through the cells of row j = 0
        loop1 += [m + i * n, i * n]
    for j in range(n):
        loop2 += [j, m + j]
    return np.array(loop1), np.array(loop2)


def lattice_grid(n: int, half_width: float, disc: bool = True):
    """Regular triangulated lattice over [-w, w]^2, optionally clipped to a disc.

    With ``disc`` only faces whose three vertices lie in the closed disc of
    radius ``half_width`` are kept.
    """
    xs = np.linspace(-half_width, half_width, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda a, b: a * (n + 1) + b  # noqa: E731
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    faces = np.concatenate([np.column_stack([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]),
                            np.column_stack([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)])])
    if disc:
        r = np.linalg.norm(pts, axis=1)
        keep = (r[faces] <= half_width * (1 + 1e-12)).all(axis=1)
        faces = faces[keep]
    used = np.unique(faces)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return pts[used], remap[faces]


def graph_mesh(fn: Callable[[np.ndarray], np.ndarray], n: int, R: float, disc: bool = True) -> SurfaceMesh:
    """Graph {(z, fn(z))} in C^2 = R^4 with coordinates (x1, y1, x2, y2)."""
    xy, faces = lattice_grid(n, R, disc=disc)
    z = xy[:, 0] + 1j * xy[:, 1]
    w = fn(z)
    v = np.column_stack([xy[:, 0], xy[:, 1], w.real, w.imag])
    return SurfaceMesh(v, faces, boundary_policy=PINNED)


def polynomial(coeffs) -> Callable[[np.ndarray], np.ndarray]:
    """Complex polynomial with ``coeffs[k]`` multiplying z**k."""
    c = np.asarray(coeffs, dtype=complex)

    def f(z):
        return np.polynomial.polynomial.polyval(z, c)
    return f


def plane_mesh(n: int, R: float, kind: str = "holomorphic", offset=None, disc: bool = True) -> SurfaceMesh:
    """Flat disc in span{dx1, dy1} (holomorphic) or span{dx1, dx2} (Lagrangian)."""
    xy, faces = lattice_grid(n, R, disc=disc)
    v = np.zeros((len(xy), 4))
    if kind == "holomorphic":
        v[:, 0], v[:, 1] = xy[:, 0], xy[:, 1]
    elif kind == "lagrangian":
        v[:, 0], v[:, 2] = xy[:, 0], xy[:, 1]
    elif kind == "lagrangian-i":
        v[:, 0], v[:, 3] = xy[:, 0], xy[:, 1]
    else:
        raise ScenarioError(f"unknown plane kind {kind!r}")
    if offset is not None:
        v += np.asarray(offset, dtype=float)
    return SurfaceMesh(v, faces, boundary_policy=PINNED)


def potential_graph_mesh(hess_grad, n: int, L: float) -> SurfaceMesh:
    """Lagrangian graph {(x1, u_1, x2, u_2)} of a potential over [-L, L]^2."""
    xy, faces = lattice_grid(n, L, disc=False)
    g = hess_grad(xy)["grad"]
    v = np.column_stack([xy[:, 0], g[:, 0], xy[:, 1], g[:, 1]])
    return SurfaceMesh(v, faces, boundary_policy=PINNED)


def cosine_potential(eps: float, cross: float = 0.0):
    """u = eps (cos x1 + cos x2) + cross sin x1 sin x2."""

    def derivs(xy):
        x1, x2 = xy[:, 0], xy[:, 1]
        grad = np.column_stack([-eps * np.sin(x1) + cross * np.cos(x1) * np.sin(x2),
                                -eps * np.sin(x2) + cross * np.sin(x1) * np.cos(x2)])
        h11 = -eps * np.cos(x1) - cross * np.sin(x1) * np.sin(x2)
        h22 = -eps * np.cos(x2) - cross * np.sin(x1) * np.sin(x2)
        h12 = cross * np.cos(x1) * np.cos(x2)
        return {"grad": grad, "hess": np.stack([np.column_stack([h11, h12]), np.column_stack([h12, h22])], axis=1)}
    return derivs


def _bump(x):
    return (1 + np.cos(x)) ** 2 / 4


def _bump_d(x):
    return -(1 + np.cos(x)) * np.sin(x) / 2


def _bump_dd(x):
    return (np.sin(x) ** 2 - (1 + np.cos(x)) * np.cos(x)) / 2


def bump_potential(eps: float, separable: bool = False):
    """Periodic bump g(x) = (1 + cos x)^2 / 4, flat to fourth order at x = +-pi.

    The default u = eps g(x1) g(x2) is flat along the whole boundary, so a pinned
    boundary is nearly consistent with the flow; its triangles carry an O(h)
    chordal Kahler-angle defect. ``separable`` gives u = eps (g(x1) + g(x2)), a
    product of two curves whose triangulation is exactly Lagrangian face by face,
    but whose boundary would have to move under the flow.
    """

    def derivs(xy):
        x1, x2 = xy[:, 0], xy[:, 1]
        if separable:
            grad = eps * np.column_stack([_bump_d(x1), _bump_d(x2)])
            h11, h22, h12 = eps * _bump_dd(x1), eps * _bump_dd(x2), np.zeros_like(x1)
        else:
            grad = eps * np.column_stack([_bump_d(x1) * _bump(x2), _bump(x1) * _bump_d(x2)])
            h11 = eps * _bump_dd(x1) * _bump(x2)
            h22 = eps * _bump(x1) * _bump_dd(x2)
            h12 = eps * _bump_d(x1) * _bump_d(x2)
        return {"grad": grad, "hess": np.stack([np.column_stack([h11, h12]), np.column_stack([h12, h22])], axis=1)}
    return derivs


def lagrangian_angle_of_potential(hess: np.ndarray) -> np.ndarray:
    """beta = arg det(I + i D^2u)."""
    eye = np.eye(2)[None]
    return np.angle(np.linalg.det(eye + 1j * hess))


# -- symplectic perturbation -------------------------------------------------


def bump_field(seed: int, n_bumps: int = 4, spread: float = 0.8, width: float = 0.35):
    """Seeded sum of complex-amplitude Gaussian bumps; not holomorphic."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-spread, spread, size=(n_bumps, 2))
    amps = rng.normal(size=n_bumps) + 1j * rng.normal(size=n_bumps)
    amps /= np.abs(amps).max()

    def g(z):
        out = np.zeros(z.shape, dtype=complex)
        for (cx, cy), a in zip(centers, amps):
            out += a * np.exp(-((z.real - cx) ** 2 + (z.imag - cy) ** 2) / (2 * width ** 2))
        return out
    return g


def _min_face_cos_alpha(mesh: SurfaceMesh) -> float:
    from .kahler import face_cos_alpha, standard_structure
    return float(face_cos_alpha(mesh, standard_structure()[0]).min())


# -- registry ----------------------------------------------------------------

SCENARIOS = ("round_sphere", "clifford_torus", "holomorphic_graph", "lagrangian_potential_graph",
             "symplectic_perturbed_graph", "two_planes", "plane")


def scenario(name: str, n: int, **params) -> Scenario:
    """Build a named initial surface at resolution ``n`` with its oracle bundle."""
    if name == "round_sphere":
        r0 = float(params.get("r0", 1.0))
        if r0 <= 0 or n < 0:
            raise ScenarioError("round_sphere needs r0 > 0 and n >= 0")
        mesh = icosphere(n, r0)
        T = r0 ** 2 / 4
        oracle = {
            "T": T,
            "radius": lambda t: np.sqrt(np.maximum(r0 ** 2 - 4 * t, 0.0)),
            "area": lambda t: 4 * np.pi * (r0 ** 2 - 4 * t),
            "A2": lambda t: 2 / (r0 ** 2 - 4 * t),
            "type_ratio": 0.5,
            "center": np.zeros(4),
        }
        sc = Scenario(name, mesh, {"r0": r0, "n": n}, oracle, "none")
    elif name == "clifford_torus":
        r0 = float(params.get("r0", 1.0))
        if r0 <= 0 or n < 4:
            raise ScenarioError("clifford_torus needs r0 > 0 and n >= 4")
        mesh = clifford_torus_mesh(n, r0)
        oracle = {
            "T": r0 ** 2 / 2,
            "radius2": lambda t: r0 ** 2 - 2 * t,
            "A2": lambda t: 2 / (r0 ** 2 - 2 * t),
            "type_ratio": 1.0,
            "beta_winding": (1, 1),
            "generator_loops": clifford_generator_loops(n),
            "center": np.zeros(4),
        }
        sc = Scenario(name, mesh, {"r0": r0, "n": n}, oracle, "lagrangian")
    elif name == "holomorphic_graph":
        coeffs = params.get("coeffs", [0, 0, 1])
        R = float(params.get("R", 2.0))
        if n < 4 or R <= 0:
            raise ScenarioError("holomorphic_graph needs n >= 4 and R > 0")
        f = polynomial(coeffs)
        mesh = graph_mesh(f, n, R)
        c = np.asarray(coeffs, dtype=complex)
        degree = int(np.max(np.flatnonzero(np.abs(c) > 0))) if np.any(np.abs(c) > 0) else 0
        oracle = {"cos_alpha": 1.0, "H": 0.0, "f": f, "coeffs": list(coeffs), "R": R,
                  "total_curvature_N": max(degree - 1, 0)}
        if list(np.trim_zeros(c, "b")) == [0, 0, 1]:
            oracle["K"] = lambda z: -8 / (1 + 4 * np.abs(z) ** 2) ** 3
            oracle["minus_int_K_disc"] = lambda r: 2 * np.pi * (1 - 1 / (1 + 4 * r ** 2))
        sc = Scenario(name, mesh, {"coeffs": list(coeffs), "R": R, "n": n}, oracle, "symplectic")
    elif name == "lagrangian_potential_graph":
        eps = float(params.get("eps", 0.5))
        kind = params.get("potential", "bump")
        L = float(params.get("L", np.pi))
        if kind in ("bump", "bump-sum"):
            pot = bump_potential(eps, separable=kind == "bump-sum")
        elif kind == "cosine":
            pot = cosine_potential(eps, float(params.get("cross", 0.0)))
        else:
            raise ScenarioError(f"unknown potential {kind!r}; use 'bump', 'bump-sum' or 'cosine'")
        mesh = potential_graph_mesh(pot, n, L)
        oracle = {"beta": lambda xy: lagrangian_angle_of_potential(pot(xy)["hess"]), "potential": pot}
        sc = Scenario(name, mesh, {"eps": eps, "potential": kind, "L": L, "n": n}, oracle, "almost-calibrated")
    elif name == "symplectic_perturbed_graph":
        eps = float(params.get("eps", 0.3))
        seed = int(params.get("seed", 0))
        R = float(params.get("R", 2.0))
        coeffs = params.get("coeffs", [0])
        min_cos = float(params.get("min_cos", 0.2))
        base = polynomial(coeffs)
        bumps = bump_field(seed)
        amp = eps
        for _ in range(40):
            mesh = graph_mesh(lambda z: base(z) + amp * bumps(z), n, R)
            if _min_face_cos_alpha(mesh) >= min_cos:
                break
            amp *= 0.8
        else:
            raise ScenarioError("could not certify the symplectic perturbation")
        oracle = {"amplitude": amp, "eps0": _min_face_cos_alpha(mesh)}
        sc = Scenario(name, mesh, {"eps": eps, "seed": seed, "R": R, "coeffs": list(coeffs), "n": n},
                      oracle, "symplectic")
    elif name == "two_planes":
        d = float(params.get("d", 1.0))
        R = float(params.get("R", 2.0))
        kind = params.get("kind", "holomorphic")
        normal = [0, 0, 1, 0] if kind == "holomorphic" else [0, 1, 0, 0]
        off = 0.5 * d * np.asarray(normal, dtype=float)
        mesh = disjoint_union(plane_mesh(n, R, kind, -off), plane_mesh(n, R, kind, off))
        sc = Scenario(name, mesh, {"d": d, "R": R, "n": n, "kind": kind}, {"components": 2}, "symplectic")
    elif name == "plane":
        R = float(params.get("R", 2.0))
        kind = params.get("kind", "holomorphic")
        mesh = plane_mesh(n, R, kind)
        exp = "symplectic" if kind == "holomorphic" else "almost-calibrated"
        sc = Scenario(name, mesh, {"R": R, "n": n, "kind": kind}, {"H": 0.0, "A2": 0.0}, exp)
    else:
        raise ScenarioError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    problems = validate_mesh(sc.mesh)
    if problems:
        raise ScenarioError(f"generated mesh for {name} is invalid: {problems}")
    return sc
