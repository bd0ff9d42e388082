"""Backward heat kernel and weighted Gaussian densities along rescaled flows."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryField, geometry
from .kahler import EPS_SYM, AngleField, kahler_angle, lagrangian_angle, vertex_gradient
from .mesh import SurfaceMesh

UNIT = "unit"
INV_COS = "inv-cos"
BETA2 = "beta2"
WEIGHT_MODES = (UNIT, INV_COS, BETA2)

# kernel factor below which a node is treated as outside the kernel's support
SUPPORT_CUTOFF = 1e-3


class WeightSingularError(ValueError):
    pass


def backward_heat_kernel(X, X0, t, t0):
    """(4 pi (t0 - t))^-1 exp(-|X - X0|^2 / (4 (t0 - t))), evaluated row-wise on ``X``."""
    tau = t0 - t
    if np.any(np.asarray(tau) <= 0):
        raise ValueError("backward heat kernel needs t < t0")
    d2 = np.sum((np.asarray(X, dtype=float) - np.asarray(X0, dtype=float)) ** 2, axis=-1)
    with np.errstate(under="ignore"):
        return np.exp(-d2 / (4 * tau)) / (4 * np.pi * tau)


@dataclass
class DensitySample:
    s: float
    phi: float
    unweighted: float
    term_shrinker: float
    term_grad: float
    quad_error: float
    under_resolved: bool
    truncation_bias: float


def _weights(mode, angles: AngleField | None, eps_sym, support):
    if mode == UNIT:
        return None
    if mode == INV_COS:
        c = angles.frame_cos
        if np.any(c[support] <= eps_sym):
            raise WeightSingularError(f"weight singular: cos alpha = {c[support].min():.3e} <= {eps_sym:g}")
        return 1.0 / c
    if mode == BETA2:
        return angles.vertex_beta ** 2
    raise ValueError(f"unknown weight mode {mode!r}; choose from {WEIGHT_MODES}")


def gaussian_density(mesh: SurfaceMesh, s: float, s0: float, X0, mode: str = UNIT,
                     angles: AngleField | None = None, geom: GeometryField | None = None,
                     eps_sym: float = EPS_SYM) -> DensitySample:
    """Vertex-lumped weighted Gaussian density and the two dissipation integrands."""
    if s >= s0:
        raise ValueError("gaussian density needs s < s0")
    geom = geometry(mesh) if geom is None else geom
    if mode != UNIT and angles is None:
        angles = kahler_angle(mesh, geom=geom)
        if mode == BETA2:
            lagrangian_angle(mesh, geom=geom, angles=angles)
    tau = s0 - s
    X0 = np.asarray(X0, dtype=float)
    x = mesh.vertices
    rho = backward_heat_kernel(x, X0, s, s0)
    factor = rho * 4 * np.pi * tau
    support = factor > SUPPORT_CUTOFF
    w = _weights(mode, angles, eps_sym, support)
    wv = np.ones(len(x)) if w is None else w
    dmu = geom.dual_area

    phi = float(np.sum(wv * rho * dmu))
    unweighted = float(np.sum(rho * dmu))

    # edge-midpoint rule on faces as an independent quadrature
    f = mesh.faces
    mids = 0.5 * (x[f] + x[np.roll(f, -1, axis=1)])
    wmid = 0.5 * (wv[f] + wv[np.roll(f, -1, axis=1)])
    rmid = backward_heat_kernel(mids, X0, s, s0)
    phi_mid = float(np.sum((wmid * rmid).mean(axis=1) * geom.face_area))
    quad_error = abs(phi - phi_mid)

    F = x - X0
    Fperp = np.einsum("nij,nj->ni", geom.normal_projector(), F)
    dev = geom.H + Fperp / (2 * tau)
    shrink = float(np.sum(wv * rho * np.einsum("ni,ni->n", dev, dev) * dmu))

    if mode == INV_COS:
        c = angles.frame_cos
        g2 = np.einsum("ni,ni->n", angles.grad_cos, angles.grad_cos)
        grad_term = float(np.sum(2.0 / c ** 3 * g2 * rho * dmu))
    elif mode == BETA2:
        gb = vertex_gradient(mesh, angles.vertex_beta, geom, periodic=True)
        grad_term = float(np.sum(np.einsum("ni,ni->n", gb, gb) * rho * dmu))
    else:
        grad_term = 0.0

    # resolution: longest edge where the kernel carries weight must not exceed sqrt(tau)
    e = mesh.edges
    a, d_e = x[e[:, 0]], x[e[:, 1]] - x[e[:, 0]]
    t_near = np.clip(np.einsum("ni,ni->n", X0 - a, d_e) / np.einsum("ni,ni->n", d_e, d_e), 0.0, 1.0)
    near = a + t_near[:, None] * d_e
    live = np.sum((near - X0) ** 2, axis=1) / (4 * tau) < -np.log(SUPPORT_CUTOFF)
    h = float(mesh.edge_lengths[live].max()) if live.any() else 0.0
    under = h > np.sqrt(tau)

    bnd = mesh.boundary_vertices
    if len(bnd):
        d = float(np.linalg.norm(x[bnd] - X0, axis=1).min())
        bias = float(np.exp(-d * d / (4 * tau)))
    else:
        bias = 0.0
    return DensitySample(float(s), phi, unweighted, shrink, grad_term, quad_error, bool(under), bias)


@dataclass
class DensityTrace:
    X0: np.ndarray
    s0: float
    mode: str
    samples: list
    mono_tol: float = np.nan
    monotone: bool = True
    worst_increase: float = 0.0
    dyadic: list = field(default_factory=list)
    accounting_ok: bool = True
    excluded: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.samples], dtype=float)


def _trapezoid(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def density_trace(stack, s0: float, X0, mode: str = UNIT, eps_sym: float = EPS_SYM,
                  base_tol: float = 1e-2, trunc_tol: float | None = None) -> DensityTrace:
    """Density and dissipation over a stack of ``(s, mesh)`` pairs with ``s < s0``.

    The trace is ``monotone`` when Phi(s2) <= Phi(s1) + mono_tol for all resolved
    samples s1 < s2, with mono_tol = base_tol + 3 x the largest quadrature error.
    A sample is resolved when its mesh resolves the kernel and the kernel mass
    lost past a pinned boundary is at most ``trunc_tol`` (default ``base_tol``).
    """
    trunc_tol = base_tol if trunc_tol is None else trunc_tol
    pairs = sorted(((float(s), m) for s, m in stack), key=lambda p: p[0])
    samples = [gaussian_density(m, s, s0, X0, mode, eps_sym=eps_sym) for s, m in pairs if s < s0]
    tr = DensityTrace(np.asarray(X0, dtype=float), float(s0), mode, samples)
    ok = [p for p in samples if not p.under_resolved and p.truncation_bias <= trunc_tol]
    tr.excluded = len(samples) - len(ok)
    if not ok:
        tr.monotone = False
        return tr
    qerr = max(p.quad_error for p in ok)
    tr.mono_tol = base_tol + 3 * qerr
    phi = np.array([p.phi for p in ok])
    rise = phi[None, :] - phi[:, None]
    upper = np.triu(np.ones_like(rise, dtype=bool), 1)
    tr.worst_increase = float(max(rise[upper].max(), 0.0)) if upper.any() else 0.0
    tr.monotone = tr.worst_increase <= tr.mono_tol

    # dyadic windows [s0 + 4 tau, s0 + 2 tau] covered by the samples
    s = np.array([p.s for p in ok])
    shr = np.array([p.term_shrinker for p in ok])
    acc_tol = 3 * qerr
    if len(s) >= 2:
        tau = s[0] - s0
        while s0 + 2 * tau <= s[-1] + 1e-15:
            if s0 + 4 * tau >= s[0] - 1e-15:
                a, b = s0 + 4 * tau, s0 + 2 * tau
                grid = np.concatenate([[a], s[(s > a) & (s < b)], [b]])
                drop = float(np.interp(a, s, phi) - np.interp(b, s, phi))
                diss = _trapezoid(np.interp(grid, s, shr), grid)
                ok_acc = drop >= diss - acc_tol
                tr.dyadic.append({"s1": a, "s2": b, "phi_drop": drop, "shrinker_integral": diss, "ok": bool(ok_acc)})
                tr.accounting_ok &= ok_acc
            tau /= 2
    return tr


def write_trace_csv(trace: DensityTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "phi", "term_shrinker", "term_grad", "under_resolved_flag"])
        for p in trace.samples:
            w.writerow([repr(p.s), repr(p.phi), repr(p.term_shrinker), repr(p.term_grad), int(p.under_resolved)])
