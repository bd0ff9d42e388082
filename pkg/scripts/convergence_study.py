"""Refinement study of the discrete curvature and Kahler-angle operators.

Prints, for each closed-form surface, the sup error of |A|^2, K, |H| and the
Gauss-equation defect at three resolutions together with observed orders.
"""

import argparse

import numpy as np

from kflow.flow import interior_mask
from kflow.geometry import geometry
from kflow.kahler import kahler_angle
from kflow.scenarios import icosphere, scenario


def errors(mesh, A2, K, H, fraction=0.0):
    g = geometry(mesh)
    keep = interior_mask(mesh, fraction) & ~g.flagged
    if A2 is None:
        A2 = -2 * K
    return {
        "A2": float(np.abs(g.A2 - A2)[keep].max()),
        "K": float(np.abs(g.K - K)[keep].max()),
        "H": float(np.abs(g.H_norm - H)[keep].max()),
        # angle-defect K against the Gauss equation on the fitted form
        "gauss": float(np.abs(g.K_defect - 0.5 * (g.H_norm ** 2 - g.A2))[keep].max()),
        "h": float(mesh.edge_lengths.mean()),
    }


def cases(scale):
    for k in (2, 3, 4):
        yield "sphere", errors(icosphere(k + scale - 1), 2.0, 1.0, 2.0)
    for n in (16, 32, 64):
        yield "clifford", errors(scenario("clifford_torus", n * scale).mesh, 2.0, 0.0, np.sqrt(2))
    for n in (20, 40, 80):
        sc = scenario("holomorphic_graph", n * scale)
        z = sc.mesh.vertices[:, 0] + 1j * sc.mesh.vertices[:, 1]
        yield "z^2 graph", errors(sc.mesh, None, sc.oracle["K"](z), 0.0, fraction=0.3)


def kahler_channels(scale):
    print("\nKahler angle on the bump potential graph: face vs frame channel, sup |cos alpha|")
    for n in (24, 48, 96):
        ang = kahler_angle(scenario("lagrangian_potential_graph", n * scale).mesh)
        print(f"  n={n * scale:4d}  face {np.abs(ang.face_cos).max():.3e}  frame {np.abs(ang.frame_cos).max():.3e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", type=int, default=1, help="multiply every resolution by this factor")
    args = ap.parse_args()
    rows = {}
    for name, e in cases(args.scale):
        rows.setdefault(name, []).append(e)
    for name, es in rows.items():
        print(f"\n{name}")
        print("  " + "  ".join(f"{k:>10s}" for k in es[0]))
        for i, e in enumerate(es):
            line = "  " + "  ".join(f"{v:10.3e}" for v in e.values())
            if i:
                prev = es[i - 1]
                orders = [np.log(prev[k] / e[k]) / np.log(prev["h"] / e["h"]) if e[k] > 1e-12 else np.nan
                          for k in ("A2", "K", "H", "gauss")]
                line += "   orders " + " ".join(f"{o:5.2f}" for o in orders)
            print(line)
    kahler_channels(args.scale)


if __name__ == "__main__":
    main()
