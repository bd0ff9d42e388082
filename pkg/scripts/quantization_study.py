"""Total-curvature quantization on holomorphic graphs of z^k and on unions of sheets.

For the graph of z^k the total curvature of the whole graph is -2 pi (k - 1),
so N_hat should approach k - 1 as the disc grows and the mesh refines.
"""

import argparse

from kflow.mesh import disjoint_union
from kflow.scenarios import graph_mesh, plane_mesh, polynomial
from kflow.singularity import quantization


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--degrees", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--resolutions", type=int, nargs="+", default=[20, 40, 80])
    ap.add_argument("-R", type=float, default=2.0)
    args = ap.parse_args()

    print(f"{'surface':>14s} {'n':>4s} {'N_hat':>8s} {'nearest':>8s} {'extrap':>7s}  raw values by radius")
    for k in args.degrees:
        coeffs = [0] * k + [1]
        for n in args.resolutions:
            q = quantization(graph_mesh(polynomial(coeffs), n, args.R))
            print(f"{f'z^{k}':>14s} {n:4d} {q.N_hat:8.4f} {q.nearest:8d} {str(q.extrapolated):>7s}  "
                  + " ".join(f"{v:.4f}" for v in q.values))
    n = args.resolutions[-1]
    z2 = graph_mesh(polynomial([0, 0, 1]), n, args.R)
    two = disjoint_union(z2, graph_mesh(lambda z: z * z + 0.5j, n, args.R))
    for name, mesh in (("plane", plane_mesh(n, args.R)), ("two z^2 sheets", two)):
        q = quantization(mesh)
        print(f"{name:>14s} {n:4d} {q.N_hat:8.4f} {q.nearest:8d} {str(q.extrapolated):>7s}")


if __name__ == "__main__":
    main()
