"""a1 density convergence on a conformal torus: compare against -R sqrt(g) / 12."""
import argparse

import numpy as np

from ncgeom.clifford import build_gamma_rep
from ncgeom.fields import build_deformation, spin_connection_B
from ncgeom.grid import TorusGrid
from ncgeom.heat import QuadratureSpec, a1_density
from ncgeom.riemann import conformal_metric, scalar_curvature


def error_at(size: int, amp: float, hermite: int) -> float:
    grid = TorusGrid.uniform(2, size)
    rep = build_gamma_rep(2)
    x, y = grid.coords()
    m = conformal_metric(grid, amp * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y))
    f = build_deformation(m, rep, 0.0, B=spin_connection_B(m, rep))
    a1 = a1_density(f, QuadratureSpec(hermite_order=hermite))
    R = scalar_curvature(m)
    expect = -R * m.sqrt_g / 12
    mask = np.abs(R) > 0.1 * np.abs(R).max()
    diff = np.abs(a1 - expect[..., None, None] * np.eye(2)).max(axis=(-2, -1))
    return float((diff[mask] / np.abs(expect[mask])).max())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--amp", type=float, default=0.05)
    ap.add_argument("--hermite", type=int, default=12)
    args = ap.parse_args()
    prev = None
    for n in args.sizes:
        err = error_at(n, args.amp, args.hermite)
        ratio = "" if prev is None else f"  ratio {prev / err:.1f}"
        print(f"{n:4d}^2  rel err {err:.3e}{ratio}")
        prev = err


if __name__ == "__main__":
    main()
