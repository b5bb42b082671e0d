"""Finsler metrics from eigenvalue branches of the matrix symbol.

A branch is a cluster of sorted eigenvalues of H(x, xi) = a^{mu nu}(x) xi_mu xi_nu
that is separated from the rest of the spectrum.  Its value h(xi) is the
cluster mean, which is smooth wherever the cluster stays isolated, so a
commutative symbol (one cluster of multiplicity N) is an ordinary branch.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BranchAnomalyWarning, DegenerateBranch, EllipticityError, InputError
from .fields import NCFields, sphere_directions

CLUSTER_TOL = 1e-9
GAP_FACTOR = 10.0


@dataclass(frozen=True)
class BranchSample:
    eigenvalues: np.ndarray
    clusters: tuple  # (start, stop) index ranges into eigenvalues
    gaps: np.ndarray  # per cluster, distance to the nearest other cluster

    @property
    def values(self) -> np.ndarray:
        return np.array([self.eigenvalues[a:b].mean() for a, b in self.clusters])


def _check_xi(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise InputError("xi must be non-zero")
    return xi


def _clusters(w: np.ndarray, tol: float) -> tuple:
    scale = max(float(np.abs(w).max()), 1e-300)
    bounds, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > tol * scale:
            bounds.append((start, i))
            start = i
    return tuple(bounds)


def _gaps(w: np.ndarray, clusters: tuple) -> np.ndarray:
    out = np.full(len(clusters), np.inf)
    for k, (a, b) in enumerate(clusters):
        if a > 0:
            out[k] = min(out[k], w[a] - w[a - 1])
        if b < len(w):
            out[k] = min(out[k], w[b] - w[b - 1])
    return out


def eigen_branches(fields: NCFields, x, xi, tol: float = CLUSTER_TOL) -> BranchSample:
    """Ascending eigenvalues of H(x, xi) grouped into branches, with gaps."""
    xi = _check_xi(xi)
    a = fields.a[tuple(x)]
    w = np.linalg.eigvalsh(np.einsum("m,n,mnij->ij", xi, xi, a))
    if w[0] <= 0:
        raise EllipticityError(f"symbol eigenvalue {w[0]:.3g} <= 0 at point {tuple(x)}, xi={xi.tolist()}")
    cl = _clusters(w, tol)
    return BranchSample(w, cl, _gaps(w, cl))


@dataclass(frozen=True, eq=False)
class FinslerBranch:
    a_point: np.ndarray  # (n, n, N, N) symbol coefficients at x
    branch_index: int
    start: int
    stop: int
    point: tuple = ()

    @property
    def n(self) -> int:
        return self.a_point.shape[0]

    @property
    def multiplicity(self) -> int:
        return self.stop - self.start

    def spectrum(self, xis) -> np.ndarray:
        xis = np.atleast_2d(np.asarray(xis, dtype=float))
        H = np.einsum("km,kn,mnij->kij", xis, xis, self.a_point)
        return np.linalg.eigvalsh(H)

    def h(self, xis) -> np.ndarray:
        return self.spectrum(xis)[:, self.start : self.stop].mean(axis=1)

    def gap(self, xis) -> float:
        """Minimum distance from the branch to the rest of the spectrum over ``xis``."""
        w = self.spectrum(xis)
        g = np.full(len(w), np.inf)
        if self.start > 0:
            g = np.minimum(g, w[:, self.start] - w[:, self.start - 1])
        if self.stop < w.shape[1]:
            g = np.minimum(g, w[:, self.stop] - w[:, self.stop - 1])
        return float(g.min())


def branches_at(fields: NCFields, x, xi, tol: float = CLUSTER_TOL) -> list:
    sample = eigen_branches(fields, x, xi, tol)
    a = fields.a[tuple(x)]
    return [FinslerBranch(a, k, s, e, tuple(int(i) for i in x)) for k, (s, e) in enumerate(sample.clusters)]


def _stencil(n: int) -> list:
    offs = [np.zeros(n)]
    for i in range(n):
        e = np.eye(n)[i]
        offs += [e, -e]
    for i, j in itertools.combinations(range(n), 2):
        ei, ej = np.eye(n)[i], np.eye(n)[j]
        offs += [ei + ej, ei - ej, -ei + ej, -ei - ej]
    return offs


def _differences(vals: dict, n: int, s: float) -> tuple:
    """Central gradient and Hessian from stencil values keyed by offset tuples."""
    def v(*o):
        return vals[tuple(float(c) for c in o)]

    eye = np.eye(n)
    h0 = v(*np.zeros(n))
    grad = np.array([(v(*eye[i]) - v(*-eye[i])) / (2 * s) for i in range(n)])
    hess = np.zeros((n, n))
    for i in range(n):
        hess[i, i] = (v(*eye[i]) - 2 * h0 + v(*-eye[i])) / s**2
    for i, j in itertools.combinations(range(n), 2):
        ei, ej = eye[i], eye[j]
        hess[i, j] = hess[j, i] = (v(*(ei + ej)) - v(*(ei - ej)) - v(*(ej - ei)) + v(*(-ei - ej))) / (4 * s * s)
    return grad, hess


@dataclass(frozen=True)
class FinslerPoint:
    xi: np.ndarray
    h: float
    grad: np.ndarray
    g_up: np.ndarray
    gap: float


def finsler_point(branch: FinslerBranch, xi, fd_step: float = 1e-4) -> FinslerPoint:
    """h, dh/dxi and g^{mu nu} = 1/2 d^2h/dxi dxi at xi (one Richardson pass)."""
    xi = _check_xi(xi)
    n = branch.n
    s = fd_step * float(np.linalg.norm(xi))
    offs = _stencil(n)
    probes = [xi + k * s * o for k in (1, 2) for o in offs]
    vals = branch.h(probes)
    gap = branch.gap(probes)
    m = len(offs)
    v1 = {tuple(float(c) for c in o): vals[i] for i, o in enumerate(offs)}
    v2 = {tuple(float(c) for c in o): vals[m + i] for i, o in enumerate(offs)}
    g1, H1 = _differences(v1, n, s)
    g2, H2 = _differences(v2, n, 2 * s)
    grad = (4 * g1 - g2) / 3
    hess = (4 * H1 - H2) / 3
    slope = float(np.linalg.norm(grad))
    if not gap > GAP_FACTOR * 2 * np.sqrt(2) * s * slope:
        raise DegenerateBranch(
            f"branch {branch.branch_index} at point {branch.point}: gap {gap:.3g} too small for step {s:.3g}"
        )
    g_up = 0.25 * (hess + hess.T)
    w = np.linalg.eigvalsh(g_up)
    if w[0] <= 0:
        warnings.warn(
            BranchAnomalyWarning(
                f"branch {branch.branch_index} at point {branch.point}, xi={xi.tolist()}: "
                f"Finsler metric not positive definite, eigenvalues {w.tolist()}"
            )
        )
    return FinslerPoint(xi, float(vals[0]), grad, g_up, gap)


def finsler_metric(branch: FinslerBranch, xi, fd_step: float = 1e-4) -> np.ndarray:
    return finsler_point(branch, xi, fd_step).g_up


def analytic_metric(branch: FinslerBranch, xi) -> tuple:
    """(dh/dxi, g^{mu nu}) from second-order perturbation theory of the cluster mean."""
    xi = _check_xi(xi)
    n = branch.n
    H = np.einsum("m,n,mnij->ij", xi, xi, branch.a_point)
    w, V = np.linalg.eigh(H)
    dH = 2 * np.einsum("n,mnij->mij", xi, branch.a_point)
    dHt = V.conj().T @ dH @ V
    a_t = V.conj().T @ branch.a_point @ V
    inside = np.arange(branch.start, branch.stop)
    outside = np.setdiff1d(np.arange(len(w)), inside)
    grad = np.real(np.einsum("mii->m", dHt[:, inside][:, :, inside])) / len(inside)
    hess = 2 * np.real(np.einsum("mnii->mn", a_t[:, :, inside][:, :, :, inside]))
    if len(outside):
        denom = w[inside][:, None] - w[outside][None, :]
        cross = dHt[:, inside][:, :, outside]
        hess = hess + 2 * np.real(np.einsum("mik,nik,ik->mn", cross, cross.conj(), 1 / denom))
    return grad, 0.5 * hess / len(inside)


def finsler_covariant(branch: FinslerBranch, xi, fd_step: float = 1e-4) -> tuple:
    """(u^mu = g^{mu nu} xi_nu, g_{mu nu}) with g_{mu nu} the matrix inverse."""
    g_up = finsler_metric(branch, xi, fd_step)
    u = g_up @ np.asarray(xi, dtype=float)
    return u, np.linalg.inv(g_up)


def sample_points(grid, count: int = 16) -> list:
    idx = np.unique(np.linspace(0, grid.npoints - 1, min(count, grid.npoints)).round().astype(int))
    return [tuple(int(i) for i in np.unravel_index(k, grid.sizes)) for k in idx]


def identity_residuals(branch: FinslerBranch, xi, fd_step: float = 1e-4) -> dict:
    """Relative residuals of the branch identities at one direction."""
    xi = _check_xi(xi)
    p = finsler_point(branch, xi, fd_step)
    h = p.h
    lam = np.array([0.5, 2.0, 3.0])
    hs = branch.h(lam[:, None] * xi)
    homog = float(np.max(np.abs(hs - lam**2 * h)) / h)
    quad = float(abs(xi @ p.g_up @ xi - h) / h)
    grad = float(np.linalg.norm(p.grad - 2 * p.g_up @ xi) / np.linalg.norm(p.grad))
    scale = np.abs(p.g_up).max()
    degree0 = max(float(np.abs(finsler_point(branch, c * xi, fd_step).g_up - p.g_up).max() / scale) for c in (0.5, 3.0))
    u = p.g_up @ xi
    g_down = np.linalg.inv(p.g_up)
    roundtrip = float(np.linalg.norm(g_down @ u - xi) / np.linalg.norm(xi))
    inverse = float(np.abs(g_down @ p.g_up - np.eye(len(xi))).max())
    return {
        "homogeneity": homog,
        "h_identity": quad,
        "gradient_identity": grad,
        "degree0": degree0,
        "roundtrip": roundtrip,
        "inverse": inverse,
        "min_metric_eigenvalue": float(np.linalg.eigvalsh(p.g_up)[0]),
        "gap": p.gap,
    }


IDENTITY_KEYS = ("homogeneity", "h_identity", "gradient_identity", "degree0", "roundtrip", "inverse")


def finsler_identity_table(fields: NCFields, directions: int = 64, points=None, fd_step: float = 1e-4) -> dict:
    """Identity residuals over points x directions x branches; degenerate samples are skipped and listed."""
    pts = sample_points(fields.grid) if points is None else [tuple(p) for p in points]
    dirs = sphere_directions(fields.n, directions)
    rows, skipped = [], []
    for x in pts:
        for d, xi in enumerate(dirs):
            for br in branches_at(fields, x, xi):
                try:
                    res = identity_residuals(br, xi, fd_step)
                except DegenerateBranch as exc:
                    skipped.append({"point": list(x), "direction": d, "branch": br.branch_index, "reason": str(exc)})
                    continue
                rows.append({"point": list(x), "direction": d, "branch": br.branch_index,
                             "multiplicity": br.multiplicity, **res})
    worst = {k: max((r[k] for r in rows), default=0.0) for k in IDENTITY_KEYS}
    return {"rows": rows, "skipped": skipped, "max_residuals": worst}


def riemannian_deviation(fields: NCFields, directions: int = 16, fd_step: float | None = None) -> float:
    """Max |g^{mu nu}_branch(xi) - g^{mu nu}(x)| over sampled points and directions.

    ``fd_step=None`` uses the perturbative metric, which is exact for a
    quadratic branch; finite differences carry a roundoff floor near 1e-8.
    """
    if fields.base is None:
        raise InputError("fields carry no base metric")
    worst = 0.0
    for x in sample_points(fields.grid):
        ginv = fields.base.ginv[x]
        for xi in sphere_directions(fields.n, directions):
            for br in branches_at(fields, x, xi):
                g = analytic_metric(br, xi)[1] if fd_step is None else finsler_metric(br, xi, fd_step)
                worst = max(worst, float(np.abs(g - ginv).max()))
    return worst
