"""Commutative reference geometry on flat-coordinate tori.

Metric-type fields have shape ``(*sizes, n, n)``.  Derivative indices are
inserted right after the spatial axes, so ``dg[..., l, m, n]`` is
d_l g_{mn}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .clifford import build_gamma_rep
from .errors import InputError, MetricError
from .grid import TorusGrid, gradient


def _grad(grid: TorusGrid, f: np.ndarray, order: int) -> np.ndarray:
    return np.moveaxis(gradient(grid, f, order), 0, grid.n)


def vielbein_from_metric(g) -> np.ndarray:
    """Lower-triangular e^a_mu with e^T e = g (batched over leading axes)."""
    g = np.asarray(g, dtype=float)
    if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12):
        raise MetricError("metric is not symmetric")
    rev = g[..., ::-1, ::-1]
    try:
        L = np.linalg.cholesky(rev)
    except np.linalg.LinAlgError as exc:
        raise MetricError("metric is not positive definite") from exc
    return np.swapaxes(L, -1, -2)[..., ::-1, ::-1]


@dataclass(frozen=True, eq=False)
class MetricField:
    grid: TorusGrid
    g: np.ndarray
    frame_rotation: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        shape = self.grid.sizes + (self.grid.n, self.grid.n)
        if g.shape != shape:
            g = np.broadcast_to(g, shape).copy()
        object.__setattr__(self, "g", g)

    @cached_property
    def vielbein(self) -> np.ndarray:
        e = vielbein_from_metric(self.g)
        if self.frame_rotation is not None:
            e = np.einsum("...ab,...bm->...am", self.frame_rotation, e)
        return e

    @cached_property
    def inverse_vielbein(self) -> np.ndarray:
        """e^mu_a, indexed [..., mu, a]."""
        return np.linalg.inv(self.vielbein)

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def sqrt_g(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.g))

    def with_frame_rotation(self, rot) -> "MetricField":
        rot = np.broadcast_to(np.asarray(rot, dtype=float), self.g.shape)
        return MetricField(self.grid, self.g, rot)


def flat_metric(grid: TorusGrid, g0=None) -> MetricField:
    g0 = np.eye(grid.n) if g0 is None else np.asarray(g0, dtype=float)
    return MetricField(grid, g0)


def conformal_metric(grid: TorusGrid, sigma: np.ndarray) -> MetricField:
    g = np.exp(2 * sigma)[..., None, None] * np.eye(grid.n)
    return MetricField(grid, g)


def christoffel(metric: MetricField, order: int = 4) -> np.ndarray:
    """Gamma^l_{mn}, indexed [..., l, m, n]."""
    dg = _grad(metric.grid, metric.g, order)  # [..., k, m, n] = d_k g_mn
    lower = 0.5 * (np.einsum("...mkn->...kmn", dg) + np.einsum("...nkm->...kmn", dg) - dg)
    return np.einsum("...lk,...kmn->...lmn", metric.ginv, lower)


def levi_civita_frame_connection(metric: MetricField, order: int = 4) -> np.ndarray:
    """Connection making the frame parallel: W[..., mu, c, a] = e^c_nu (d_mu E^nu_a + Gamma^nu_{mu l} E^l_a)."""
    E = metric.inverse_vielbein
    dE = _grad(metric.grid, E, order)  # [..., mu, nu, a]
    chris = christoffel(metric, order)
    inner = dE + np.einsum("...nml,...la->...mna", chris, E)
    return np.einsum("...cn,...mna->...mca", metric.vielbein, inner)


def spin_connection_from_vielbein(grid: TorusGrid, e: np.ndarray, order: int = 4) -> np.ndarray:
    """Fock-Ivanenko coefficients omega^{ab}_mu, indexed [..., mu, a, b].

    omega^{ab}_mu = E^nu_a T^b_{nu mu} - E^nu_b T^a_{nu mu} + e^c_mu E^nu_a E^l_b T^c_{nu l}
    with T^c_{nu mu} = d_[nu e^c_mu] (unit-weight antisymmetrization).
    """
    E = np.linalg.inv(e)  # [..., nu, a]
    de = _grad(grid, e, order)  # [..., nu, c, mu] = d_nu e^c_mu
    T = 0.5 * (np.einsum("...ncm->...cnm", de) - np.einsum("...mcn->...cnm", de))
    t1 = np.einsum("...na,...bnm->...mab", E, T)
    t3 = np.einsum("...cm,...na,...lb,...cnl->...mab", e, E, E, T)
    return t1 - np.swapaxes(t1, -1, -2) + t3


def spin_connection(metric: MetricField, order: int = 4) -> np.ndarray:
    metric.grid.check_stencil(order)
    return spin_connection_from_vielbein(metric.grid, metric.vielbein, order)


def riemann_tensor(metric: MetricField, order: int = 4) -> np.ndarray:
    """R^r_{s m n}, indexed [..., r, s, m, n]."""
    G = christoffel(metric, order)
    dG = _grad(metric.grid, G, order)  # [..., m, r, n, s] = d_m Gamma^r_{ns}
    t = np.einsum("...mrns->...rsmn", dG)
    quad = np.einsum("...rml,...lns->...rsmn", G, G)
    return t - np.swapaxes(t, -1, -2) + quad - np.swapaxes(quad, -1, -2)


def scalar_curvature(metric: MetricField, order: int = 4) -> np.ndarray:
    metric.grid.check_stencil(order)
    Riem = riemann_tensor(metric, order)
    ric = np.einsum("...rsrn->...sn", Riem)
    return np.einsum("...sn,...sn->...", metric.ginv, ric)


def commutative_invariants(metric: MetricField, N: int, order: int = 4) -> tuple:
    """(A0, A1) = (N Vol, -N/12 int R dvol) as grid Riemann sums."""
    grid = metric.grid
    A0 = N * grid.integrate(metric.sqrt_g)
    A1 = -N / 12 * grid.integrate(scalar_curvature(metric, order) * metric.sqrt_g)
    return float(A0), float(A1)


@dataclass(frozen=True, eq=False)
class SpectrumData:
    eigenvalues: np.ndarray
    chirality_labels: np.ndarray | None
    source: str
    cutoff_momentum: float = np.inf

    def __post_init__(self):
        if np.any(self.eigenvalues < -1e-10):
            raise InputError("squared spectrum must be non-negative")


def flat_torus_spectrum(lengths, N: int | None = None, K: int = 40, twist=None) -> SpectrumData:
    """D^2 spectrum on a flat torus from its Fourier modes.

    Each lattice momentum p = 2 pi (k + nu) / L contributes the N eigenvalues
    of (gamma^mu p_mu)^2 = |p|^2; chirality labels are the expectation of the
    chirality operator in an eigenbasis of gamma^mu p_mu.
    """
    lengths = np.asarray(lengths, dtype=float)
    n = len(lengths)
    rep = build_gamma_rep(n)
    if N is None:
        N = rep.N
    if K < 1:
        raise InputError("cutoff K must be >= 1")
    nu = np.zeros(n) if twist is None else np.asarray(twist, dtype=float)
    ks = np.arange(-K, K + 1)
    grids = np.meshgrid(*([ks] * n), indexing="ij")
    k = np.stack([g.ravel() for g in grids], axis=-1)
    p = 2 * np.pi * (k + nu) / lengths
    lam2 = np.repeat((p**2).sum(axis=1), N)
    labels = None
    if n % 2 == 0 and N == rep.N:
        Dk = np.einsum("km,mij->kij", p, np.array(rep.gammas))
        _, V = np.linalg.eigh(Dk)
        zero = np.all(np.abs(p) < 1e-14, axis=1)
        V[zero] = np.eye(N)
        chi = np.einsum("kia,ij,kja->ka", V.conj(), rep.chirality, V).real
        labels = chi.ravel()
    order = np.argsort(lam2, kind="stable")
    cutoff = float(np.min(2 * np.pi * (K + 1 - np.abs(nu)) / lengths))
    return SpectrumData(
        lam2[order],
        None if labels is None else labels[order],
        "analytic-fourier",
        cutoff,
    )


def heat_trace(spec: SpectrumData, t: float) -> float:
    if t <= 0:
        raise InputError("t must be positive")
    return float(np.sum(np.exp(-t * spec.eigenvalues)))


def heat_trace_tail_bound(spec: SpectrumData, t: float) -> float:
    """Size of the first omitted Gaussian factor exp(-t p_cut^2)."""
    return float(np.exp(-t * spec.cutoff_momentum**2))


def index_supertrace(spec: SpectrumData, t: float) -> float:
    if spec.chirality_labels is None:
        raise InputError("spectrum carries no chirality labels")
    if t <= 0:
        raise InputError("t must be positive")
    return float(np.sum(spec.chirality_labels * np.exp(-t * spec.eigenvalues)))
