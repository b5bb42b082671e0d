"""Non-commutative metric data: Dirac matrices, density rho, connection B.

All per-point arrays put the spatial axes first: ``Gamma`` is
``(*sizes, n, N, N)``, ``rho`` is ``(*sizes, N, N)``, ``B`` is
``(*sizes, n, N, N)``.  Parallel transporters along unit grid links are
kept alongside B; the lattice operators are built from them so that gauge
covariance holds exactly on the grid.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.optimize

from .clifford import GammaRep
from .errors import EllipticityError, InputError, NonPositiveEta
from .grid import TorusGrid, derivative, shift
from .riemann import MetricField, spin_connection

DEFAULT_EPS_PD = 1e-6


def dagger(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def herm_fn(X: np.ndarray, fn) -> np.ndarray:
    """fn applied to a batch of Hermitian matrices through eigh."""
    w, V = np.linalg.eigh(X)
    return (V * fn(w)[..., None, :]) @ dagger(V)


def expm_antiherm(X: np.ndarray) -> np.ndarray:
    """exp(X) for anti-Hermitian X (unitary result)."""
    w, V = np.linalg.eigh(1j * X)
    return (V * np.exp(-1j * w)[..., None, :]) @ dagger(V)


def hermiticity_defect(X: np.ndarray) -> float:
    return float(np.abs(X - dagger(X)).max(initial=0.0))


def sphere_directions(n: int, count: int | None = None) -> np.ndarray:
    """Deterministic quasi-uniform unit covectors (2n*8 by default)."""
    count = 2 * n * 8 if count is None else count
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = np.random.default_rng(12345)
    v = rng.normal(size=(count, n))
    v = np.concatenate([np.eye(n), -np.eye(n), v])[:count]
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def fourier_shift(f: np.ndarray, axis: int, frac: float) -> np.ndarray:
    """Trigonometric interpolant of f at x + frac*h along ``axis``.

    The Nyquist mode is handled with a cosine so the interpolation is a
    real linear map (it preserves Hermiticity of matrix fields).
    """
    size = f.shape[axis]
    F = np.fft.fft(f, axis=axis)
    k = np.fft.fftfreq(size) * size
    mult = np.exp(2j * np.pi * k * frac / size)
    if size % 2 == 0:
        mult[size // 2] = np.cos(np.pi * frac)
    shape = [1] * f.ndim
    shape[axis] = size
    return np.fft.ifft(F * mult.reshape(shape), axis=axis)


def transport_links(grid: TorusGrid, B: np.ndarray, substeps: int = 4) -> np.ndarray:
    """Unit-link transporters W_mu(x, x + e_mu), shape (n, *sizes, N, N).

    W solves dW/ds = W B_mu along the link; B is interpolated
    trigonometrically and each substep uses the fourth-order Magnus
    exponential, so W is exactly unitary for anti-Hermitian B.
    """
    n = grid.n
    N = B.shape[-1]
    links = np.empty((n,) + grid.sizes + (N, N), dtype=complex)
    g1, g2 = 0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6
    for mu in range(n):
        Bmu = B[..., mu, :, :]
        h = grid.spacing[mu] / substeps
        W = np.broadcast_to(np.eye(N, dtype=complex), grid.sizes + (N, N)).copy()
        for j in range(substeps):
            B1 = fourier_shift(Bmu, mu, (j + g1) / substeps)
            B2 = fourier_shift(Bmu, mu, (j + g2) / substeps)
            omega = 0.5 * h * (B1 + B2) + np.sqrt(3) / 12 * h**2 * (B1 @ B2 - B2 @ B1)
            omega = 0.5 * (omega - dagger(omega))
            W = W @ expm_antiherm(omega)
        links[mu] = W
    return links


def apply_twist(grid: TorusGrid, links: np.ndarray, twist) -> np.ndarray:
    """Fold boundary phases exp(2 pi i nu_mu) into the links that wrap around."""
    if twist is None or not np.any(twist):
        return links
    links = links.copy()
    for mu, nu in enumerate(twist):
        if nu:
            idx = [slice(None)] * grid.n
            idx[mu] = grid.sizes[mu] - 1
            links[(mu, *idx)] *= np.exp(2j * np.pi * nu)
    return links


@dataclass(frozen=True, eq=False)
class NCFields:
    grid: TorusGrid
    rep: GammaRep
    Gamma: np.ndarray
    rho: np.ndarray
    B: np.ndarray
    kappa: float = 0.0
    base: MetricField | None = None
    alpha: np.ndarray | None = None
    phi: np.ndarray | None = None
    twist: tuple | None = None
    eps_pd: float = DEFAULT_EPS_PD
    link_override: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def N(self) -> int:
        return self.Gamma.shape[-1]

    @cached_property
    def a(self) -> np.ndarray:
        """a^{mu nu} = (Gamma^mu Gamma^nu + Gamma^nu Gamma^mu)/2, shape (*sizes, n, n, N, N)."""
        G = self.Gamma
        prod = np.einsum("...mij,...njk->...mnik", G, G)
        return 0.5 * (prod + np.swapaxes(prod, -3, -4))

    @cached_property
    def rho_inv(self) -> np.ndarray:
        return np.linalg.inv(self.rho)

    @cached_property
    def plain_links(self) -> np.ndarray:
        """Untwisted unit-link transporters of B."""
        if self.link_override is not None:
            return self.link_override
        return transport_links(self.grid, self.B)

    @cached_property
    def links(self) -> np.ndarray:
        return apply_twist(self.grid, self.plain_links, self.twist)

    def gamma_xi(self, xi) -> np.ndarray:
        return np.einsum("m,...mij->...ij", np.asarray(xi, dtype=float), self.Gamma)

    def replace(self, **changes) -> "NCFields":
        return dataclasses.replace(self, **changes)

    def validate(self, tol: float = 1e-10):
        if hermiticity_defect(self.Gamma) > tol:
            raise InputError("Gamma^mu must be Hermitian")
        if hermiticity_defect(self.rho) > tol:
            raise InputError("rho must be Hermitian")
        if float(np.abs(self.B + dagger(self.B)).max()) > tol:
            raise InputError("B_mu must be anti-Hermitian")
        if np.min(np.abs(np.linalg.eigvalsh(self.rho))) < 1e-12:
            raise InputError("rho must be invertible")
        check_ellipticity(self)
        return self


def symbol_H(fields: NCFields, xi, point=None) -> np.ndarray:
    """H(x, xi) = [Gamma^mu(x) xi_mu]^2 at every point (or at ``point``)."""
    G = fields.gamma_xi(xi)
    H = G @ G
    return H if point is None else H[tuple(point)]


def symbol_H_from_a(fields: NCFields, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.einsum("m,n,...mnij->...ij", xi, xi, fields.a)


def _refined_lambda_min(Gam: np.ndarray, xi0: np.ndarray) -> float:
    """Local minimum over unit covectors of lambda_min([Gamma xi]^2), started at xi0."""
    def f(v):
        u = v / max(np.linalg.norm(v), 1e-300)
        G = np.einsum("m,mij->ij", u, Gam)
        return float(np.linalg.eigvalsh(G @ G)[0])

    res = scipy.optimize.minimize(f, xi0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-16})
    return min(float(res.fun), f(xi0))


def ellipticity_margin(fields: NCFields, directions=None, refine: int = 4) -> tuple:
    """(min over points of min_xi lambda_min(H) / max_xi lambda_max(H), worst point index).

    The sampled minimum is polished by a local search at the ``refine`` worst points.
    """
    dirs = sphere_directions(fields.n) if directions is None else directions
    lo = hi = arg = None
    for k, xi in enumerate(dirs):
        w = np.linalg.eigvalsh(symbol_H(fields, xi))
        if lo is None:
            lo, hi, arg = w[..., 0].copy(), w[..., -1].copy(), np.zeros(w.shape[:-1], int)
            continue
        better = w[..., 0] < lo
        lo = np.where(better, w[..., 0], lo)
        arg = np.where(better, k, arg)
        hi = np.maximum(hi, w[..., -1])
    if refine and fields.n > 1:
        for i in np.argsort((lo / np.maximum(hi, 1e-300)).ravel())[:refine]:
            idx = np.unravel_index(i, lo.shape)
            lo[idx] = min(lo[idx], _refined_lambda_min(fields.Gamma[idx], dirs[arg[idx]]))
    ratio = lo / np.maximum(hi, 1e-300)
    i = int(np.argmin(ratio))
    return float(ratio.flat[i]), np.unravel_index(i, ratio.shape)


def check_ellipticity(fields: NCFields, eps_pd: float | None = None):
    eps = fields.eps_pd if eps_pd is None else eps_pd
    margin, where = ellipticity_margin(fields)
    if margin <= eps:
        raise EllipticityError(
            f"symbol not positive definite: relative margin {margin:.3g} at grid point {tuple(int(i) for i in where)}"
        )
    return margin


def commutative_gammas(base: MetricField, rep: GammaRep) -> np.ndarray:
    """gamma^mu(x) = e^mu_a(x) gamma^a."""
    return np.einsum("...ma,aij->...mij", base.inverse_vielbein, np.array(rep.gammas))


def spin_connection_B(base: MetricField, rep: GammaRep, order: int = 4) -> np.ndarray:
    """Spinor connection B_mu = -1/4 omega^{ab}_mu gamma_a gamma_b.

    The sign is the one for which D equals its adjoint in the
    commutative limit (the frame is parallel under -omega).
    """
    omega = spin_connection(base, order)
    G = np.array(rep.gammas)
    gg = np.einsum("aij,bjk->abik", G, G)
    return -0.25 * np.einsum("...mab,abij->...mij", omega, gg)


def h_tensor(base: MetricField, rep: GammaRep, alpha: np.ndarray, kappa: float) -> np.ndarray:
    """h^{mu nu} with a = g^{mu nu} I + kappa h^{mu nu}.

    Half of the symmetrized sum sym(alpha gamma) + kappa sym(alpha alpha):
    the factor 1/2 comes from a = (Gamma Gamma + Gamma Gamma)/2.
    """
    g = commutative_gammas(base, rep)
    ag = np.einsum("...mij,...njk->...mnik", alpha, g)
    ga = np.einsum("...nij,...mjk->...mnik", g, alpha)
    aa = np.einsum("...mij,...njk->...mnik", alpha, alpha)
    first = ag + ga
    first = first + np.swapaxes(first, -3, -4)
    second = aa + np.swapaxes(aa, -3, -4)
    return 0.5 * (first + kappa * second)


def build_deformation(
    base: MetricField,
    rep: GammaRep,
    kappa: float = 0.0,
    alpha=None,
    phi=None,
    B=None,
    twist=None,
    eps_pd: float = DEFAULT_EPS_PD,
    rho_mode: str = "deformation",
    check: bool = True,
) -> NCFields:
    """Gamma = gamma + kappa alpha, rho = g^{1/4} exp(kappa phi), B as given."""
    grid = base.grid
    n, N = grid.n, rep.N
    if rep.n != n:
        raise InputError("representation dimension differs from manifold dimension")
    shape = grid.sizes
    alpha = np.zeros(shape + (n, N, N), complex) if alpha is None else np.broadcast_to(alpha, shape + (n, N, N))
    phi = np.zeros(shape + (N, N), complex) if phi is None else np.broadcast_to(phi, shape + (N, N))
    B = np.zeros(shape + (n, N, N), complex) if B is None else np.broadcast_to(B, shape + (n, N, N))
    if hermiticity_defect(alpha) > 1e-12 or hermiticity_defect(phi) > 1e-12:
        raise InputError("alpha and phi generators must be Hermitian")
    Gamma = commutative_gammas(base, rep) + kappa * alpha
    g14 = base.sqrt_g ** 0.5
    rho = g14[..., None, None] * herm_fn(kappa * np.asarray(phi), np.exp)
    fields = NCFields(
        grid=grid,
        rep=rep,
        Gamma=np.ascontiguousarray(Gamma),
        rho=rho,
        B=np.array(B, dtype=complex),
        kappa=float(kappa),
        base=base,
        alpha=np.array(alpha),
        phi=np.array(phi),
        twist=None if twist is None else tuple(float(t) for t in twist),
        eps_pd=eps_pd,
    )
    if rho_mode == "eta":
        fields = fields.replace(rho=eta_and_rho(fields)[1])
    elif rho_mode != "deformation":
        raise InputError(f"unknown rho_mode {rho_mode!r}")
    if check:
        fields.validate()
    return fields


def eta_and_rho(fields: NCFields, eps_pd: float | None = None) -> tuple:
    """eta = (1/n!) eps eps a...a (ordered products) and rho = eta^{-1/4}."""
    from .forms import a_kernel, combos

    n = fields.n
    eta = a_kernel(fields.a, n)[..., 0, 0, :, :]
    eta = 0.5 * (eta + dagger(eta))
    w = np.linalg.eigvalsh(eta)
    eps = fields.eps_pd if eps_pd is None else eps_pd
    if np.min(w) <= eps * np.max(np.abs(w)):
        i = np.unravel_index(int(np.argmin(w[..., 0])), w.shape[:-1])
        raise NonPositiveEta(f"eta has eigenvalue {float(np.min(w)):.3g} at grid point {tuple(int(j) for j in i)}")
    assert len(combos(n, n)) == 1
    return eta, herm_fn(eta, lambda x: x ** -0.25)


def gauge_curvature(fields: NCFields, order: int = 4) -> np.ndarray:
    """R_{mu nu} = d_mu B_nu - d_nu B_mu + B_mu B_nu - B_nu B_mu, shape (*sizes, n, n, N, N)."""
    grid, B = fields.grid, fields.B
    dB = np.stack([derivative(grid, B, mu, order) for mu in range(grid.n)], axis=grid.n)
    comm = np.einsum("...mij,...njk->...mnik", B, B)
    return dB - np.swapaxes(dB, grid.n, grid.n + 1) + comm - np.swapaxes(comm, -3, -4)


def gauge_transform(fields: NCFields, U, order: int = 4, tol: float = 1e-12) -> NCFields:
    """Gauge-transformed fields: Gamma, rho conjugated, B' = U B U^-1 - (dU) U^-1.

    Link transporters map exactly as U(x) W U(x+e)^dagger.
    """
    U = np.asarray(U, dtype=complex)
    U = np.broadcast_to(U, fields.grid.sizes + (fields.N, fields.N))
    eye = np.eye(fields.N)
    if float(np.abs(U @ dagger(U) - eye).max()) > tol:
        raise InputError("gauge transformation is not unitary")
    Ud = dagger(U)
    n = fields.n
    Gamma = U[..., None, :, :] @ fields.Gamma @ Ud[..., None, :, :]
    rho = U @ fields.rho @ Ud
    dU = np.stack([derivative(fields.grid, U, mu, order) for mu in range(n)], axis=n)
    B = U[..., None, :, :] @ fields.B @ Ud[..., None, :, :] - dU @ Ud[..., None, :, :]
    B = 0.5 * (B - dagger(B))
    links = np.stack([U @ fields.plain_links[mu] @ shift(Ud, mu, 1) for mu in range(n)])
    return fields.replace(
        Gamma=0.5 * (Gamma + dagger(Gamma)),
        rho=0.5 * (rho + dagger(rho)),
        B=B,
        link_override=links,
    )


def random_smooth_unitary(grid: TorusGrid, N: int, rng, scale: float = 0.5, modes: int = 1) -> np.ndarray:
    """U = exp(i X) with X a random Hermitian trigonometric polynomial."""
    x = grid.coords()
    X = np.zeros(grid.sizes + (N, N), complex)
    for _ in range(modes + 1):
        k = rng.integers(-modes, modes + 1, size=grid.n)
        ph = rng.uniform(0, 2 * np.pi)
        A = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        A = A + A.conj().T
        scaled = x / np.reshape(grid.lengths, (grid.n,) + (1,) * grid.n)
        arg = np.tensordot(k, scaled, axes=1)
        X += np.cos(2 * np.pi * arg + ph)[..., None, None] * A
    return herm_fn(scale * X / 4, lambda w: np.exp(1j * w))
