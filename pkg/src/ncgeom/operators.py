"""Lattice non-commutative Laplace and Dirac operators for p = 0.

Every operator is a ``StencilOperator``: a map from integer offsets to
per-point coefficient matrices, acting as

    (L f)(x) = sum_o C_o(x) f(x + o).

Covariant derivatives read neighbours through link transporters, so the
operators transform exactly covariantly under lattice gauge
transformations, and the centered stencils make D and its adjoint exact
mutual adjoints under the grid inner product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionCapExceeded, ThresholdAmbiguity
from .fields import NCFields, dagger
from .grid import TorusGrid, shift, stencil_weights

DEFAULT_CAP = 8192


def roll_nd(f: np.ndarray, offset) -> np.ndarray:
    """f(x + offset) on the periodic grid."""
    axes = tuple(i for i, k in enumerate(offset) if k)
    if not axes:
        return f
    return np.roll(f, tuple(-offset[i] for i in axes), axis=axes)


@dataclass(frozen=True, eq=False)
class StencilOperator:
    grid: TorusGrid
    coeffs: dict
    kind: str = "generic"

    @property
    def N(self) -> int:
        return next(iter(self.coeffs.values())).shape[-1]

    @property
    def stencil_radius(self) -> int:
        return max((max(abs(k) for k in o) for o in self.coeffs), default=0)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Act on sections of shape (*sizes, N) or matrix functions (*sizes, N, M)."""
        vec = f.ndim == self.grid.n + 1
        F = f[..., None] if vec else f
        out = None
        for o in sorted(self.coeffs):
            term = self.coeffs[o] @ roll_nd(F, o)
            out = term if out is None else out + term
        return out[..., 0] if vec else out

    __call__ = apply

    def __add__(self, other: "StencilOperator") -> "StencilOperator":
        coeffs = dict(self.coeffs)
        for o, c in other.coeffs.items():
            coeffs[o] = coeffs[o] + c if o in coeffs else c
        return StencilOperator(self.grid, coeffs)

    def __neg__(self) -> "StencilOperator":
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s) -> "StencilOperator":
        return StencilOperator(self.grid, {o: s * c for o, c in self.coeffs.items()}, self.kind)

    def __matmul__(self, other: "StencilOperator") -> "StencilOperator":
        return compose(self, other)

    def adjoint(self) -> "StencilOperator":
        """Adjoint under sum_x f(x)^dagger g(x): C'_{-o}(x+o) = C_o(x)^dagger."""
        coeffs = {}
        for o, c in self.coeffs.items():
            neg = tuple(-k for k in o)
            coeffs[neg] = roll_nd(dagger(c), neg)
        return StencilOperator(self.grid, coeffs)

    def dense(self, cap: int = DEFAULT_CAP) -> np.ndarray:
        return dense_assembly(self, cap)


def multiplication(grid: TorusGrid, X: np.ndarray) -> StencilOperator:
    return StencilOperator(grid, {(0,) * grid.n: X}, "multiplication")


def compose(A: StencilOperator, B: StencilOperator) -> StencilOperator:
    """(A B)_o(x) = sum_{o1 + o2 = o} A_{o1}(x) B_{o2}(x + o1)."""
    coeffs = {}
    for o1 in sorted(A.coeffs):
        a = A.coeffs[o1]
        for o2 in sorted(B.coeffs):
            o = tuple(p + q for p, q in zip(o1, o2))
            term = a @ roll_nd(B.coeffs[o2], o1)
            coeffs[o] = coeffs[o] + term if o in coeffs else term
    return StencilOperator(A.grid, coeffs)


def covariant_derivative(fields: NCFields, mu: int, order: int = 4, twisted: bool = True) -> StencilOperator:
    """nabla_mu = d_mu + B_mu, realized as sum_k c_k W(x, x + k e_mu) f(x + k e_mu) / h."""
    grid = fields.grid
    grid.check_stencil(order)
    links = (fields.links if twisted else fields.plain_links)[mu]
    weights = stencil_weights(order)
    kmax = max(weights)
    fwd = [None, links]
    for k in range(2, kmax + 1):
        fwd.append(fwd[k - 1] @ shift(links, mu, k - 1))
    h = grid.spacing[mu]
    coeffs = {}
    for k, w in weights.items():
        off = [0] * grid.n
        off[mu] = k
        if k > 0:
            W = fwd[k]
        else:
            # W(x, x - m) = W(x - m, x)^dagger
            W = dagger(shift(fwd[-k], mu, k))
        coeffs[tuple(off)] = (w / h) * W
    return StencilOperator(grid, coeffs, f"nabla_{mu}")


def _sum(ops) -> StencilOperator:
    out = ops[0]
    for op in ops[1:]:
        out = out + op
    return out


def nc_dirac(fields: NCFields, order: int = 4, twisted: bool = True) -> StencilOperator:
    """D = i Gamma^mu rho (d_mu + B_mu) rho^-1."""
    grid = fields.grid
    terms = []
    for mu in range(fields.n):
        left = multiplication(grid, 1j * fields.Gamma[..., mu, :, :] @ fields.rho)
        terms.append(left @ covariant_derivative(fields, mu, order, twisted) @ multiplication(grid, fields.rho_inv))
    op = _sum(terms)
    return StencilOperator(grid, op.coeffs, "nc_dirac")


def nc_dirac_adjoint(fields: NCFields, order: int = 4, twisted: bool = True) -> StencilOperator:
    """D-bar = i rho^-1 (d_nu + B_nu) rho Gamma^nu, built from its own formula."""
    grid = fields.grid
    terms = []
    for nu in range(fields.n):
        right = multiplication(grid, fields.rho @ fields.Gamma[..., nu, :, :])
        terms.append(multiplication(grid, 1j * fields.rho_inv) @ covariant_derivative(fields, nu, order, twisted) @ right)
    op = _sum(terms)
    return StencilOperator(grid, op.coeffs, "nc_dirac_adjoint")


def nc_laplacian(fields: NCFields, order: int = 4, twisted: bool = True) -> StencilOperator:
    """Delta = rho^-1 (d_mu + B_mu) rho a^{mu nu} rho (d_nu + B_nu) rho^-1."""
    grid = fields.grid
    nablas = [covariant_derivative(fields, mu, order, twisted) for mu in range(fields.n)]
    rinv = multiplication(grid, fields.rho_inv)
    terms = []
    for mu in range(fields.n):
        for nu in range(fields.n):
            mid = multiplication(grid, fields.rho @ fields.a[..., mu, nu, :, :] @ fields.rho)
            terms.append(rinv @ nablas[mu] @ mid @ nablas[nu] @ rinv)
    op = _sum(terms)
    return StencilOperator(grid, op.coeffs, "nc_laplacian")


def compose_DbarD(fields: NCFields, order: int = 4, twisted: bool = True) -> StencilOperator:
    op = nc_dirac_adjoint(fields, order, twisted) @ nc_dirac(fields, order, twisted)
    return StencilOperator(fields.grid, op.coeffs, "DbarD")


def compose_DDbar(fields: NCFields, order: int = 4, twisted: bool = True) -> StencilOperator:
    op = nc_dirac(fields, order, twisted) @ nc_dirac_adjoint(fields, order, twisted)
    return StencilOperator(fields.grid, op.coeffs, "DDbar")


def lichnerowicz_defect(fields: NCFields, order: int = 4, twisted: bool = True) -> StencilOperator:
    """D-bar D + Delta: the part of D-bar D beyond minus the Laplacian."""
    op = compose_DbarD(fields, order, twisted) + nc_laplacian(fields, order, twisted)
    return StencilOperator(fields.grid, op.coeffs, "lichnerowicz_defect")


def grid_inner(grid: TorusGrid, f: np.ndarray, g: np.ndarray) -> complex:
    """(f, g) = sum_x f(x)^dagger g(x) dx."""
    return complex(np.vdot(f, g) * grid.cell_volume)


def adjointness_residual(fields: NCFields, rng, trials: int = 5, order: int = 4) -> float:
    """max |(phi, D psi) - (D-bar phi, psi)| over random normalized sections."""
    D, Db = nc_dirac(fields, order), nc_dirac_adjoint(fields, order)
    shape = fields.grid.sizes + (fields.N,)
    worst = 0.0
    for _ in range(trials):
        phi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        phi /= np.sqrt(abs(grid_inner(fields.grid, phi, phi)))
        psi /= np.sqrt(abs(grid_inner(fields.grid, psi, psi)))
        r = grid_inner(fields.grid, phi, D(psi)) - grid_inner(fields.grid, Db(phi), psi)
        worst = max(worst, abs(r))
    return worst


def dense_assembly(op: StencilOperator, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Explicit matrix on the flattened (point, spinor) index."""
    grid = op.grid
    N = op.N
    dim = grid.npoints * N
    if dim > cap:
        raise DimensionCapExceeded(f"dense dimension {dim} exceeds cap {cap}")
    idx = np.arange(grid.npoints).reshape(grid.sizes)
    M = np.zeros((grid.npoints, N, grid.npoints, N), dtype=complex)
    rows = idx.ravel()
    for o, c in op.coeffs.items():
        cols = roll_nd(idx, o).ravel()
        M[rows, :, cols, :] += c.reshape(-1, N, N)
    return M.reshape(dim, dim)


def hermitian_spectrum(M: np.ndarray) -> tuple:
    """(sorted eigenvalues, symmetrization defect) of a nominally Hermitian matrix."""
    defect = float(np.abs(M - M.conj().T).max())
    w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return w, defect


def dirac_spectra(fields: NCFields, order: int = 4, cap: int = DEFAULT_CAP) -> dict:
    """Dense spectra of D-bar D and D D-bar plus their symmetrization defects."""
    D = dense_assembly(nc_dirac(fields, order), cap)
    Db = dense_assembly(nc_dirac_adjoint(fields, order), cap)
    w1, d1 = hermitian_spectrum(Db @ D)
    w2, d2 = hermitian_spectrum(D @ Db)
    return {
        "DbarD": w1,
        "DDbar": w2,
        "defects": (d1, d2),
        "adjoint_mismatch": float(np.abs(Db - D.conj().T).max()),
        "self_adjointness_defect": float(np.abs(D - Db).max()),
    }


def kernel_dimension(eigs: np.ndarray, scale: float, rel: float = 1e-8) -> int:
    thresh = rel * scale
    small = np.abs(eigs) < thresh
    ambiguous = (np.abs(eigs) >= thresh) & (np.abs(eigs) < 10 * thresh)
    if np.any(ambiguous):
        raise ThresholdAmbiguity(f"eigenvalue within a decade of kernel threshold {thresh:.3g}")
    return int(np.sum(small))


def nc_index(fields: NCFields, order: int = 4, cap: int = DEFAULT_CAP) -> dict:
    """Ind(D) = dim Ker(D-bar) - dim Ker(D) via D D-bar and D-bar D spectra.

    The kernel threshold is relative to the smallest nonzero stencil
    eigenvalue scale (2 pi / L)^2 of the flat operator.
    """
    spec = dirac_spectra(fields, order, cap)
    scale = min((2 * np.pi / L) ** 2 for L in fields.grid.lengths)
    ker_D = kernel_dimension(spec["DbarD"], scale)
    ker_Db = kernel_dimension(spec["DDbar"], scale)
    return {"index": ker_Db - ker_D, "ker_D": ker_D, "ker_Dbar": ker_Db}


def paired_nonzero_spectra(w1: np.ndarray, w2: np.ndarray, scale: float, rel: float = 1e-8) -> float:
    """max elementwise mismatch of two spectra after removing kernels."""
    a = np.sort(w1[np.abs(w1) >= rel * scale])
    b = np.sort(w2[np.abs(w2) >= rel * scale])
    if a.shape != b.shape:
        return np.inf
    return float(np.abs(a - b).max(initial=0.0))


def stencil_symbol(order: int, theta: np.ndarray) -> np.ndarray:
    """Imaginary part of the first-derivative stencil symbol at phase theta (unit spacing)."""
    out = np.zeros_like(theta, dtype=float)
    for k, w in stencil_weights(order).items():
        out += w * np.sin(k * theta)
    return out
