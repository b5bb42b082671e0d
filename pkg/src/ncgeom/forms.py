"""Matrix-valued p-forms and the exterior calculus of the matrix geometry.

Forms store only strictly increasing multi-indices: ``values`` has shape
``(*sizes, C(n, p), N, M)`` and every map acts on the N row index from the
left (M columns are independent sections).  Covariant forms carry lower
indices, contravariant forms upper ones; the density weight travels with
the form and is checked by every operation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .clifford import perm_sign
from .errors import InputError, SingularAMap
from .fields import NCFields, dagger
from .grid import TorusGrid, derivative

COND_LIMIT = 1e12


@lru_cache(maxsize=None)
def combos(n: int, p: int) -> tuple:
    return tuple(itertools.combinations(range(n), p))


@lru_cache(maxsize=None)
def combo_index(n: int, p: int) -> dict:
    return {c: i for i, c in enumerate(combos(n, p))}


@dataclass(frozen=True, eq=False)
class MatrixPForm:
    grid: TorusGrid
    p: int
    variance: str
    weight: float
    values: np.ndarray

    def __post_init__(self):
        if self.variance not in ("co", "contra"):
            raise InputError("variance must be 'co' or 'contra'")
        if not 0 <= self.p <= self.grid.n:
            raise InputError(f"form degree {self.p} outside 0..{self.grid.n}")
        want = self.grid.sizes + (math.comb(self.grid.n, self.p),)
        if self.values.shape[: self.grid.n + 1] != want or self.values.ndim != self.grid.n + 3:
            raise InputError(f"form values must have shape {want} + (N, M), got {self.values.shape}")

    @property
    def n(self) -> int:
        return self.grid.n

    def like(self, values, p=None, variance=None, weight=None) -> "MatrixPForm":
        return MatrixPForm(
            self.grid,
            self.p if p is None else p,
            self.variance if variance is None else variance,
            self.weight if weight is None else weight,
            values,
        )

    def __add__(self, other: "MatrixPForm") -> "MatrixPForm":
        _same_type(self, other)
        return self.like(self.values + other.values)

    def __sub__(self, other: "MatrixPForm") -> "MatrixPForm":
        _same_type(self, other)
        return self.like(self.values - other.values)

    def scale(self, s) -> "MatrixPForm":
        return self.like(s * self.values)

    def component(self, indices) -> np.ndarray:
        """Value at an arbitrary (possibly unsorted) index tuple, antisymmetry applied."""
        sign = perm_sign(indices)
        if sign == 0:
            return np.zeros_like(self.values[..., 0, :, :])
        return sign * self.values[..., combo_index(self.n, self.p)[tuple(sorted(indices))], :, :]


def _same_type(a: MatrixPForm, b: MatrixPForm):
    if (a.p, a.variance, a.weight) != (b.p, b.variance, b.weight):
        raise InputError("form degree, variance or weight mismatch")


def _require(form: MatrixPForm, variance: str, weight: float | None = None):
    if form.variance != variance:
        raise InputError(f"expected a {variance}variant form, got {form.variance}variant")
    if weight is not None and not np.isclose(form.weight, weight):
        raise InputError(f"expected density weight {weight}, got {form.weight}")


def random_form(grid: TorusGrid, p: int, N: int, rng, variance="co", weight=0.0, M=None) -> MatrixPForm:
    M = N if M is None else M
    shape = grid.sizes + (math.comb(grid.n, p), N, M)
    vals = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return MatrixPForm(grid, p, variance, weight, vals)


# ---------------------------------------------------------------- algebraic maps


def a_kernel(a: np.ndarray, p: int) -> np.ndarray:
    """Increasing-index kernel (1/p!) sum_{sigma,pi} sgn sgn a^{I_s1 J_p1} ... a^{I_sp J_pp}.

    ``a`` has shape (*sizes, n, n, N, N); the result (*sizes, C, C, N, N).
    Contracting it with increasing-index components reproduces the
    full-index contraction with the doubly antisymmetrized product.
    """
    n, N = a.shape[-3], a.shape[-1]
    lead = a.shape[:-4]
    cs = combos(n, p)
    out = np.zeros(lead + (len(cs), len(cs), N, N), dtype=complex)
    if p == 0:
        out[..., 0, 0, :, :] = np.eye(N)
        return out
    perms = list(itertools.permutations(range(p)))
    signs = [perm_sign(s) for s in perms]
    for i, I in enumerate(cs):
        for j, J in enumerate(cs):
            acc = 0
            for s, ss in zip(perms, signs):
                for q, sq in zip(perms, signs):
                    prod = a[..., I[s[0]], J[q[0]], :, :]
                    for k in range(1, p):
                        prod = prod @ a[..., I[s[k]], J[q[k]], :, :]
                    acc = acc + ss * sq * prod
            out[..., i, j, :, :] = acc / math.factorial(p)
    return out


def _apply_kernel(kernel: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.einsum("...ijab,...jbm->...iam", kernel, values)


def inverse_b(a_point: np.ndarray) -> np.ndarray:
    """b_{mu nu} with a^{mu nu} b_{nu alpha} = delta and b a = delta, by one dense solve per point."""
    n, N = a_point.shape[-3], a_point.shape[-1]
    lead = a_point.shape[:-4]
    blk = np.swapaxes(a_point, -3, -2).reshape(lead + (n * N, n * N))
    cond = np.linalg.cond(blk)
    if np.any(cond > COND_LIMIT):
        raise SingularAMap(f"map a is singular (condition {float(np.max(cond)):.3g})")
    inv = np.linalg.inv(blk)
    return np.swapaxes(inv.reshape(lead + (n, N, n, N)), -3, -2)


def _block_solve(kernel: np.ndarray, values: np.ndarray, grid_shape) -> np.ndarray:
    C, N = kernel.shape[-3], kernel.shape[-1]
    lead = kernel.shape[:-4]
    blk = np.swapaxes(kernel, -3, -2).reshape(lead + (C * N, C * N))
    cond = np.linalg.cond(blk)
    if np.any(cond > COND_LIMIT):
        where = np.unravel_index(int(np.argmax(cond)), cond.shape)
        raise SingularAMap(f"A-map singular (condition {float(np.max(cond)):.3g}) at grid point {tuple(int(i) for i in where)}")
    M = values.shape[-1]
    rhs = values.reshape(lead + (C * N, M))
    return np.linalg.solve(blk, rhs).reshape(values.shape)


def map_A(fields: NCFields, form: MatrixPForm) -> MatrixPForm:
    _require(form, "co")
    K = a_kernel(fields.a, form.p)
    return form.like(_apply_kernel(K, form.values), variance="contra")


def map_B(fields: NCFields, form: MatrixPForm) -> MatrixPForm:
    _require(form, "contra")
    b = inverse_b(fields.a)
    K = a_kernel(b, form.p)
    return form.like(_apply_kernel(K, form.values), variance="co")


def map_A_inverse(fields: NCFields, form: MatrixPForm) -> MatrixPForm:
    _require(form, "contra")
    K = a_kernel(fields.a, form.p)
    return form.like(_block_solve(K, form.values, fields.grid.sizes), variance="co")


def a_inverse_vs_b(fields: NCFields, p: int) -> float:
    """max over points of |A^{-1} - B| as increasing-index block matrices."""
    K = a_kernel(fields.a, p)
    C, N = K.shape[-3], K.shape[-1]
    lead = K.shape[:-4]
    Ainv = np.linalg.inv(np.swapaxes(K, -3, -2).reshape(lead + (C * N, C * N)))
    Bk = a_kernel(inverse_b(fields.a), p)
    Bblk = np.swapaxes(Bk, -3, -2).reshape(lead + (C * N, C * N))
    return float(np.abs(Ainv - Bblk).max())


def multiply(X: np.ndarray, form: MatrixPForm, weight_shift: float = 0.0) -> MatrixPForm:
    """Left multiplication of every component by the per-point matrix X."""
    return form.like(X[..., None, :, :] @ form.values, weight=form.weight + weight_shift)


@lru_cache(maxsize=None)
def epsilon_table(n: int, p: int) -> np.ndarray:
    """eps_{K J} for increasing K (degree n-p) and J (degree p)."""
    out = np.zeros((math.comb(n, n - p), math.comb(n, p)))
    for k, K in enumerate(combos(n, n - p)):
        for j, J in enumerate(combos(n, p)):
            out[k, j] = perm_sign(K + J)
    return out


def epsilon(form: MatrixPForm) -> MatrixPForm:
    """eps: Lambda^p[w] -> Lambda_{n-p}[w-1]."""
    _require(form, "contra")
    E = epsilon_table(form.n, form.p)
    vals = np.einsum("kj,...jam->...kam", E, form.values)
    return form.like(vals, p=form.n - form.p, variance="co", weight=form.weight - 1)


def epsilon_tilde(form: MatrixPForm) -> MatrixPForm:
    """eps~: Lambda_p[w] -> Lambda^{n-p}[w+1]."""
    _require(form, "co")
    E = epsilon_table(form.n, form.p)
    vals = np.einsum("kj,...jam->...kam", E, form.values)
    return form.like(vals, p=form.n - form.p, variance="contra", weight=form.weight + 1)


def star(fields: NCFields, form: MatrixPForm) -> MatrixPForm:
    """* = eps rho A rho."""
    _require(form, "co")
    w = multiply(fields.rho, form, 0.5)
    w = map_A(fields, w)
    w = multiply(fields.rho, w, 0.5)
    return epsilon(w)


def star_tilde(fields: NCFields, form: MatrixPForm) -> MatrixPForm:
    """*~ = rho^-1 A^-1 rho^-1 eps~."""
    _require(form, "co")
    w = epsilon_tilde(form)
    w = multiply(fields.rho_inv, w, -0.5)
    w = map_A_inverse(fields, w)
    return multiply(fields.rho_inv, w, -0.5)


def apply_star(fields: NCFields, form: MatrixPForm, variant: str = "star") -> MatrixPForm:
    if variant == "star":
        return star(fields, form)
    if variant == "star_tilde":
        return star_tilde(fields, form)
    raise InputError(f"unknown star variant {variant!r}")


# ---------------------------------------------------------------- inner product


def inner_product_pforms(fields: NCFields, psi: MatrixPForm, phi: MatrixPForm) -> tuple:
    """(pointwise <psi, phi>, grid total (psi, phi)); columns are summed as a trace."""
    _require(psi, "co")
    _same_type(psi, phi)
    K = a_kernel(fields.a, psi.p)
    Aphi = _apply_kernel(K, phi.values)
    local = np.einsum("...iam,...iam->...", np.conj(psi.values), Aphi)
    return local, complex(fields.grid.integrate(local))


# ---------------------------------------------------------------- exterior calculus


@lru_cache(maxsize=None)
def _d_table(n: int, p: int) -> tuple:
    """(target K, sign, mu, source J) terms of (d phi)_K = sum_k (-1)^k d_{K_k} phi_{K minus K_k}."""
    src = combo_index(n, p)
    out = []
    for ki, K in enumerate(combos(n, p + 1)):
        for k, mu in enumerate(K):
            J = K[:k] + K[k + 1:]
            out.append((ki, (-1) ** k, mu, src[J]))
    return tuple(out)


@lru_cache(maxsize=None)
def _dtilde_table(n: int, p: int) -> tuple:
    """(target L, sign, mu, source J) terms of (d~phi)^L = sum_mu d_mu phi^{mu L}."""
    src = combo_index(n, p)
    out = []
    for li, L in enumerate(combos(n, p - 1)):
        for mu in range(n):
            if mu in L:
                continue
            J = tuple(sorted((mu,) + L))
            out.append((li, perm_sign((mu,) + L), mu, src[J]))
    return tuple(out)


def _wedge_apply(form: MatrixPForm, table, ncomp: int, op) -> np.ndarray:
    shape = form.grid.sizes + (ncomp,) + form.values.shape[-2:]
    out = np.zeros(shape, dtype=np.result_type(form.values, complex))
    for tgt, sign, mu, src in table:
        out[..., tgt, :, :] += sign * op(mu, form.values[..., src, :, :])
    return out


def exterior_d(form: MatrixPForm, order: int = 4) -> MatrixPForm:
    """d: Lambda_p[0] -> Lambda_{p+1}[0]."""
    _require(form, "co", 0.0)
    n, p = form.n, form.p
    if p == n:
        return form.like(np.zeros(form.grid.sizes + (1,) + form.values.shape[-2:], complex), p=n)
    vals = _wedge_apply(form, _d_table(n, p), math.comb(n, p + 1),
                        lambda mu, f: derivative(form.grid, f, mu, order))
    return form.like(vals, p=p + 1)


def coderivative_dtilde(form: MatrixPForm, order: int = 4) -> MatrixPForm:
    """d~: Lambda^p[1] -> Lambda^{p-1}[1]."""
    _require(form, "contra", 1.0)
    n, p = form.n, form.p
    if p == 0:
        return form.like(np.zeros_like(form.values, dtype=complex))
    vals = _wedge_apply(form, _dtilde_table(n, p), math.comb(n, p - 1),
                        lambda mu, f: derivative(form.grid, f, mu, order))
    return form.like(vals, p=p - 1)


def dtilde_via_epsilon(form: MatrixPForm, order: int = 4) -> MatrixPForm:
    """(-1)^{np+1} eps~ d eps, the second route to d~."""
    n, p = form.n, form.p
    out = epsilon_tilde(exterior_d(epsilon(form), order))
    return out.scale((-1) ** (n * p + 1))


def connection_wedge(fields: NCFields, form: MatrixPForm) -> MatrixPForm:
    """(B phi)_{mu1..mu_{p+1}} = (p+1) B_[mu1 phi_mu2..]."""
    _require(form, "co")
    n, p = form.n, form.p
    if p == n:
        return form.like(np.zeros_like(form.values, dtype=complex))
    B = fields.B
    vals = _wedge_apply(form, _d_table(n, p), math.comb(n, p + 1), lambda mu, f: B[..., mu, :, :] @ f)
    return form.like(vals, p=p + 1)


def connection_contract(fields: NCFields, form: MatrixPForm) -> MatrixPForm:
    """(B~ phi)^{L} = B_mu phi^{mu L}."""
    _require(form, "contra")
    n, p = form.n, form.p
    if p == 0:
        return form.like(np.zeros_like(form.values, dtype=complex))
    B = fields.B
    vals = _wedge_apply(form, _dtilde_table(n, p), math.comb(n, p - 1), lambda mu, f: B[..., mu, :, :] @ f)
    return form.like(vals, p=p - 1)


def covariant_D(fields: NCFields, form: MatrixPForm, order: int = 4) -> MatrixPForm:
    """D = rho (d + B) rho^-1 on Lambda_p[1/2]."""
    _require(form, "co", 0.5)
    psi = multiply(fields.rho_inv, form, -0.5)
    out = exterior_d(psi, order) + connection_wedge(fields, psi)
    return multiply(fields.rho, out, 0.5)


def covariant_Dtilde(fields: NCFields, form: MatrixPForm, order: int = 4) -> MatrixPForm:
    """D~ = rho^-1 (d~ + B~) rho on Lambda^p[1/2]."""
    _require(form, "contra", 0.5)
    psi = multiply(fields.rho, form, 0.5)
    out = coderivative_dtilde(psi, order) + connection_contract(fields, psi)
    return multiply(fields.rho_inv, out, -0.5)


def curvature_action(fields: NCFields, R: np.ndarray, form: MatrixPForm) -> MatrixPForm:
    """rho R_{mu nu} rho^-1 phi for a 0-form phi, as a 2-form."""
    if form.p != 0:
        raise InputError("curvature action implemented for 0-forms")
    n = form.n
    vals = np.zeros(form.grid.sizes + (math.comb(n, 2),) + form.values.shape[-2:], complex)
    for k, (mu, nu) in enumerate(combos(n, 2)):
        vals[..., k, :, :] = fields.rho @ R[..., mu, nu, :, :] @ fields.rho_inv @ form.values[..., 0, :, :]
    return form.like(vals, p=2)


def star_adjointness(fields: NCFields, p: int, rng, variant: str = "star") -> dict:
    """<phi, *psi> against <*phi, psi> for random phi in Lambda_{n-p}, psi in Lambda_p.

    Returns the relative residuals for both sign conventions.
    """
    n, N = fields.n, fields.N
    psi = random_form(fields.grid, p, N, rng)
    phi = random_form(fields.grid, n - p, N, rng)
    lhs = inner_product_pforms(fields, phi, apply_star(fields, psi, variant))[1]
    rhs = inner_product_pforms(fields, apply_star(fields, phi, variant), psi)[1]
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return {"plus": abs(lhs - rhs) / scale, "minus": abs(lhs + rhs) / scale}
