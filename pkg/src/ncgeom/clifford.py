"""Matrix representations of the complex Clifford algebra Cliff(n).

Basis elements gamma_I are addressed by bitmasks over 0-based generator
indices; public functions take 1-based index lists.  In odd dimension the
irreducible N x N block is used, so the image of Cliff(n) is the even
subalgebra: expansions are taken on even-grade blades only and every matrix
is treated as even (see ``CliffordExpansion``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import InputError, ParityError

SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (0 when entries repeat)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def mask_of(indices) -> int:
    m = 0
    for a in indices:
        m |= 1 << a
    return m


def indices_of(mask: int) -> tuple:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


def grade(mask: int) -> int:
    return bin(mask).count("1")


def _even_gammas(n: int):
    """Dirac matrices for even n by tensor recursion from the Pauli pair."""
    if n == 0:
        return []
    gam = [SIGMA[0], SIGMA[1]]
    for _ in range(n // 2 - 1):
        eye = np.eye(gam[0].shape[0])
        gam = [np.kron(g, SIGMA[0]) for g in gam]
        gam += [np.kron(eye, SIGMA[1]), np.kron(eye, SIGMA[2])]
    return gam


def _chirality(gammas, n: int) -> np.ndarray:
    N = gammas[0].shape[0] if gammas else 1
    prod = np.eye(N, dtype=complex)
    for g in gammas:
        prod = prod @ g
    return (1j ** (n * (n - 1) // 2 % 4)) * prod


@dataclass(frozen=True, eq=False)
class GammaRep:
    n: int
    m: int
    N: int
    gammas: tuple
    chirality: np.ndarray
    orientation_sign: int = 1
    _blades: dict = field(default_factory=dict, repr=False)

    def check_index(self, indices):
        for a in indices:
            if not 1 <= a <= self.n:
                raise InputError(f"index {a} outside 1..{self.n}")

    def blade(self, mask: int) -> np.ndarray:
        """gamma_I for the sorted index set encoded by ``mask``."""
        if mask not in self._blades:
            out = np.eye(self.N, dtype=complex)
            for a in indices_of(mask):
                out = out @ self.gammas[a]
            self._blades[mask] = out
        return self._blades[mask]

    @cached_property
    def expansion_masks(self) -> tuple:
        """Blades forming a basis of N x N matrices (all, or even-only for odd n)."""
        masks = range(1 << self.n)
        if self.n % 2:
            masks = [s for s in masks if grade(s) % 2 == 0]
        return tuple(masks)

    @cached_property
    def hermitian_basis(self) -> dict:
        """mask -> gamma_I or i*gamma_I, whichever is Hermitian."""
        out = {}
        for s in range(1 << self.n):
            k = grade(s)
            out[s] = self.blade(s) if (k * (k - 1) // 2) % 2 == 0 else 1j * self.blade(s)
        return out


def build_gamma_rep(n: int) -> GammaRep:
    if n < 1:
        raise InputError("dimension must be >= 1")
    m = n // 2
    if n % 2 == 0:
        gam = _even_gammas(n)
    else:
        base = _even_gammas(n - 1)
        gam = base + [_chirality(base, n - 1)]
    gam = [np.asarray(g, dtype=complex) for g in gam]
    return GammaRep(n=n, m=m, N=2**m, gammas=tuple(gam), chirality=_chirality(gam, n))


def gamma_antisym(rep: GammaRep, indices) -> np.ndarray:
    indices = list(indices)
    rep.check_index(indices)
    if len(set(indices)) != len(indices):
        return np.zeros((rep.N, rep.N), dtype=complex)
    out = np.eye(rep.N, dtype=complex)
    for a in indices:
        out = out @ rep.gammas[a - 1]
    return out


def _check_square(rep, A):
    A = np.asarray(A, dtype=complex)
    if A.shape != (rep.N, rep.N):
        raise InputError(f"expected {rep.N}x{rep.N} matrix, got {A.shape}")
    return A


def pr0(rep: GammaRep, A) -> complex:
    A = _check_square(rep, A)
    return complex(np.trace(A) / rep.N)


@dataclass(frozen=True, eq=False)
class CliffordExpansion:
    """Coefficients of A on the blade basis, indexed by bitmask.

    ``coeff(k)`` returns the antisymmetric rank-k array A_(k)^{a1..ak};
    the reassembly A_(0) I + sum_k A_(k)^{a..} gamma_{a..} / k! equals
    ``matrix()``.
    """

    rep: GammaRep
    blades: np.ndarray

    @property
    def coeff_0(self) -> complex:
        return complex(self.blades[0])

    def coeff(self, k: int) -> np.ndarray:
        n = self.rep.n
        if k == 0:
            return np.asarray(self.blades[0])
        arr = np.zeros((n,) * k, dtype=complex)
        for combo in itertools.combinations(range(n), k):
            c = self.blades[mask_of(combo)]
            if c == 0:
                continue
            for perm in itertools.permutations(combo):
                arr[perm] = perm_sign(perm) * c
        return arr

    def matrix(self) -> np.ndarray:
        out = np.zeros((self.rep.N, self.rep.N), dtype=complex)
        for s in np.flatnonzero(self.blades):
            out += self.blades[s] * self.rep.blade(int(s))
        return out

    def grade_norms(self) -> np.ndarray:
        norms = np.zeros(self.rep.n + 1)
        for s in range(len(self.blades)):
            norms[grade(s)] += abs(self.blades[s]) ** 2
        return np.sqrt(norms)


def clifford_expand(rep: GammaRep, A) -> CliffordExpansion:
    A = _check_square(rep, A)
    blades = np.zeros(1 << rep.n, dtype=complex)
    for s in rep.expansion_masks:
        # <gamma_I, A> = Pr0(tau(gamma_I) A) and tau(gamma_I) = gamma_I^dagger
        blades[s] = np.vdot(rep.blade(s), A) / rep.N
    return CliffordExpansion(rep, blades)


_INVOLUTION_SIGN = {
    "alpha": lambda k: (-1) ** k,
    "tau": lambda k: (-1) ** (k * (k - 1) // 2),
    "star": lambda k: (-1) ** (k * (k + 1) // 2),
}


def involution(rep: GammaRep, A, kind: str) -> np.ndarray:
    if kind not in _INVOLUTION_SIGN:
        raise InputError(f"unknown involution {kind!r}")
    exp = clifford_expand(rep, A)
    sign = _INVOLUTION_SIGN[kind]
    blades = np.array([sign(grade(s)) * c for s, c in enumerate(exp.blades)])
    return CliffordExpansion(rep, blades).matrix()


def basis_product(rep: GammaRep, idx_k, idx_j) -> CliffordExpansion:
    """Expansion of gamma_{a1..ak} gamma^{b1..bj} from the contraction formula.

    Only the term with p equal to the number of shared indices survives;
    its antisymmetrized sum collapses to one canonical ordering (shared
    indices first), giving sign (-1)^{p(2k-p-1)/2} sgn(sigma) sgn(pi).
    """
    A, B = list(idx_k), list(idx_j)
    rep.check_index(A + B)
    blades = np.zeros(1 << rep.n, dtype=complex)
    if len(set(A)) != len(A) or len(set(B)) != len(B):
        return CliffordExpansion(rep, blades)
    k = len(A)
    common = [a for a in A if a in B]
    p = len(common)
    rest_a = [a for a in A if a not in common]
    rest_b = [b for b in B if b not in common]
    sigma = perm_sign([A.index(c) for c in common] + [A.index(a) for a in rest_a])
    pi = perm_sign([B.index(c) for c in common] + [B.index(b) for b in rest_b])
    tail = rest_a + rest_b
    sign = (-1) ** (p * (2 * k - p - 1) // 2) * sigma * pi * perm_sign(tail)
    blades[mask_of(a - 1 for a in tail)] = sign
    return CliffordExpansion(rep, blades)


def commutator_so_n_check(rep: GammaRep, a: int, b: int, c: int, d: int):
    """Residuals of the so(n) commutator and the gamma_ab anticommutator identities."""
    g = lambda *idx: gamma_antisym(rep, idx)  # noqa: E731
    dl = lambda i, j: float(i == j)  # noqa: E731
    gab, gcd = g(a, b), g(c, d)
    comm = gab @ gcd - gcd @ gab
    comm_rhs = 2 * (-dl(a, c) * g(b, d) - dl(b, d) * g(a, c) + dl(b, c) * g(a, d) + dl(a, d) * g(b, c))
    anti = gab @ gcd + gcd @ gab
    eye = np.eye(rep.N)
    anti_rhs = 2 * (g(a, b, c, d) - dl(a, c) * dl(b, d) * eye + dl(b, c) * dl(a, d) * eye)
    return comm - comm_rhs, anti - anti_rhs


def spin_exp(rep: GammaRep, theta) -> np.ndarray:
    """T = exp(-1/4 theta_ab gamma^ab), unitary."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (rep.n, rep.n):
        raise InputError("theta must be n x n")
    if not np.allclose(theta, -theta.T, atol=1e-12, rtol=0):
        raise InputError("theta must be antisymmetric")
    X = np.zeros((rep.N, rep.N), dtype=complex)
    for a in range(rep.n):
        for b in range(rep.n):
            if a != b and theta[a, b] != 0:
                X -= 0.25 * theta[a, b] * rep.blade(mask_of((a,))) @ rep.blade(mask_of((b,)))
    w, V = np.linalg.eigh(1j * X)
    return (V * np.exp(-1j * w)) @ V.conj().T


def parity(rep: GammaRep, T, tol: float = 1e-10) -> int:
    """epsilon(T): +1 for even, -1 for odd elements.

    The odd-dimensional irreducible representation cannot separate the
    two parities, so odd n always reports +1.
    """
    if rep.n % 2:
        return 1
    norms = clifford_expand(rep, T).grade_norms()
    even = np.linalg.norm(norms[0::2])
    odd = np.linalg.norm(norms[1::2])
    scale = max(even, odd)
    if odd <= tol * scale:
        return 1
    if even <= tol * scale:
        return -1
    raise ParityError(f"mixed parity element (even {even:.3g}, odd {odd:.3g})")


def vector_rep(rep: GammaRep, T, eps: int | None = None) -> np.ndarray:
    """rho^a_b(T) = eps(T) Pr0(T gamma^a T^{-1} gamma_b)."""
    T = _check_square(rep, T)
    if abs(np.linalg.det(T)) < 1e-14 or np.linalg.cond(T) > 1e12:
        raise InputError("T is singular")
    if eps is None:
        eps = parity(rep, T)
    Tinv = np.linalg.inv(T)
    G = np.array(rep.gammas)
    conj = np.einsum("ij,ajk,kl->ail", T, G, Tinv)
    rho = eps * np.einsum("aij,bji->ab", conj, G) / rep.N
    return rho.real


def clifford_report(n: int, check: bool = True, seed: int = 0) -> dict:
    """Basis census and relation residuals for the CLI."""
    rep = build_gamma_rep(n)
    census = {str(k): math.comb(n, k) for k in range(n + 1)}
    out = {
        "n": n,
        "N": rep.N,
        "basis_census": census,
        "basis_total": sum(census.values()),
        "independent_matrices": len(rep.expansion_masks),
    }
    if not check:
        return out
    eye = np.eye(rep.N)
    anti = 0.0
    for a in range(n):
        for b in range(n):
            r = rep.gammas[a] @ rep.gammas[b] + rep.gammas[b] @ rep.gammas[a] - 2 * (a == b) * eye
            anti = max(anti, float(np.abs(r).max()))
    so_n = 0.0
    for idx in itertools.product(range(1, n + 1), repeat=4):
        c, s = commutator_so_n_check(rep, *idx)
        so_n = max(so_n, float(np.abs(c).max()), float(np.abs(s).max()))
    chi = rep.chirality
    chir = float(np.abs(chi @ chi - eye).max())
    rng = np.random.default_rng(seed)
    cover = 0.0
    flip = 0.0
    for _ in range(20):
        A = rng.normal(size=(n, n))
        theta = A - A.T
        T = spin_exp(rep, theta)
        cover = max(cover, float(np.abs(vector_rep(rep, T) - scipy.linalg.expm(theta)).max()))
        flip = max(flip, float(np.abs(vector_rep(rep, T) - vector_rep(rep, -T)).max()))
    out["residuals"] = {
        "anticommutator_max": anti,
        "so_n_relations_max": so_n,
        "chirality_square_max": chir,
        "double_cover_max": cover,
        "sign_flip_max": flip,
    }
    return out
