"""Heat invariants a0, a1 of D-bar D from the rescaled symbol integral.

With H(x, xi) = [Gamma(xi)]^2 and K = -Gamma(xi) D - D-bar Gamma(xi),

    a0 = int dxi/pi^{n/2} e^{-H}
    a1 = int dxi/pi^{n/2} [ int_{tau1<tau2} e^{-(1-tau2)H} K e^{-(tau2-tau1)H} K e^{-tau1 H}
                            - int e^{-(1-tau)H} (D-bar D) e^{-tau H} ] . I

where operators act on everything to their right, including the x
dependence of the exponentials.  The fast path evaluates the tau
integrals exactly with divided differences of exp in the per-point
eigenbases; the reference path uses simplex Gauss-Legendre quadrature and
grid applications of the operators.
"""
from __future__ import annotations

import dataclasses
import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, QuadratureDivergence, WindowWarning
from .fields import NCFields, dagger, herm_fn, symbol_H
from .operators import (
    StencilOperator,
    compose_DbarD,
    dense_assembly,
    hermitian_spectrum,
    multiplication,
    nc_dirac,
    nc_dirac_adjoint,
    roll_nd,
)

SERIES_SPREAD = 1e-3


@dataclass(frozen=True)
class QuadratureSpec:
    hermite_order: int = 24
    tau_order: int = 16
    stencil_order: int = 4
    eig_degeneracy_tol: float = 1e-9
    path: str = "fast"

    def __post_init__(self):
        if self.hermite_order < 4 or self.tau_order < 4:
            raise InputError("quadrature orders must be >= 4")
        if self.path not in ("fast", "reference"):
            raise InputError(f"unknown a1 path {self.path!r}")

    def replace(self, **kw) -> "QuadratureSpec":
        return dataclasses.replace(self, **kw)


# ---------------------------------------------------------------- divided differences


def f1(a, b):
    """int_0^1 e^{-(1-t)a - t b} dt, symmetric in (a, b)."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    d = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(d > 0, -np.expm1(-d) / np.where(d > 0, d, 1.0), 1.0)
    return np.exp(-lo) * ratio


def f2(a, b, c):
    """Second divided difference of exp(-x): the simplex integral of e^{-(...)}."""
    a, b, c = np.broadcast_arrays(*(np.asarray(v, float) for v in (a, b, c)))
    lo = np.minimum(np.minimum(a, b), c)
    hi = np.maximum(np.maximum(a, b), c)
    mid = a + b + c - lo - hi
    spread = hi - lo
    close = spread < SERIES_SPREAD
    with np.errstate(invalid="ignore", divide="ignore"):
        gen = (f1(lo, mid) - f1(mid, hi)) / np.where(close, 1.0, spread)
    mu = (lo + mid + hi) / 3
    y0, y1, y2 = lo - mu, mid - mu, hi - mu
    h2 = 0.5 * (y0 * y0 + y1 * y1 + y2 * y2)
    e3 = y0 * y1 * y2
    series = np.exp(-mu) * (0.5 + h2 / 24 - e3 / 120 + h2 * h2 / 720)
    return np.where(close, series, gen)


def duhamel1(H, W) -> np.ndarray:
    """int_0^1 e^{-(1-t)H} W e^{-tH} dt (batched)."""
    w, V = np.linalg.eigh(H)
    Wt = dagger(V) @ W @ V
    F = f1(w[..., :, None], w[..., None, :])
    return V @ (Wt * F) @ dagger(V)


def duhamel2(H, M, N) -> np.ndarray:
    """int_{0<t1<t2<1} e^{-(1-t2)H} M e^{-(t2-t1)H} N e^{-t1 H} (batched)."""
    w, V = np.linalg.eigh(H)
    Mt = dagger(V) @ M @ V
    Nt = dagger(V) @ N @ V
    F = f2(w[..., :, None, None], w[..., None, :, None], w[..., None, None, :])
    inner = np.einsum("...ij,...jk,...ijk->...ik", Mt, Nt, F)
    return V @ inner @ dagger(V)


def simplex_rule(order: int) -> tuple:
    """Nodes (t1, t2) and weights for 0 <= t1 <= t2 <= 1 from tensor Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(order)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    t2 = 0.5 * (1 + u)
    t1 = 0.5 * t2 * (1 + v)
    weight = wu * wv * 0.25 * t2
    return t1.ravel(), t2.ravel(), weight.ravel()


def line_rule(order: int) -> tuple:
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (1 + x), 0.5 * w


def expm_neg(H, t):
    return herm_fn(H, lambda w: np.exp(-t * w))


def duhamel1_quadrature(H, W, order: int = 32) -> np.ndarray:
    out = 0
    for t, wt in zip(*line_rule(order)):
        out = out + wt * expm_neg(H, 1 - t) @ W @ expm_neg(H, t)
    return out


def duhamel2_quadrature(H, M, N, order: int = 32) -> np.ndarray:
    w, V = np.linalg.eigh(H)

    def E(t):
        return (V * np.exp(-t * w)[..., None, :]) @ dagger(V)

    out = 0
    for t1, t2, wt in zip(*simplex_rule(order)):
        out = out + wt * E(1 - t2) @ M @ E(t2 - t1) @ N @ E(t1)
    return out


# ---------------------------------------------------------------- xi quadrature


def hermite_nodes(n: int, order: int, half: bool = False) -> tuple:
    """Tensor Gauss-Hermite nodes eta (count, n) and weights for weight e^{-|eta|^2}.

    With ``half`` only nodes with eta_0 > 0 are kept (weights doubled), valid
    for integrands even under eta -> -eta and even ``order``.
    """
    x, w = np.polynomial.hermite.hermgauss(order)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    eta = np.stack([g.ravel() for g in grids], axis=1)
    wt = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    if half:
        if order % 2:
            raise InputError("half-node symmetry needs an even Hermite order")
        keep = eta[:, 0] > 0
        eta, wt = eta[keep], 2 * wt[keep]
    return eta, wt


def scalar_metric(fields: NCFields) -> np.ndarray:
    """c^{mu nu}(x) = tr(a^{mu nu}(x)) / N."""
    return np.real(np.trace(fields.a, axis1=-2, axis2=-1)) / fields.N


def inv_sqrt_spd(c: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(c)
    if np.any(w <= 0):
        raise QuadratureDivergence("scalar part of the metric is not positive definite")
    return (V * w[..., None, :] ** -0.5) @ np.swapaxes(V, -1, -2)


def a0_density(fields: NCFields, quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Per-point a0 with a per-point change of variables xi = S(x) eta."""
    n = fields.n
    S = inv_sqrt_spd(scalar_metric(fields))
    jac = np.abs(np.linalg.det(S))
    eta, wt = hermite_nodes(n, quad.hermite_order, half=quad.hermite_order % 2 == 0)
    out = np.zeros(fields.grid.sizes + (fields.N, fields.N), complex)
    for e, w in zip(eta, wt):
        xi = np.einsum("...mk,k->...m", S, e)
        G = np.einsum("...m,...mij->...ij", xi, fields.Gamma)
        lam, V = np.linalg.eigh(G @ G)
        out += w * (V * np.exp(-(lam - e @ e))[..., None, :]) @ dagger(V)
    return out * (jac / np.pi ** (n / 2))[..., None, None]


# ---------------------------------------------------------------- a1


def K_components(fields: NCFields, order: int = 4) -> list:
    """K^mu with K(xi) = xi_mu K^mu = -Gamma(xi) D - D-bar Gamma(xi) (untwisted)."""
    grid = fields.grid
    D = nc_dirac(fields, order, twisted=False)
    Db = nc_dirac_adjoint(fields, order, twisted=False)
    out = []
    for mu in range(fields.n):
        G = multiplication(grid, fields.Gamma[..., mu, :, :])
        out.append(-(G @ D) - (Db @ G))
    return out


def K_operator(components: list, xi) -> StencilOperator:
    grid = components[0].grid
    keys = sorted(set().union(*(c.coeffs for c in components)))
    coeffs = {}
    for o in keys:
        acc = 0
        for x, comp in zip(xi, components):
            if o in comp.coeffs and x != 0:
                acc = acc + x * comp.coeffs[o]
        if not np.isscalar(acc):
            coeffs[o] = acc
    return StencilOperator(grid, coeffs, "K")


def K_apply(fields: NCFields, xi, f: np.ndarray, order: int = 4) -> np.ndarray:
    """-Gamma(xi) (D f) - D-bar (Gamma(xi) f) on a matrix function f."""
    return K_operator(K_components(fields, order), xi).apply(f)


def global_scaling(fields: NCFields) -> np.ndarray:
    c = scalar_metric(fields)
    return inv_sqrt_spd(c.reshape(-1, fields.n, fields.n).mean(axis=0))


def _offset_add(o1, o2):
    return tuple(p + q for p, q in zip(o1, o2))


def path_transport(links: np.ndarray, offset) -> np.ndarray:
    """W(x, x + offset) along the axis-ordered lattice path (axis 0 first)."""
    n = links.shape[0]
    N = links.shape[-1]
    T = np.broadcast_to(np.eye(N, dtype=complex), links.shape[1:]).copy()
    pos = [0] * n
    for mu in range(n):
        step = 1 if offset[mu] > 0 else -1
        for _ in range(abs(offset[mu])):
            if step > 0:
                T = T @ roll_nd(links[mu], pos)
                pos[mu] += 1
            else:
                pos[mu] -= 1
                T = T @ dagger(roll_nd(links[mu], pos))
    return T


class UnitSection:
    """Values g_x(x + o) of the unit matrix parallel-transported from x.

    The heat coefficients do not depend on the test section as long as it
    equals I at x; transporting it makes the lattice coefficients exactly
    gauge covariant.  For B = 0 this is the constant unit matrix.
    """

    def __init__(self, links: np.ndarray):
        self.links = links
        self._cache = {}

    def __call__(self, offset) -> np.ndarray:
        if offset not in self._cache:
            self._cache[offset] = dagger(path_transport(self.links, offset))
        return self._cache[offset]


def _a1_node_fast(grid, Kc, Lc, xi, shift_s, H, unit):
    """Contribution of one xi-node: term1 - term2 (before weights)."""
    lam, V = np.linalg.eigh(H)
    lam = lam - shift_s
    Vd = dagger(V)
    K = K_operator(Kc, xi).coeffs
    Kt = {o: Vd @ c @ roll_nd(V, o) for o, c in K.items()}
    lam_sh = {}

    def lam_at(o):
        if o not in lam_sh:
            lam_sh[o] = roll_nd(lam, o)
        return lam_sh[o]

    inner = {}
    li = lam[..., :, None, None]
    for o1 in sorted(Kt):
        lj = lam_at(o1)[..., None, :, None]
        for o2 in sorted(Kt):
            o = _offset_add(o1, o2)
            lk = lam_at(o)[..., None, None, :]
            F = f2(li, lj, lk)
            term = np.einsum("...ij,...jk,...ijk->...ik", Kt[o1], roll_nd(Kt[o2], o1), F)
            inner[o] = inner[o] + term if o in inner else term
    for o, c in Lc.items():
        Lt = Vd @ c @ roll_nd(V, o)
        F = f1(lam[..., :, None], lam_at(o)[..., None, :])
        term = -Lt * F
        inner[o] = inner[o] + term if o in inner else term
    out = 0
    for o in sorted(inner):
        out = out + V @ inner[o] @ roll_nd(Vd, o) @ unit(o)
    return out


def _a1_node_reference(grid, Kc, L, xi, shift_s, H, tau_order, unit):
    """Simplex Gauss-Legendre in tau with explicitly composed stencil kernels."""
    K = K_operator(Kc, xi)

    def E(t):
        return multiplication(grid, herm_fn(H, lambda w: np.exp(-t * (w - shift_s))))

    total = {}

    def add(op, weight):
        for o, c in op.coeffs.items():
            total[o] = total[o] + weight * c if o in total else weight * c

    for t1, t2, wt in zip(*simplex_rule(tau_order)):
        add(E(1 - t2) @ K @ E(t2 - t1) @ K @ E(t1), wt)
    for t, wt in zip(*line_rule(tau_order)):
        add(E(1 - t) @ L @ E(t), -wt)
    return sum(total[o] @ unit(o) for o in sorted(total))


def a1_density(fields: NCFields, quad: QuadratureSpec = QuadratureSpec(), diagnostics: dict | None = None) -> np.ndarray:
    """Per-point a1 (symmetrized; the pre-symmetrization defect goes to ``diagnostics``)."""
    n = fields.n
    order = quad.stencil_order
    fields.grid.check_stencil(order)
    S = global_scaling(fields)
    jac = abs(np.linalg.det(S))
    Kc = K_components(fields, order)
    L = compose_DbarD(fields, order, twisted=False)
    unit = UnitSection(fields.plain_links)
    eta, wt = hermite_nodes(n, quad.hermite_order, half=quad.hermite_order % 2 == 0)
    out = 0
    for e, w in zip(eta, wt):
        xi = S @ e
        H = symbol_H(fields, xi)
        if quad.path == "fast":
            val = _a1_node_fast(fields.grid, Kc, L.coeffs, xi, e @ e, H, unit)
        else:
            val = _a1_node_reference(fields.grid, Kc, L, xi, e @ e, H, quad.tau_order, unit)
        out = out + w * val
    out = out * jac / np.pi ** (n / 2)
    scale = max(float(np.abs(out).max()), 1e-300)
    defect = float(np.abs(out - dagger(out)).max()) / scale
    if diagnostics is not None:
        diagnostics["a1_hermiticity_defect"] = defect
    return 0.5 * (out + dagger(out))


# ---------------------------------------------------------------- global invariants


@dataclass
class InvariantReport:
    a0_density: np.ndarray
    a1_density: np.ndarray
    A0: float
    A1: float
    F_weight: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    provenance: str = ""

    def summary(self) -> dict:
        return {"A0": self.A0, "A1": self.A1, "diagnostics": self.diagnostics, "provenance": self.provenance}


def _trace_integral(fields, density, F):
    if F is None:
        tr = np.trace(density, axis1=-2, axis2=-1)
    else:
        tr = np.trace(np.broadcast_to(F, density.shape) @ density, axis1=-2, axis2=-1)
    return fields.grid.integrate(tr)


def fields_digest(fields: NCFields, quad: QuadratureSpec) -> str:
    h = hashlib.sha256()
    for arr in (fields.Gamma, fields.rho, fields.B, fields.plain_links):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(repr((fields.grid, dataclasses.asdict(quad))).encode())
    return h.hexdigest()


def global_invariants(
    fields: NCFields,
    F=None,
    quad: QuadratureSpec = QuadratureSpec(),
    refine: bool = False,
    with_a1: bool = True,
) -> InvariantReport:
    diag = {}
    a0 = a0_density(fields, quad)
    a1 = a1_density(fields, quad, diag) if with_a1 else np.zeros_like(a0)
    A0c = _trace_integral(fields, a0, F)
    A1c = _trace_integral(fields, a1, F)
    scale0 = max(abs(A0c), 1e-300)
    diag["A0_imag_rel"] = float(abs(A0c.imag) / scale0)
    diag["A1_imag_rel"] = float(abs(A1c.imag) / max(abs(A1c), scale0))
    diag["a0_hermiticity_defect"] = float(np.abs(a0 - dagger(a0)).max())
    if refine:
        fine = quad.replace(hermite_order=quad.hermite_order + 8)
        A0f = _trace_integral(fields, a0_density(fields, fine), F).real
        diag["A0_refine_delta"] = float(abs(A0f - A0c.real))
        if with_a1:
            A1f = _trace_integral(fields, a1_density(fields, fine), F).real
            diag["A1_refine_delta"] = float(abs(A1f - A1c.real))
    return InvariantReport(
        a0_density=a0,
        a1_density=a1,
        A0=float(A0c.real),
        A1=float(A1c.real),
        F_weight=F,
        diagnostics=diag,
        provenance=fields_digest(fields, quad),
    )


# ---------------------------------------------------------------- heat trace fit


def lattice_flat_A0(order: int, n: int, N: int, volume: float = 1.0) -> float:
    """Small-t limit of (4 pi t)^{n/2} Tr e^{-t D-bar D} for the flat lattice operator.

    Each zero of the stencil symbol contributes a Gaussian whose width is
    set by the symbol slope there, so the limit is N Vol (sum 1/|s'(theta_0)|)^n.
    """
    from .grid import stencil_weights

    w = stencil_weights(order)
    slopes = []
    for theta in (0.0, np.pi):
        s = sum(c * k * np.cos(k * theta) for k, c in w.items())
        if abs(s) > 1e-12:
            slopes.append(abs(s))
    per_axis = sum(1.0 / s for s in slopes)
    return N * volume * per_axis**n


def heat_trace_crosscheck(
    fields: NCFields,
    t_list,
    cap: int = 8192,
    order: int = 4,
    quad_report: InvariantReport | None = None,
) -> dict:
    """Least-squares fit of (4 pi t)^{n/2} Tr e^{-t D-bar D} = A0 + t A1 over t_list."""
    n = fields.n
    M = dense_assembly(compose_DbarD(fields, order), cap)
    w, _ = hermitian_spectrum(M)
    t = np.asarray(t_list, float)
    y = np.array([(4 * np.pi * ti) ** (n / 2) * np.sum(np.exp(-ti * w)) for ti in t])
    X = np.stack([np.ones_like(t), t], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.abs(X @ coef - y).max() / max(abs(coef[0]), 1e-300))
    out = {
        "t": t.tolist(),
        "A0_fit": float(coef[0]),
        "A1_fit": float(coef[1]),
        "fit_residual": resid,
        "A0_lattice_prediction": lattice_flat_A0(order, n, fields.N, fields.grid.volume),
    }
    if quad_report is not None:
        out["A0_quadrature"] = quad_report.A0
        out["A1_quadrature"] = quad_report.A1
    if resid > 1e-2:
        warnings.warn(f"heat-trace fit residual {resid:.3g}: t outside the asymptotic window", WindowWarning)
    return out
