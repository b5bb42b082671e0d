"""Einstein-Hilbert type functional from the heat invariants, and its extremization.

    S = -(12 A1 + 2 Lambda A0) / (16 pi G N)

Deformation fields are parameterized by truncated Fourier slots so the
search space stays small and every decoded configuration is smooth.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
import numpy as np

from .clifford import GammaRep
from .errors import EllipticityError, InputError, LineSearchStall, NCGeomError
from .fields import NCFields, build_deformation, hermiticity_defect, spin_connection_B
from .grid import TorusGrid
from .heat import QuadratureSpec, global_invariants
from .operators import nc_dirac, nc_dirac_adjoint
from .riemann import MetricField, conformal_metric, riemann_tensor

TARGETS = ("log_volume", "sigma", "alpha", "phi", "B")


@dataclass
class ActionReport:
    S: float
    A0: float
    A1: float
    G: float
    Lam: float
    N: int
    penalty: float = 0.0
    penalty_mu: float = 0.0
    gradient: np.ndarray | None = None
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def recompute(self) -> float:
        return action_value(self.A0, self.A1, self.G, self.Lam, self.N) + self.penalty_mu * self.penalty


def action_value(A0: float, A1: float, G: float, Lam: float, N: int) -> float:
    return -(12 * A1 + 2 * Lam * A0) / (16 * np.pi * G * N)


def self_adjointness_penalty(fields: NCFields, order: int = 4) -> float:
    """||D - D-bar||^2 as the grid-integrated Frobenius norm of the stencil coefficients."""
    diff = nc_dirac(fields, order) - nc_dirac_adjoint(fields, order)
    total = sum(float(np.sum(np.abs(c) ** 2)) for c in diff.coeffs.values())
    return total * fields.grid.cell_volume


def eh_action(
    fields: NCFields,
    G: float = 1.0,
    Lam: float = 1.0,
    quad: QuadratureSpec = QuadratureSpec(),
    penalty_mu: float = 0.0,
    with_a1: bool = True,
) -> ActionReport:
    if G <= 0:
        raise InputError("G must be positive")
    if penalty_mu < 0:
        raise InputError("penalty weight must be >= 0")
    inv = global_invariants(fields, quad=quad, with_a1=with_a1)
    pen = self_adjointness_penalty(fields, quad.stencil_order) if penalty_mu else 0.0
    S = action_value(inv.A0, inv.A1, G, Lam, fields.N) + penalty_mu * pen
    return ActionReport(
        S=float(S), A0=inv.A0, A1=inv.A1, G=G, Lam=Lam, N=fields.N,
        penalty=pen, penalty_mu=penalty_mu, diagnostics=dict(inv.diagnostics),
    )


def einstein_residual(metric: MetricField, Lam: float, order: int = 4) -> np.ndarray:
    """R_{mu nu} - Lambda g_{mu nu} per point."""
    metric.grid.check_stencil(order)
    ric = np.einsum("...rsrn->...sn", riemann_tensor(metric, order))
    return ric - Lam * metric.g


# ---------------------------------------------------------------- parameterization


@dataclass(frozen=True, eq=False)
class Slot:
    """One real parameter: amplitude of trig(2 pi k.x / L) times a generator.

    ``generator`` is Hermitian for alpha and phi, anti-Hermitian for B, and
    unused for the scalar targets.  ``mu`` selects the vector component.
    """

    target: str
    k: tuple = ()
    trig: str = "const"
    mu: int = 0
    generator: np.ndarray | None = None
    bounds: tuple = (-np.inf, np.inf)

    def __post_init__(self):
        if self.target not in TARGETS:
            raise InputError(f"unknown slot target {self.target!r}")
        if self.trig not in ("const", "cos", "sin"):
            raise InputError(f"unknown slot profile {self.trig!r}")
        if self.target in ("alpha", "phi", "B") and self.generator is None:
            raise InputError(f"{self.target} slot needs a generator matrix")

    def profile(self, grid: TorusGrid) -> np.ndarray:
        if self.trig == "const":
            return np.ones(grid.sizes)
        x = grid.coords()
        k = np.zeros(grid.n) if not self.k else np.asarray(self.k, float)
        arg = sum(2 * np.pi * k[i] * x[i] / grid.lengths[i] for i in range(grid.n))
        return np.cos(arg) if self.trig == "cos" else np.sin(arg)


@dataclass(frozen=True, eq=False)
class FieldModel:
    """Decoder from a flat parameter vector to deformed fields over a conformal base."""

    grid: TorusGrid
    rep: GammaRep
    slots: tuple
    kappa: float = 0.0
    order: int = 4
    with_spin_connection: bool = True
    background: dict = field(default_factory=dict, repr=False)  # sigma, alpha, phi, B arrays

    @property
    def size(self) -> int:
        return len(self.slots)

    @property
    def bounds(self) -> tuple:
        lo = np.array([s.bounds[0] for s in self.slots], float)
        hi = np.array([s.bounds[1] for s in self.slots], float)
        return lo, hi

    def _design(self, target: str) -> tuple:
        idx = [i for i, s in enumerate(self.slots) if s.target == target]
        cols = []
        for i in idx:
            s = self.slots[i]
            prof = s.profile(self.grid)
            if target == "log_volume":
                cols.append(prof / self.grid.n)
            elif target == "sigma":
                cols.append(prof)
            else:
                n, N = self.grid.n, self.rep.N
                col = np.zeros(self.grid.sizes + ((n,) if target != "phi" else ()) + (N, N), complex)
                if target == "phi":
                    col += prof[..., None, None] * s.generator
                else:
                    col[..., s.mu, :, :] += prof[..., None, None] * s.generator
                cols.append(col)
        return idx, cols

    def decode(self, theta, check: bool = True) -> NCFields:
        theta = np.asarray(theta, float)
        if theta.shape != (self.size,):
            raise InputError(f"parameter vector has shape {theta.shape}, expected ({self.size},)")
        grid, rep = self.grid, self.rep
        n, N = grid.n, rep.N
        bg = self.background
        sigma = np.array(bg.get("sigma", np.zeros(grid.sizes)), float)
        for target in ("log_volume", "sigma"):
            idx, cols = self._design(target)
            for i, c in zip(idx, cols):
                sigma = sigma + theta[i] * c
        parts = {
            "alpha": np.array(bg.get("alpha", np.zeros(grid.sizes + (n, N, N))), complex),
            "phi": np.array(bg.get("phi", np.zeros(grid.sizes + (N, N))), complex),
            "B": np.array(bg.get("B", np.zeros(grid.sizes + (n, N, N))), complex),
        }
        for target in parts:
            idx, cols = self._design(target)
            for i, c in zip(idx, cols):
                parts[target] = parts[target] + theta[i] * c
        base = conformal_metric(grid, sigma)
        B = parts["B"]
        if self.with_spin_connection:
            B = B + spin_connection_B(base, rep, self.order)
        return build_deformation(base, rep, self.kappa, alpha=parts["alpha"], phi=parts["phi"], B=B, check=check)

    def encode(self, fields: NCFields) -> np.ndarray:
        """Least-squares projection of the fields onto the slots (exact for in-slot fields)."""
        theta = np.zeros(self.size)
        sigma = 0.5 * np.log(fields.base.g[..., 0, 0])
        data = {"sigma": sigma, "alpha": fields.alpha, "phi": fields.phi}
        B = fields.B
        if self.with_spin_connection:
            B = B - spin_connection_B(fields.base, self.rep, self.order)
        data["B"] = B
        for key in data:
            if key in self.background:
                data[key] = data[key] - self.background[key]
        groups = [("log_volume", "sigma"), ("alpha",), ("phi",), ("B",)]
        for group in groups:
            idx, cols = [], []
            for target in group:
                i, c = self._design(target)
                idx += i
                cols += c
            if not idx:
                continue
            target_data = data[group[-1]]
            A = np.stack([np.concatenate([np.real(c).ravel(), np.imag(c).ravel()]) for c in cols], axis=1)
            b = np.concatenate([np.real(target_data).ravel(), np.imag(target_data).ravel()])
            coef, *_ = np.linalg.lstsq(A, b, rcond=None)
            theta[idx] = coef
        return theta

    def feasible(self, theta) -> bool:
        lo, hi = self.bounds
        theta = np.asarray(theta, float)
        if np.any(theta < lo) or np.any(theta > hi):
            return False
        try:
            self.decode(theta)
        except (EllipticityError, NCGeomError):
            return False
        return True


def hermitian_generator(X) -> np.ndarray:
    X = np.asarray(X, complex)
    if hermiticity_defect(X) > 1e-12:
        raise InputError("generator must be Hermitian")
    return X


# ---------------------------------------------------------------- objectives


class Objective:
    """Interface used by ``extremize``: value, gradient and box bounds."""

    bounds: tuple

    def value(self, theta) -> float:
        raise NotImplementedError

    def gradient(self, theta) -> np.ndarray:
        raise NotImplementedError

    def report(self, theta) -> ActionReport | None:
        return None


@dataclass
class EHObjective(Objective):
    model: FieldModel
    G: float = 1.0
    Lam: float = 1.0
    quad: QuadratureSpec = QuadratureSpec()
    penalty_mu: float = 0.0
    fd_step: float = 1e-3
    _memo: dict = field(default_factory=dict, repr=False)

    @property
    def bounds(self) -> tuple:
        return self.model.bounds

    def report(self, theta) -> ActionReport:
        key = np.asarray(theta, float).tobytes()
        if key not in self._memo:
            fields = self.model.decode(theta)
            self._memo[key] = eh_action(fields, self.G, self.Lam, self.quad, self.penalty_mu)
        return self._memo[key]

    def value(self, theta) -> float:
        return self.report(theta).S

    def gradient(self, theta, info: dict | None = None) -> np.ndarray:
        return action_gradient(self, theta, self.fd_step, info)


@dataclass
class QuadraticObjective(Objective):
    """S = 1/2 (theta - c)^T Q (theta - c) + s0, for optimizer self-tests."""

    Q: np.ndarray
    center: np.ndarray
    s0: float = 0.0
    bounds: tuple = None

    def __post_init__(self):
        self.Q = np.asarray(self.Q, float)
        self.center = np.asarray(self.center, float)
        if self.bounds is None:
            d = len(self.center)
            self.bounds = (np.full(d, -np.inf), np.full(d, np.inf))

    def value(self, theta) -> float:
        r = np.asarray(theta, float) - self.center
        return float(0.5 * r @ self.Q @ r + self.s0)

    def gradient(self, theta) -> np.ndarray:
        return self.Q @ (np.asarray(theta, float) - self.center)


def action_gradient(objective: Objective, theta, fd_step: float = 1e-3, info: dict | None = None) -> np.ndarray:
    """Central differences per entry; one-sided next to an infeasible probe.

    Entries where neither side is evaluable are set to 0 and listed in
    ``info["boundary_limited"]``.
    """
    theta = np.asarray(theta, float)
    lo, hi = objective.bounds
    s0 = objective.value(theta)
    grad = np.zeros_like(theta)
    limited, one_sided = [], []

    def probe(t):
        if np.any(t < lo) or np.any(t > hi):
            return None
        try:
            return objective.value(t)
        except (EllipticityError, NCGeomError):
            return None

    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = fd_step
        fp, fm = probe(theta + e), probe(theta - e)
        if fp is not None and fm is not None:
            grad[i] = (fp - fm) / (2 * fd_step)
        elif fp is not None:
            grad[i] = (fp - s0) / fd_step
            one_sided.append(i)
        elif fm is not None:
            grad[i] = (s0 - fm) / fd_step
            one_sided.append(i)
        else:
            limited.append(i)
    if info is not None:
        info["boundary_limited"] = limited
        info["one_sided"] = one_sided
    return grad


# ---------------------------------------------------------------- optimizer


@dataclass(frozen=True)
class ExtremizeOptions:
    max_iters: int = 200
    tol_g: float | None = None
    armijo: float = 1e-4
    shrink: float = 0.5
    max_shrinks: int = 40
    step0: float = 1.0

    def replace(self, **kw) -> "ExtremizeOptions":
        return dataclasses.replace(self, **kw)


@dataclass
class ExtremizeResult:
    theta: np.ndarray
    S: float
    status: str
    history: list
    report: ActionReport | None = None


def _projected_step(theta, grad, lo, hi):
    return np.clip(theta - grad, lo, hi) - theta


def extremize(objective: Objective, theta0, options: ExtremizeOptions = ExtremizeOptions()) -> ExtremizeResult:
    """Projected gradient descent with Armijo backtracking inside the box bounds.

    Stops when the projected gradient is below ``tol_g`` (default 1e-6 of the
    action scale) or after ``max_iters``; raises LineSearchStall after
    ``max_shrinks`` rejected trial steps.
    """
    lo, hi = objective.bounds
    theta = np.clip(np.asarray(theta0, float), lo, hi)
    S = objective.value(theta)
    tol = options.tol_g if options.tol_g is not None else 1e-6 * max(abs(S), 1e-12)
    history = []
    status = "max_iters"
    step = options.step0

    def accept(t):
        try:
            return objective.value(t)
        except (EllipticityError, NCGeomError):
            return None

    for it in range(options.max_iters):
        g = objective.gradient(theta)
        pg = _projected_step(theta, g, lo, hi)
        gnorm = float(np.max(np.abs(pg))) if len(pg) else 0.0
        history.append({"iteration": it, "S": S, "grad_norm": gnorm, "step": step})
        if gnorm < tol:
            at_bound = np.any(np.isclose(theta, lo)) or np.any(np.isclose(theta, hi))
            status = "bound" if at_bound and np.any(np.abs(g) >= tol) else "converged"
            break
        t = min(2 * step, options.step0) if it else options.step0
        for _ in range(options.max_shrinks):
            trial = np.clip(theta - t * g, lo, hi)
            St = accept(trial)
            if St is not None and St <= S + options.armijo * float(g @ (trial - theta)):
                break
            t *= options.shrink
        else:
            raise LineSearchStall(
                f"line search stalled after {options.max_shrinks} shrinks at iteration {it}",
                {"theta": theta.tolist(), "S": S, "history": history},
            )
        theta, S, step = trial, St, t
    else:
        g = objective.gradient(theta)
        pg = _projected_step(theta, g, lo, hi)
        history.append({"iteration": options.max_iters, "S": S,
                        "grad_norm": float(np.max(np.abs(pg))) if len(pg) else 0.0, "step": step})
    report = objective.report(theta)
    if report is not None:
        report = dataclasses.replace(report, history=history, gradient=g)
    return ExtremizeResult(theta=theta, S=S, status=status, history=history, report=report)
