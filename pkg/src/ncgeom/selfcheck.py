"""Fast internal consistency checks behind ``ncgeom selfcheck``."""
from __future__ import annotations

import numpy as np

from .clifford import clifford_report
from .errors import NCGeomError
from .heat import duhamel1, duhamel1_quadrature, duhamel2, duhamel2_quadrature
from .operators import adjointness_residual
from .riemann import flat_torus_spectrum, heat_trace, index_supertrace


def _random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return A + A.conj().T


def run_selfcheck(cfg) -> dict:
    rng = np.random.default_rng(cfg.data["seed"])
    checks = {}
    cliff = 0.0
    for n in (2, 3, 4):
        cliff = max(cliff, max(clifford_report(n, seed=cfg.data["seed"])["residuals"].values()))
    checks["clifford"] = {"residual": cliff, "tolerance": 1e-10}
    duh = 0.0
    for size in (2, 3, 5):
        H, M, N = (_random_hermitian(rng, size) for _ in range(3))
        duh = max(duh, float(np.abs(duhamel1(H, M) - duhamel1_quadrature(H, M)).max()))
        duh = max(duh, float(np.abs(duhamel2(H, M, N) - duhamel2_quadrature(H, M, N)).max()))
    checks["duhamel"] = {"residual": duh, "tolerance": 1e-10}
    spec = flat_torus_spectrum((1.0, 1.0), 2, 40)
    t = 0.01
    checks["flat_heat_trace"] = {"residual": abs(4 * np.pi * t * heat_trace(spec, t) - 2), "tolerance": 1e-8}
    checks["flat_index"] = {"residual": abs(index_supertrace(spec, t)), "tolerance": 1e-8}
    try:
        checks["adjointness"] = {"residual": adjointness_residual(cfg.fields, rng), "tolerance": 1e-11}
    except NCGeomError as exc:
        checks["adjointness"] = {"residual": float("inf"), "tolerance": 1e-11, "error": str(exc)}
    for c in checks.values():
        c["passed"] = bool(c["residual"] < c["tolerance"])
    return {"checks": checks, "all_passed": all(c["passed"] for c in checks.values())}
