"""Acceptance criteria 1-12; each test records one pass/fail line for the terminal summary."""
import copy
import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

from conftest import ACCEPTANCE_LINES
from ncgeom.action import QuadraticObjective, eh_action, ExtremizeOptions, extremize
from ncgeom.cli import default_options, emit, run_command
from ncgeom.clifford import basis_product, build_gamma_rep, gamma_antisym, grade, involution, spin_exp, vector_rep
from ncgeom.config import RunConfig, load_config
from ncgeom.fields import build_deformation, gauge_transform, random_smooth_unitary
from ncgeom.finsler import finsler_identity_table, sample_points
from ncgeom.forms import coderivative_dtilde, dtilde_via_epsilon, exterior_d, random_form, star, star_tilde
from ncgeom.grid import TorusGrid
from ncgeom.heat import (
    QuadratureSpec,
    duhamel1,
    duhamel1_quadrature,
    duhamel2,
    duhamel2_quadrature,
    global_invariants,
)
from ncgeom.operators import adjointness_residual, dirac_spectra, paired_nonzero_spectra
from ncgeom.riemann import flat_metric, flat_torus_spectrum, heat_trace, index_supertrace, scalar_curvature

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
CANONICAL = {}

SIGMA_TERMS = [{"k": [1, -1], "trig": "cos", "amp": 0.025}, {"k": [1, 1], "trig": "cos", "amp": -0.025}]


def record(k: int, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def conformal_config(size: int, density: str, with_a1: bool) -> RunConfig:
    return RunConfig.from_dict({
        "manifold": {"n": 2, "sizes": [size, size]},
        "base_metric": {"kind": "conformal", "sigma": SIGMA_TERMS},
        "quadrature": {"hermite_order": 24, "tau_order": 16},
        "command_params": {"invariants": {"density": density, "with_a1": with_a1}},
    })


def density_from_table(report, N: int = 2) -> np.ndarray:
    table = report.payload["table"]
    rows = np.array(table["rows"], float)
    n = sum(1 for h in table["header"] if h.startswith("x"))
    vals = rows[:, n:].reshape(len(rows), N, N, 2)
    return vals[..., 0] + 1j * vals[..., 1]


def fresh_bytes(cfg: RunConfig, command: str = "invariants") -> bytes:
    return emit(run_command(cfg, command, default_options(), use_cache=False))


# ---------------------------------------------------------------- 1, 2


def test_criterion_01_clifford_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in range(2, 7):
        rep = build_gamma_rep(n)
        g, eye = rep.gammas, np.eye(rep.N)
        for a, b in itertools.product(range(n), repeat=2):
            worst = max(worst, np.abs(g[a] @ g[b] + g[b] @ g[a] - 2 * (a == b) * eye).max())
        masks = rep.expansion_masks
        gram = np.array([[np.vdot(rep.blade(s), rep.blade(t)) / rep.N for t in masks] for s in masks])
        worst = max(worst, np.abs(gram - np.eye(len(masks))).max())
        for s in masks:
            k, bl = grade(s), rep.blade(s)
            worst = max(worst, np.abs(involution(rep, bl, "alpha") - (-1) ** k * bl).max())
            worst = max(worst, np.abs(involution(rep, bl, "tau") - (-1) ** (k * (k - 1) // 2) * bl).max())
    for _ in range(200):
        n = int(rng.integers(2, 7))
        rep = build_gamma_rep(n)
        A = list(rng.permutation(np.arange(1, n + 1))[: rng.integers(0, n + 1)])
        B = list(rng.permutation(np.arange(1, n + 1))[: rng.integers(0, n + 1)])
        lhs = gamma_antisym(rep, A) @ gamma_antisym(rep, B)
        worst = max(worst, np.abs(basis_product(rep, A, B).matrix() - lhs).max())
    dt = time.perf_counter() - t0
    record(1, worst < 1e-12 and dt < 10, f"max residual {worst:.2e}, {dt:.1f} s")


def test_criterion_02_double_cover():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst, exact = 0.0, True
    for n in (2, 3, 4, 5):
        rep = build_gamma_rep(n)
        for _ in range(100):
            A = rng.normal(size=(n, n))
            theta = A - A.T
            T = spin_exp(rep, theta)
            R = vector_rep(rep, T)
            worst = max(worst, np.abs(R - scipy.linalg.expm(theta)).max())
            exact &= bool(np.array_equal(vector_rep(rep, -T), R))
    turn = spin_exp(build_gamma_rep(2), np.array([[0, 2 * np.pi], [-2 * np.pi, 0]]))
    turn_err = np.abs(turn + np.eye(2)).max()
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and exact and turn_err < 1e-12 and dt < 30
    record(2, ok, f"max |R - exp| {worst:.2e}, sign-exact {exact}, full turn {turn_err:.1e}, {dt:.1f} s")


# ---------------------------------------------------------------- 3, 4, 5, 6


def test_criterion_03_flat_heat_trace():
    t0 = time.perf_counter()
    spec = flat_torus_spectrum((1.0, 1.0), 2, 40)
    err = abs(4 * np.pi * 0.01 * heat_trace(spec, 0.01) - 2)
    st = [index_supertrace(spec, t) for t in np.linspace(0.01, 0.1, 10)]
    drift = max(abs(s) for s in st)
    dt = time.perf_counter() - t0
    record(3, err < 1e-8 and drift < 1e-8 and dt < 5, f"|4 pi t Tr - 2| {err:.2e}, supertrace max {drift:.1e}, {dt:.2f} s")


def test_criterion_04_commutative_a0():
    t0 = time.perf_counter()
    cfg = conformal_config(64, "a0", False)
    rep = run_command(cfg, "invariants", default_options(), use_cache=False)
    CANONICAL[4] = emit(rep)
    a0 = density_from_table(rep)
    sqrt_g = cfg.fields.base.sqrt_g.ravel()
    pointwise = np.abs(a0 - sqrt_g[:, None, None] * np.eye(2)).max() / sqrt_g.min()
    A0_exact = 2 * cfg.grid.integrate(cfg.fields.base.sqrt_g)
    glob = abs(rep.payload["A0"] - A0_exact) / A0_exact
    dt = time.perf_counter() - t0
    record(4, pointwise < 1e-8 and glob < 1e-8 and dt < 120, f"pointwise rel {pointwise:.2e}, A0 rel {glob:.2e}, {dt:.1f} s")


def _a1_error(size):
    cfg = conformal_config(size, "a1", True)
    rep = run_command(cfg, "invariants", default_options(), use_cache=False)
    a1 = density_from_table(rep)
    base = cfg.fields.base
    R = scalar_curvature(base).ravel()
    expect = -(R * base.sqrt_g.ravel()) / 12
    mask = np.abs(R) > 0.1 * np.abs(R).max()
    diff = np.abs(a1 - expect[:, None, None] * np.eye(2)).max(axis=(1, 2))
    return float((diff[mask] / np.abs(expect[mask])).max()), rep


def test_criterion_05_commutative_a1():
    t0 = time.perf_counter()
    e32, _ = _a1_error(32)
    e64, rep = _a1_error(64)
    CANONICAL[5] = emit(rep)
    A1 = rep.payload["A1"]
    factor = e32 / e64
    dt = time.perf_counter() - t0
    ok = e64 < 1e-3 and abs(A1) < 1e-4 and factor >= 8 and dt < 900
    record(5, ok, f"rel err 32^2 {e32:.2e}, 64^2 {e64:.2e}, factor {factor:.1f}, A1 {A1:.1e}, {dt:.0f} s")


def test_criterion_06_duhamel_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(2, 9))
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        H = 0.5 * (A + A.conj().T)
        if i % 3 == 0:
            w, V = np.linalg.eigh(H)
            w = np.round(w)  # repeated eigenvalues
            H = (V * w) @ V.conj().T
        M = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        N = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        worst = max(worst, np.abs(duhamel1(H, M) - duhamel1_quadrature(H, M)).max(),
                    np.abs(duhamel2(H, M, N) - duhamel2_quadrature(H, M, N)).max())
    dt = time.perf_counter() - t0
    record(6, worst < 1e-10 and dt < 10, f"max deviation {worst:.2e}, {dt:.1f} s")


# ---------------------------------------------------------------- 7, 8


def test_criterion_07_gauge_invariance():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "deformed.json")
    CANONICAL[7] = fresh_bytes(cfg)
    f = cfg.fields
    assert f.kappa == pytest.approx(0.05)
    base = global_invariants(f, quad=cfg.quadrature)
    spec = dirac_spectra(f)["DbarD"]
    rng = np.random.default_rng(7)
    d0 = d1 = ds = 0.0
    for _ in range(5):
        g = gauge_transform(f, random_smooth_unitary(f.grid, f.N, rng))
        inv = global_invariants(g, quad=cfg.quadrature)
        d0 = max(d0, abs(inv.A0 - base.A0) / abs(base.A0))
        d1 = max(d1, abs(inv.A1 - base.A1) / abs(base.A1))
        ds = max(ds, np.abs(dirac_spectra(g)["DbarD"] - spec).max())
    dt = time.perf_counter() - t0
    ok = d0 < 1e-6 and d1 < 1e-6 and ds < 1e-9 and dt < 600
    record(7, ok, f"A0 rel {d0:.1e}, A1 rel {d1:.1e}, spectra {ds:.1e}, {dt:.0f} s")


def test_criterion_08_adjointness_pairing():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    adj = 0.0
    for path in sorted(CONFIGS.glob("*.json")):
        if path.name == "bad.json":
            continue
        adj = max(adj, adjointness_residual(load_config(path).fields, rng))
    raw = json.loads((CONFIGS / "deformed.json").read_text())
    pair = 0.0
    for kappa in (0.02, 0.05, 0.1):
        data = copy.deepcopy(raw)
        data["deformation"]["kappa"] = kappa
        f = RunConfig.from_dict(data).fields
        adj = max(adj, adjointness_residual(f, rng))
        spec = dirac_spectra(f)
        pair = max(pair, paired_nonzero_spectra(spec["DbarD"], spec["DDbar"], (2 * np.pi) ** 2))
    dt = time.perf_counter() - t0
    ok = adj < 1e-11 and pair < 1e-8 and dt < 300
    record(8, ok, f"adjointness {adj:.1e}, pairing {pair:.1e}, {dt:.1f} s")


# ---------------------------------------------------------------- 9, 10, 11


def _fields_n(n, rng):
    grid = TorusGrid.uniform(n, 8)
    rep = build_gamma_rep(n)
    x = grid.coords()
    alpha = np.zeros(grid.sizes + (n, rep.N, rep.N), complex)
    for mu in range(n):
        A = rng.normal(size=(rep.N, rep.N)) + 1j * rng.normal(size=(rep.N, rep.N))
        alpha[..., mu, :, :] = np.cos(2 * np.pi * x[mu])[..., None, None] * 0.5 * (A + A.conj().T)
    A = rng.normal(size=(rep.N, rep.N)) + 1j * rng.normal(size=(rep.N, rep.N))
    return build_deformation(flat_metric(grid), rep, 0.1, alpha=alpha, phi=0.25 * (A + A.conj().T))


def test_criterion_09_star_exterior():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    star_err = dd = route = 0.0
    for n in (1, 2, 3):
        f = _fields_n(n, rng)
        for p in range(n + 1):
            psi = random_form(f.grid, p, f.N, rng)
            back = star_tilde(f, star(f, psi))
            star_err = max(star_err, np.abs(back.values - (-1) ** (p * (n - p)) * psi.values).max())
            if p + 2 <= n:
                dd = max(dd, np.abs(exterior_d(exterior_d(psi)).values).max())
            contra = random_form(f.grid, p, f.N, rng, variance="contra", weight=1.0)
            if p >= 2:
                dd = max(dd, np.abs(coderivative_dtilde(coderivative_dtilde(contra)).values).max())
            if p >= 1:
                route = max(route, np.abs(coderivative_dtilde(contra).values - dtilde_via_epsilon(contra).values).max())
    dt = time.perf_counter() - t0
    ok = star_err < 1e-10 and dd < 1e-12 and route < 1e-12 and dt < 30
    record(9, ok, f"star {star_err:.1e}, d^2 {dd:.1e}, d~ routes {route:.1e}, {dt:.1f} s")


def test_criterion_10_finsler_identities():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "deformed.json")
    pts = sample_points(cfg.grid, 16)
    out = finsler_identity_table(cfg.fields, 64, pts)
    worst = max(out["max_residuals"][k] for k in ("homogeneity", "h_identity", "gradient_identity", "roundtrip"))
    total = len(out["rows"]) + len(out["skipped"])
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and len(pts) == 16 and dt < 60
    record(10, ok, f"max residual {worst:.1e} over {len(out['rows'])} of {total} samples "
                   f"({len(out['skipped'])} near crossings), {dt:.1f} s")


def test_criterion_11_eh_functional():
    t0 = time.perf_counter()
    flat = build_deformation(flat_metric(TorusGrid.uniform(2, 8)), build_gamma_rep(2))
    S = eh_action(flat, G=1.0, Lam=1.0).S
    s_err = abs(S + 1 / (8 * np.pi)) * 8 * np.pi
    rng = np.random.default_rng(11)
    A = rng.normal(size=(5, 5))
    Q = A @ A.T + np.eye(5)
    center = rng.normal(size=5)
    res = extremize(QuadraticObjective(Q / np.linalg.eigvalsh(Q).max(), center), np.zeros(5),
                    ExtremizeOptions(max_iters=10000, tol_g=1e-10))
    q_err = np.abs(res.theta - center).max()
    cfg = load_config(CONFIGS / "deformed.json")
    f = cfg.fields
    x, y = f.grid.coords()
    # gradient of chi = 0.3 sin(2 pi x) + 0.2 sin(2 pi (x + y))
    c = 0.4 * np.pi * np.cos(2 * np.pi * (x + y))
    dchi = np.stack([0.6 * np.pi * np.cos(2 * np.pi * x) + c, c], -1)
    shifted = f.replace(B=f.B + 1j * dchi[..., None, None] * np.eye(f.N))
    s0 = eh_action(f, quad=cfg.quadrature).S
    shift = abs(eh_action(shifted, quad=cfg.quadrature).S - s0) / abs(s0)
    dt = time.perf_counter() - t0
    ok = s_err < 1e-6 and q_err < 1e-8 and res.status == "converged" and shift < 1e-6 and dt < 300
    record(11, ok, f"S rel {s_err:.1e}, quadratic {q_err:.1e} ({res.status}), B-shift {shift:.1e}, {dt:.1f} s")


# ---------------------------------------------------------------- 12


def test_criterion_12_determinism():
    t0 = time.perf_counter()
    runs = {
        4: conformal_config(64, "a0", False),
        5: conformal_config(64, "a1", True),
        7: load_config(CONFIGS / "deformed.json"),
    }
    same = {}
    for k, cfg in runs.items():
        first = CANONICAL.get(k) or fresh_bytes(cfg)
        same[k] = first == fresh_bytes(cfg)
    dt = time.perf_counter() - t0
    record(12, all(same.values()), "byte-identical " + ", ".join(f"c{k}={v}" for k, v in same.items()) + f", {dt:.0f} s")
