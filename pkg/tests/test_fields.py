import numpy as np
import pytest

from conftest import deformed_fields
from ncgeom.clifford import build_gamma_rep
from ncgeom.errors import EllipticityError, InputError, NonPositiveEta
from ncgeom.fields import (
    build_deformation,
    check_ellipticity,
    dagger,
    eta_and_rho,
    fourier_shift,
    gauge_curvature,
    gauge_transform,
    h_tensor,
    random_smooth_unitary,
    spin_connection_B,
    symbol_H,
    symbol_H_from_a,
    transport_links,
)
from ncgeom.grid import TorusGrid, derivative
from ncgeom.riemann import MetricField, conformal_metric, flat_metric

REP2 = build_gamma_rep(2)


def _flat(size=8):
    return flat_metric(TorusGrid.uniform(2, size))


def test_fourier_shift_exact_for_band_limited():
    g = TorusGrid.uniform(1, 16)
    x = g.coords()[0]
    f = np.cos(2 * np.pi * 3 * x) + np.sin(2 * np.pi * 8 * x + 0.0)
    shifted = fourier_shift(f, 0, 0.3).real
    xs = x + 0.3 * g.spacing[0]
    assert np.abs(shifted - np.cos(2 * np.pi * 3 * xs)).max() < 1e-12


def test_links_unitary_and_constant_B():
    grid = TorusGrid.uniform(2, 8)
    B = np.zeros(grid.sizes + (2, 2, 2), complex)
    B[..., 0, :, :] = 0.7j * REP2.gammas[0]
    B[..., 1, :, :] = 0.4j * REP2.gammas[1]
    W = transport_links(grid, B)
    eye = np.eye(2)
    assert np.abs(W @ dagger(W) - eye).max() < 1e-14
    h = grid.spacing[0]
    expected = np.cos(0.7 * h) * eye + 1j * np.sin(0.7 * h) * REP2.gammas[0]
    assert np.abs(W[0] - expected).max() < 1e-14


def test_links_converge_to_path_ordered_exponential():
    """Non-commuting B: refining the substeps changes the links at fourth order."""
    f = deformed_fields(8, 0.05)
    W4 = transport_links(f.grid, f.B, 4)
    W8 = transport_links(f.grid, f.B, 8)
    W16 = transport_links(f.grid, f.B, 16)
    e1, e2 = np.abs(W4 - W16).max(), np.abs(W8 - W16).max()
    assert e1 / e2 > 10


def test_h_tensor_factor():
    rng = np.random.default_rng(3)
    m = _flat()
    A = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
    alpha = A + np.conj(np.swapaxes(A, -1, -2))
    for kappa in (0.1, 0.3):
        f = build_deformation(m, REP2, kappa, alpha=alpha)
        a_def = f.a - np.eye(2)[:, :, None, None] * np.eye(2)
        assert np.abs(a_def - kappa * h_tensor(m, REP2, alpha, kappa)).max() < 1e-13


def test_symbol_from_a_matches_square():
    f = deformed_fields(8, 0.2)
    xi = np.array([0.3, -1.1])
    assert np.abs(symbol_H(f, xi) - symbol_H_from_a(f, xi)).max() < 1e-13


def test_hermiticity_validation():
    m = _flat()
    with pytest.raises(InputError):
        build_deformation(m, REP2, 0.1, phi=np.array([[0, 1], [0, 0]], complex))
    with pytest.raises(InputError):
        build_deformation(m, build_gamma_rep(3))


def test_ellipticity_error_names_point():
    m = _flat()
    alpha = np.zeros(m.grid.sizes + (2, 2, 2), complex)
    alpha[3, 5, 1] = 0.5 * REP2.gammas[0] - REP2.gammas[1]
    with pytest.raises(EllipticityError, match=r"\(3, 5\)"):
        build_deformation(m, REP2, 1.0, alpha=alpha)


def test_ellipticity_margin_commutative():
    f = build_deformation(_flat(), REP2)
    assert check_ellipticity(f) == pytest.approx(1.0)


def test_eta_commutative():
    grid = TorusGrid.uniform(2, 8)
    m = MetricField(grid, np.diag([4.0, 1.0]))
    f = build_deformation(m, REP2, rho_mode="eta")
    eta, rho = eta_and_rho(f)
    assert np.abs(eta - 0.25 * np.eye(2)).max() < 1e-14
    assert np.abs(rho - np.sqrt(2) * np.eye(2)).max() < 1e-14
    x, y = grid.coords()
    mc = conformal_metric(grid, 0.1 * np.sin(2 * np.pi * x))
    fc = build_deformation(mc, REP2, rho_mode="eta")
    assert np.abs(fc.rho - (mc.sqrt_g ** 0.5)[..., None, None] * np.eye(2)).max() < 1e-13


def test_non_positive_eta():
    m = _flat()
    alpha = np.zeros(m.grid.sizes + (2, 2, 2), complex)
    alpha[..., 1, :, :] = 0.6 * np.eye(2)
    with pytest.raises(NonPositiveEta):
        build_deformation(m, REP2, 1.0, alpha=alpha, rho_mode="eta")


def test_spin_connection_B_antihermitian():
    grid = TorusGrid.uniform(2, 16)
    x, y = grid.coords()
    m = conformal_metric(grid, 0.1 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
    B = spin_connection_B(m, REP2)
    assert np.abs(B + dagger(B)).max() < 1e-15


def test_gauge_curvature_abelian():
    grid = TorusGrid.uniform(2, 16)
    x, y = grid.coords()
    f0 = np.sin(2 * np.pi * y)
    B = np.zeros(grid.sizes + (2, 2, 2), complex)
    B[..., 0, :, :] = 1j * f0[..., None, None] * np.eye(2)
    f = build_deformation(flat_metric(grid), REP2, B=B)
    R = gauge_curvature(f)
    expected = 1j * derivative(grid, f0, 1)
    assert np.abs(R[..., 1, 0, :, :] - expected[..., None, None] * np.eye(2)).max() < 1e-13
    assert np.abs(R + np.swapaxes(R, -3, -4)).max() == 0
    assert np.abs(R + dagger(R)).max() < 1e-13
    assert np.abs(gauge_curvature(build_deformation(flat_metric(grid), REP2))).max() == 0


def test_gauge_transform_identity_and_constant():
    f = deformed_fields(8, 0.05)
    same = gauge_transform(f, np.eye(2))
    assert np.abs(same.B - f.B).max() < 1e-15
    assert np.abs(same.plain_links - f.plain_links).max() < 1e-15
    theta = 0.7
    U = np.cos(theta) * np.eye(2) + 1j * np.sin(theta) * REP2.gammas[0]
    g = gauge_transform(f, U)
    assert np.abs(g.B - U @ f.B @ U.conj().T).max() < 1e-14
    assert np.abs(g.Gamma - U @ f.Gamma @ U.conj().T).max() < 1e-14
    R, Rg = gauge_curvature(f), gauge_curvature(g)
    assert np.abs(Rg - U @ R @ U.conj().T).max() < 1e-12


def test_gauge_curvature_covariance_converges():
    """R' = U R U^-1 holds to stencil order for a smooth U(x) (no discrete Leibniz rule)."""
    errs = []
    for size in (32, 64):
        f = deformed_fields(size, 0.05)
        rng = np.random.default_rng(5)
        U = random_smooth_unitary(f.grid, 2, rng)
        g = gauge_transform(f, U)
        Uc = U[..., None, None, :, :]
        diff = gauge_curvature(g) - Uc @ gauge_curvature(f) @ dagger(Uc)
        errs.append(np.abs(diff).max())
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 10


def test_gauge_transform_rejects_non_unitary():
    with pytest.raises(InputError):
        gauge_transform(deformed_fields(8), 2 * np.eye(2))
