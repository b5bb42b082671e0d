import numpy as np
import pytest

from conftest import conformal_fields, deformed_fields
from ncgeom.clifford import build_gamma_rep
from ncgeom.errors import InputError
from ncgeom.fields import build_deformation, gauge_curvature
from ncgeom.forms import (
    MatrixPForm,
    a_inverse_vs_b,
    coderivative_dtilde,
    covariant_D,
    curvature_action,
    dtilde_via_epsilon,
    exterior_d,
    inner_product_pforms,
    inverse_b,
    map_A,
    map_A_inverse,
    random_form,
    star,
    star_adjointness,
    star_tilde,
)
from ncgeom.grid import TorusGrid
from ncgeom.riemann import flat_metric


def _random_hermitian(rng, shape, N):
    A = rng.normal(size=shape + (N, N)) + 1j * rng.normal(size=shape + (N, N))
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def fields3(kappa=0.15, seed=7, size=6):
    rng = np.random.default_rng(seed)
    grid = TorusGrid.uniform(3, size)
    rep = build_gamma_rep(3)
    # smooth random alpha: a few low Fourier modes with Hermitian coefficients
    x = grid.coords()
    alpha = np.zeros(grid.sizes + (3, rep.N, rep.N), complex)
    for mu in range(3):
        for k in range(3):
            H = _random_hermitian(rng, (), rep.N)
            alpha[..., mu, :, :] += np.cos(2 * np.pi * x[k] + k)[..., None, None] * H
    phi = 0.5 * _random_hermitian(rng, (), rep.N)
    return build_deformation(flat_metric(grid), rep, kappa, alpha=alpha, phi=phi)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_star_then_star_tilde(p, rng):
    f = deformed_fields(8, 0.1)
    psi = random_form(f.grid, p, 2, rng)
    back = star_tilde(f, star(f, psi))
    sign = (-1) ** (p * (2 - p))
    assert np.abs(back.values - sign * psi.values).max() < 1e-11 * np.abs(psi.values).max()
    assert back.weight == psi.weight and back.p == p


@pytest.mark.parametrize("p", [0, 1])
def test_d_squared_vanishes(p, rng):
    grid = TorusGrid.uniform(3, 8)
    form = random_form(grid, p, 2, rng)
    assert np.abs(exterior_d(exterior_d(form)).values).max() < 1e-9
    contra = random_form(grid, p + 2, 2, rng, variance="contra", weight=1.0)
    assert np.abs(coderivative_dtilde(coderivative_dtilde(contra)).values).max() < 1e-9


@pytest.mark.parametrize("p", [1, 2, 3])
def test_dtilde_two_routes(p, rng):
    grid = TorusGrid.uniform(3, 8)
    form = random_form(grid, p, 2, rng, variance="contra", weight=1.0)
    a, b = coderivative_dtilde(form), dtilde_via_epsilon(form)
    assert (a.p, a.variance, a.weight) == (b.p, b.variance, b.weight)
    assert np.abs(a.values - b.values).max() < 1e-10 * np.abs(a.values).max()


def test_weight_and_variance_checked(rng):
    grid = TorusGrid.uniform(2, 8)
    with pytest.raises(InputError):
        exterior_d(random_form(grid, 1, 2, rng, weight=0.5))
    with pytest.raises(InputError):
        coderivative_dtilde(random_form(grid, 1, 2, rng))
    with pytest.raises(InputError):
        MatrixPForm(grid, 3, "co", 0.0, np.zeros((8, 8, 1, 2, 2)))


@pytest.mark.parametrize("p", [1, 2])
def test_map_A_roundtrip(p, rng):
    f = fields3()
    psi = random_form(f.grid, p, f.N, rng)
    back = map_A_inverse(f, map_A(f, psi))
    assert np.abs(back.values - psi.values).max() < 1e-10


def test_a_inverse_differs_from_b_noncommutative():
    assert a_inverse_vs_b(fields3(0.15), 2) > 1e-4
    assert a_inverse_vs_b(fields3(0.0), 2) < 1e-12
    assert a_inverse_vs_b(fields3(0.15), 1) < 1e-10


def test_b_is_two_sided_inverse_not_symmetric():
    f = fields3(0.15)
    b = inverse_b(f.a)
    ab = np.einsum("...mnij,...nljk->...mlik", f.a, b)
    ba = np.einsum("...mnij,...nljk->...mlik", b, f.a)
    delta = np.eye(3)[:, :, None, None] * np.eye(f.N)
    assert np.abs(ab - delta).max() < 1e-12
    assert np.abs(ba - delta).max() < 1e-12
    assert np.abs(f.a - np.swapaxes(f.a, -3, -4)).max() < 1e-14
    assert np.abs(b - np.swapaxes(b, -3, -4)).max() > 1e-4


@pytest.mark.parametrize("p", [0, 1, 2])
def test_inner_product_hermitian_positive(p, rng):
    f = fields3(0.15)
    psi, phi = random_form(f.grid, p, f.N, rng), random_form(f.grid, p, f.N, rng)
    l1, t1 = inner_product_pforms(f, psi, phi)
    l2, t2 = inner_product_pforms(f, phi, psi)
    assert abs(t1 - np.conj(t2)) < 1e-12 * abs(t1)
    local, total = inner_product_pforms(f, psi, psi)
    assert np.abs(local.imag).max() < 1e-12 * np.abs(local).max()
    assert local.real.min() > 0 and total.real > 0


def test_star_adjointness_commutative_sign(rng):
    f = conformal_fields(8)
    res = star_adjointness(f, 1, rng)
    assert res["minus"] < 1e-12
    res0 = star_adjointness(f, 0, rng)
    assert res0["plus"] < 1e-12


def test_star_adjointness_fails_noncommutative(rng):
    res = star_adjointness(deformed_fields(8, 0.15), 1, rng)
    assert min(res.values()) > 1e-6


def _half_density_zero_form(f, rng):
    x, y = f.grid.coords()
    vals = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * (x + y))], -1)[..., None, :, None]
    vals = vals * np.ones((1, 1, 1, 1, 2))
    return MatrixPForm(f.grid, 0, "co", 0.5, vals.astype(complex))


def test_D_squared_curvature_constant_B(rng):
    grid = TorusGrid.uniform(2, 8)
    rep = build_gamma_rep(2)
    B = np.zeros(grid.sizes + (2, 2, 2), complex)
    B[..., 0, :, :] = 0.8j * rep.gammas[0]
    B[..., 1, :, :] = 0.5j * rep.gammas[1]
    f = build_deformation(flat_metric(grid), rep, 0.1, alpha=0.3 * np.eye(2), phi=0.4 * rep.gammas[1], B=B)
    psi = _half_density_zero_form(f, rng)
    lhs = covariant_D(f, covariant_D(f, psi))
    rhs = curvature_action(f, gauge_curvature(f), psi)
    assert np.abs(rhs.values).max() > 0.1
    assert np.abs(lhs.values - rhs.values).max() < 1e-11


def test_D_squared_curvature_converges(rng):
    errs = []
    for size in (32, 64):
        f = deformed_fields(size, 0.1)
        psi = _half_density_zero_form(f, rng)
        lhs = covariant_D(f, covariant_D(f, psi))
        rhs = curvature_action(f, gauge_curvature(f), psi)
        errs.append(np.abs(lhs.values - rhs.values).max())
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 10
