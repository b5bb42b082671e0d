import itertools
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from ncgeom.clifford import (
    basis_product,
    build_gamma_rep,
    clifford_expand,
    clifford_report,
    commutator_so_n_check,
    gamma_antisym,
    grade,
    involution,
    mask_of,
    parity,
    pr0,
    spin_exp,
    vector_rep,
)
from ncgeom.errors import InputError, ParityError


@pytest.mark.parametrize("n", range(1, 7))
def test_anticommutation(n):
    rep = build_gamma_rep(n)
    assert rep.N == 2 ** (n // 2)
    eye = np.eye(rep.N)
    for a, b in itertools.product(range(n), repeat=2):
        g = rep.gammas
        assert np.abs(g[a] @ g[b] + g[b] @ g[a] - 2 * (a == b) * eye).max() < 1e-14
        assert np.abs(g[a] - g[a].conj().T).max() < 1e-15


@pytest.mark.parametrize("n", [2, 4, 6])
def test_chirality_even(n):
    rep = build_gamma_rep(n)
    chi = rep.chirality
    assert np.abs(chi @ chi - np.eye(rep.N)).max() < 1e-14
    for g in rep.gammas:
        assert np.abs(chi @ g + g @ chi).max() < 1e-14
    assert abs(np.trace(chi)) < 1e-12


@pytest.mark.parametrize("n", range(1, 7))
def test_blade_basis_orthonormal(n):
    rep = build_gamma_rep(n)
    masks = rep.expansion_masks
    assert len(masks) == rep.N**2
    gram = np.array([[np.vdot(rep.blade(s), rep.blade(t)) / rep.N for t in masks] for s in masks])
    assert np.abs(gram - np.eye(len(masks))).max() < 1e-13


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_expansion_roundtrip(n, rng):
    rep = build_gamma_rep(n)
    A = rng.normal(size=(rep.N, rep.N)) + 1j * rng.normal(size=(rep.N, rep.N))
    exp = clifford_expand(rep, A)
    assert np.abs(exp.matrix() - A).max() < 1e-12
    assert exp.coeff_0 == pytest.approx(pr0(rep, A))


def test_coeff_antisymmetric_reassembly(rng):
    rep = build_gamma_rep(4)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    exp = clifford_expand(rep, A)
    total = exp.coeff(0) * np.eye(4)
    for k in range(1, 5):
        ck = exp.coeff(k)
        for idx in itertools.product(range(4), repeat=k):
            if ck[idx] != 0:
                total = total + ck[idx] * gamma_antisym(rep, [i + 1 for i in idx]) / math.factorial(k)
    assert np.abs(total - A).max() < 1e-12
    c2 = exp.coeff(2)
    assert np.abs(c2 + c2.T).max() == 0


@pytest.mark.parametrize("n", [2, 4])
def test_involution_signs(n):
    rep = build_gamma_rep(n)
    for s in range(1 << n):
        k = grade(s)
        g = rep.blade(s)
        assert np.abs(involution(rep, g, "alpha") - (-1) ** k * g).max() < 1e-13
        assert np.abs(involution(rep, g, "tau") - (-1) ** (k * (k - 1) // 2) * g).max() < 1e-13
        assert np.abs(involution(rep, g, "tau") - g.conj().T).max() < 1e-13


def test_involution_unknown():
    with pytest.raises(InputError):
        involution(build_gamma_rep(2), np.eye(2), "beta")


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(2, 6),
    data=st.data(),
)
def test_basis_product_matches_matrices(n, data):
    rep = build_gamma_rep(n)
    A = data.draw(st.lists(st.integers(1, n), unique=True, max_size=n))
    B = data.draw(st.lists(st.integers(1, n), unique=True, max_size=n))
    lhs = gamma_antisym(rep, A) @ gamma_antisym(rep, B)
    assert np.abs(basis_product(rep, A, B).matrix() - lhs).max() < 1e-12


def test_basis_product_repeated_index_vanishes():
    rep = build_gamma_rep(3)
    assert not np.any(basis_product(rep, [1, 1], [2]).blades)


def test_basis_product_index_range():
    with pytest.raises(InputError):
        basis_product(build_gamma_rep(2), [3], [1])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_so_n_relations(n):
    rep = build_gamma_rep(n)
    for idx in itertools.product(range(1, n + 1), repeat=4):
        c, a = commutator_so_n_check(rep, *idx)
        assert np.abs(c).max() < 1e-13 and np.abs(a).max() < 1e-13


antisym = st.integers(2, 5).flatmap(
    lambda n: st.lists(st.floats(-3, 3), min_size=n * n, max_size=n * n).map(
        lambda v, n=n: (n, np.reshape(v, (n, n)) - np.reshape(v, (n, n)).T)
    )
)


@settings(max_examples=60, deadline=None)
@given(antisym)
def test_double_cover(sample):
    n, theta = sample
    rep = build_gamma_rep(n)
    T = spin_exp(rep, theta)
    assert np.abs(T @ T.conj().T - np.eye(rep.N)).max() < 1e-12
    R = vector_rep(rep, T)
    assert np.abs(R - scipy.linalg.expm(theta)).max() < 1e-10
    assert np.array_equal(vector_rep(rep, -T), R)


def test_spin_exp_full_turn():
    rep = build_gamma_rep(2)
    theta = np.array([[0, 2 * np.pi], [-2 * np.pi, 0]])
    assert np.abs(spin_exp(rep, theta) + np.eye(2)).max() < 1e-12


def test_spin_exp_rejects_symmetric():
    with pytest.raises(InputError):
        spin_exp(build_gamma_rep(2), np.eye(2))


def test_parity():
    rep = build_gamma_rep(2)
    assert parity(rep, np.eye(2)) == 1
    assert parity(rep, rep.gammas[0]) == -1
    with pytest.raises(ParityError):
        parity(rep, np.eye(2) + rep.gammas[0])
    assert parity(build_gamma_rep(3), build_gamma_rep(3).gammas[0]) == 1


def test_vector_rep_of_gamma_is_reflection():
    rep = build_gamma_rep(3)
    R = vector_rep(rep, rep.gammas[0], eps=-1)
    assert np.allclose(R, np.diag([-1.0, 1.0, 1.0]))


def test_vector_rep_singular():
    rep = build_gamma_rep(2)
    with pytest.raises(InputError):
        vector_rep(rep, np.zeros((2, 2)))


def test_report_census():
    out = clifford_report(3)
    assert out["basis_total"] == 8
    assert out["basis_census"] == {"0": 1, "1": 3, "2": 3, "3": 1}
    assert max(out["residuals"].values()) < 1e-12


def test_mask_roundtrip():
    assert mask_of([0, 2]) == 5
    with pytest.raises(InputError):
        build_gamma_rep(0)
