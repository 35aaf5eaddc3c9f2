"""Eigenpairs, covariance spectra, series summation, discrete eigensystems."""

import numpy as np
import pytest

from sacfem import fem
from sacfem.spectral import (
    CovarianceSpec,
    DivergenceError,
    SpectralOperator,
    discrete_eigendecomposition,
    discrete_semigroup_apply,
    eigenfunction_values,
    eigenvalue,
    eigenvalues,
    exact_semigroup_apply,
    hs_norm_sq,
)


def _quad_rule(order=512):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def test_eigenvalue_closed_form():
    assert eigenvalue(1) == pytest.approx(np.pi ** 2, rel=1e-15)
    assert eigenvalue(2) == pytest.approx(4.0 * np.pi ** 2, rel=1e-15)
    assert eigenvalue(10) == pytest.approx(100.0 * np.pi ** 2, rel=1e-15)


def test_eigenvalues_strictly_increasing():
    lam = eigenvalues(200)
    assert lam[0] == pytest.approx(np.pi ** 2, rel=1e-15)
    assert np.all(np.diff(lam) > 0)


def test_eigenvalue_rejects_bad_index():
    with pytest.raises(ValueError):
        eigenvalue(0)
    with pytest.raises(ValueError):
        eigenvalue(-3)
    with pytest.raises(ValueError):
        eigenvalues(0)
    with pytest.raises(ValueError):
        eigenfunction_values(0, [0.5])


def test_eigenfunctions_orthonormal_under_quadrature():
    x, w = _quad_rule()
    vals = SpectralOperator(50).eigenfunction_matrix(x)
    gram = (vals * w[:, None]).T @ vals
    assert np.max(np.abs(gram - np.eye(50))) < 1e-10


def test_eigenfunction_values_match_matrix():
    x = np.linspace(0.0, 1.0, 17)
    mat = SpectralOperator(8).eigenfunction_matrix(x)
    for k in range(1, 9):
        np.testing.assert_allclose(eigenfunction_values(k, x), mat[:, k - 1],
                                   rtol=0, atol=1e-15)


def test_semigroup_identity_at_zero():
    coeffs = np.array([0.3, -1.2, 4.0])
    np.testing.assert_array_equal(exact_semigroup_apply(0.0, coeffs), coeffs)


def test_semigroup_single_mode_decay():
    out = exact_semigroup_apply(1.0, [1.0])
    assert out[0] == pytest.approx(5.1723186203812306e-05, rel=1e-13)


def test_semigroup_composition():
    coeffs = np.array([1.0, -0.5, 0.25, 2.0])
    once = exact_semigroup_apply(1.0, coeffs)
    twice = exact_semigroup_apply(0.5, exact_semigroup_apply(0.5, coeffs))
    np.testing.assert_allclose(twice, once, rtol=1e-14)


def test_semigroup_rejects_negative_time_and_handles_empty():
    with pytest.raises(ValueError):
        exact_semigroup_apply(-0.1, [1.0])
    assert exact_semigroup_apply(1.0, np.zeros(0)).shape == (0,)


def test_covariance_mode_std():
    cov = CovarianceSpec(1.5005)
    assert cov.mode_std(1) == pytest.approx(np.pi ** -1.5005, rel=1e-15)
    np.testing.assert_allclose(cov.mode_std(np.array([1, 2, 4])),
                               (np.array([1.0, 2.0, 4.0]) * np.pi) ** -1.5005,
                               rtol=1e-15)
    with pytest.raises(ValueError):
        cov.mode_std(0)
    with pytest.raises(ValueError):
        CovarianceSpec(-0.1)


def test_covariance_admissibility_boundary():
    assert CovarianceSpec(1.5005).admissible_for(2.0)
    assert not CovarianceSpec(1.5).admissible_for(2.0)
    assert CovarianceSpec(0.5005).admissible_for(1.0)
    assert not CovarianceSpec(0.5).admissible_for(1.0)


def test_covariance_gamma():
    assert CovarianceSpec(0.5005).gamma == pytest.approx(1.0005, rel=1e-15)
    assert CovarianceSpec(1.5005).gamma == 2.0
    assert CovarianceSpec(7.0).gamma == 2.0


def test_hs_norm_smooth_noise_value():
    # sum_k (k pi)^(-3.001) = pi^-3.001 * zeta(3.001)
    value = hs_norm_sq(1.0, CovarianceSpec(1.5005), rel_tol=1e-9)
    assert value == pytest.approx(0.038717447195277448, rel=1e-9)


def test_hs_norm_rough_noise_value():
    # exponent -1.001: slowly convergent, = pi^-1.001 * zeta(1.001)
    value = hs_norm_sq(1.0, CovarianceSpec(0.5005), rel_tol=1e-9)
    assert value == pytest.approx(318.12926221997206, rel=1e-9)


def test_hs_norm_same_exponent_same_sum():
    rough = hs_norm_sq(1.0, CovarianceSpec(0.5005), rel_tol=1e-7)
    smooth_gamma2 = hs_norm_sq(2.0, CovarianceSpec(1.5005), rel_tol=1e-7)
    assert smooth_gamma2 == pytest.approx(rough, rel=1e-12)


def test_hs_norm_intermediate_gamma():
    value = hs_norm_sq(1.5, CovarianceSpec(1.5005), rel_tol=1e-9)
    assert value == pytest.approx(0.16638120325378598, rel=1e-9)


def test_hs_norm_tail_strategies_agree():
    for s in (1.5005, 0.5005):
        cov = CovarianceSpec(s)
        lo = hs_norm_sq(1.0, cov, rel_tol=1e-6, tail="lower")
        hi = hs_norm_sq(1.0, cov, rel_tol=1e-6, tail="upper")
        mid = hs_norm_sq(1.0, cov, rel_tol=1e-6, tail="midpoint")
        assert 0 < hi - lo <= 1e-6 * lo
        assert lo <= mid <= hi


def test_hs_norm_monotone_in_s():
    assert (hs_norm_sq(1.0, CovarianceSpec(0.8))
            > hs_norm_sq(1.0, CovarianceSpec(1.2))
            > hs_norm_sq(1.0, CovarianceSpec(2.0)))


def test_hs_norm_divergence():
    with pytest.raises(DivergenceError):
        hs_norm_sq(2.0, CovarianceSpec(1.0))
    with pytest.raises(DivergenceError):
        hs_norm_sq(1.5, CovarianceSpec(1.0))
    with pytest.raises(DivergenceError):
        hs_norm_sq(1.0, CovarianceSpec(0.5))


def test_hs_norm_input_validation():
    cov = CovarianceSpec(1.5005)
    with pytest.raises(ValueError):
        hs_norm_sq(0.9, cov)
    with pytest.raises(ValueError):
        hs_norm_sq(2.1, cov)
    with pytest.raises(ValueError):
        hs_norm_sq(1.0, cov, rel_tol=0.0)
    with pytest.raises(ValueError):
        hs_norm_sq(1.0, cov, tail="exact")


def test_discrete_eigensystem_single_node():
    # M = [1/3], S = [4] at h = 1/2, so mu = 12
    eig = discrete_eigendecomposition(fem.UniformMesh(1))
    assert eig.mu[0] == pytest.approx(12.0, rel=1e-12)


def test_discrete_eigenvalues_closed_form():
    mesh = fem.UniformMesh(3)
    eig = discrete_eigendecomposition(mesh)
    j = np.arange(1, 4, dtype=float)
    h = mesh.h
    expect = (6.0 / h ** 2) * (1 - np.cos(j * np.pi * h)) / (2 + np.cos(j * np.pi * h))
    np.testing.assert_allclose(eig.mu, expect, rtol=1e-12)


def test_discrete_eigenvectors_mass_orthonormal():
    mesh = fem.UniformMesh(17)
    eig = discrete_eigendecomposition(mesh)
    mass = fem.assemble_mass(mesh).to_dense()
    gram = eig.vectors.T @ mass @ eig.vectors
    assert np.max(np.abs(gram - np.eye(17))) < 1e-10
    assert np.all(eig.mu > 0)


def test_discrete_eigensystem_residual():
    mesh = fem.UniformMesh(31)
    eig = discrete_eigendecomposition(mesh)
    stiff = fem.assemble_stiffness(mesh)
    mass = fem.assemble_mass(mesh)
    for j in range(eig.dim):
        v = eig.vectors[:, j]
        resid = stiff.matvec(v) - eig.mu[j] * mass.matvec(v)
        assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(v)


def test_discrete_eigenvalues_converge_quadratically():
    errs = [abs(discrete_eigendecomposition(fem.UniformMesh(n)).mu[0] - np.pi ** 2)
            for n in (15, 31, 63)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.5 < coarse / fine < 4.5


def test_discrete_semigroup_identity_and_decay():
    mesh = fem.UniformMesh(9)
    eig = discrete_eigendecomposition(mesh)
    rng = np.random.default_rng(5)
    c = rng.standard_normal(9)
    np.testing.assert_allclose(discrete_semigroup_apply(eig, 0.0, c), c,
                               rtol=0, atol=1e-12)
    v = eig.vectors[:, 3]
    out = discrete_semigroup_apply(eig, 0.2, v)
    np.testing.assert_allclose(out, np.exp(-eig.mu[3] * 0.2) * v,
                               rtol=0, atol=1e-12)


def test_discrete_semigroup_composition():
    mesh = fem.UniformMesh(12)
    eig = discrete_eigendecomposition(mesh)
    c = np.sin(np.arange(12, dtype=float))
    once = discrete_semigroup_apply(eig, 0.3, c)
    twice = discrete_semigroup_apply(eig, 0.15,
                                     discrete_semigroup_apply(eig, 0.15, c))
    np.testing.assert_allclose(twice, once, rtol=0, atol=1e-12)


def test_discrete_semigroup_contracts_mass_norm():
    mesh = fem.UniformMesh(20)
    eig = discrete_eigendecomposition(mesh)
    mass = fem.assemble_mass(mesh)
    rng = np.random.default_rng(11)
    for _ in range(5):
        c = rng.standard_normal(20)
        out = discrete_semigroup_apply(eig, 0.05, c)
        assert mass.quadratic_form(out) <= mass.quadratic_form(c) * (1 + 1e-12)


def test_discrete_semigroup_validates_input():
    eig = discrete_eigendecomposition(fem.UniformMesh(4))
    with pytest.raises(ValueError):
        discrete_semigroup_apply(eig, -1.0, np.zeros(4))
    with pytest.raises(ValueError):
        discrete_semigroup_apply(eig, 1.0, np.zeros(5))


def test_spectral_operator_validates_mode_count():
    with pytest.raises(ValueError):
        SpectralOperator(0)
