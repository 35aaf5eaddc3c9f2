"""Element space: assembly, projection, nonlinear terms, prolongation, norms."""

import numpy as np
import pytest

from sacfem import fem
from sacfem.fem import FemFunction, TridiagonalMatrix, UniformMesh


def _interpolant(coeffs, mesh):
    """Independent piecewise-linear evaluator (np.interp, not library code)."""
    xs = np.concatenate(([0.0], mesh.nodes, [1.0]))
    ys = np.concatenate(([0.0], np.asarray(coeffs, dtype=float), [0.0]))
    return lambda x: np.interp(x, xs, ys)


def _hat(j, mesh):
    center = mesh.nodes[j - 1]
    return lambda x: np.maximum(0.0, 1.0 - np.abs(x - center) / mesh.h)


def _element_quad(func, mesh, order=16):
    """Integrate over (0,1) with per-element Gauss so kinks stay on edges."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    h = mesh.h
    total = 0.0
    for e in range(mesh.interior_count + 1):
        total += h * np.dot(w, func(e * h + x * h))
    return total


def _simpson_per_element(func, mesh, pieces=256):
    h = mesh.h
    total = 0.0
    for e in range(mesh.interior_count + 1):
        x = np.linspace(e * h, (e + 1) * h, 2 * pieces + 1)
        y = func(x)
        total += h / (6.0 * pieces) * (y[0] + y[-1] + 4.0 * y[1::2].sum()
                                       + 2.0 * y[2:-1:2].sum())
    return total


def test_mesh_geometry():
    mesh = UniformMesh(3)
    assert mesh.h == pytest.approx(0.25, rel=1e-16)
    np.testing.assert_allclose(mesh.nodes, [0.25, 0.5, 0.75], rtol=1e-15)
    with pytest.raises(ValueError):
        UniformMesh(0)


def test_nested_meshes():
    assert fem.nested(UniformMesh(1), UniformMesh(3))
    assert fem.nested(UniformMesh(3), UniformMesh(3))
    assert not fem.nested(UniformMesh(2), UniformMesh(3))


def test_fem_function_validation():
    mesh = UniformMesh(3)
    with pytest.raises(ValueError):
        FemFunction(mesh, np.zeros(2))
    with pytest.raises(ValueError):
        FemFunction(mesh, np.array([1.0, np.nan, 0.0]))


def test_mass_matrix_entries():
    single = fem.assemble_mass(UniformMesh(1))
    assert single.main[0] == pytest.approx(1.0 / 3.0, rel=1e-15)
    four = fem.assemble_mass(UniformMesh(3))
    np.testing.assert_allclose(four.main, 1.0 / 6.0, rtol=1e-15)
    np.testing.assert_allclose(four.off, 1.0 / 24.0, rtol=1e-15)


def test_mass_matrix_interior_row_sums():
    # away from the boundary the hats partition unity, so rows sum to h
    mesh = UniformMesh(9)
    dense = fem.assemble_mass(mesh).to_dense()
    np.testing.assert_allclose(dense.sum(axis=1)[1:-1], mesh.h, rtol=1e-14)


def test_stiffness_matrix_entries():
    single = fem.assemble_stiffness(UniformMesh(1))
    assert single.main[0] == pytest.approx(4.0, rel=1e-15)
    four = fem.assemble_stiffness(UniformMesh(3))
    np.testing.assert_allclose(four.main, 8.0, rtol=1e-15)
    np.testing.assert_allclose(four.off, -4.0, rtol=1e-15)


def test_stiffness_quadratic_form_on_plateau():
    # all-ones coefficients ramp up over the first element and down over the
    # last: integral of the squared slope is 2/h
    mesh = UniformMesh(3)
    ones = np.ones(3)
    assert fem.assemble_stiffness(mesh).quadratic_form(ones) == pytest.approx(
        2.0 / mesh.h, rel=1e-14)


def test_quadratic_forms_positive_definite():
    mesh = UniformMesh(13)
    mass = fem.assemble_mass(mesh)
    stiff = fem.assemble_stiffness(mesh)
    rng = np.random.default_rng(3)
    for _ in range(10):
        c = rng.standard_normal(13)
        assert mass.quadratic_form(c) > 0
        assert stiff.quadratic_form(c) > 0


def test_tridiagonal_algebra_and_solve():
    rng = np.random.default_rng(4)
    a = TridiagonalMatrix(np.full(6, 4.0), rng.standard_normal(5) * 0.3)
    b = TridiagonalMatrix(rng.standard_normal(6) + 5.0, rng.standard_normal(5) * 0.2)
    c = rng.standard_normal(6)
    np.testing.assert_allclose((a + b).matvec(c), a.matvec(c) + b.matvec(c),
                               rtol=1e-14)
    np.testing.assert_allclose((a - b).matvec(c), a.matvec(c) - b.matvec(c),
                               rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose((2.5 * a).matvec(c), 2.5 * a.matvec(c), rtol=1e-15)
    np.testing.assert_allclose(a.to_dense() @ c, a.matvec(c), rtol=1e-14)
    x = a.solve(c)
    np.testing.assert_allclose(a.matvec(x), c, rtol=0, atol=1e-12)


def test_matvec_matches_dense_on_batches():
    mesh = UniformMesh(7)
    mass = fem.assemble_mass(mesh)
    rng = np.random.default_rng(6)
    batch = rng.standard_normal((4, 7))
    out = mass.matvec(batch)
    for i in range(4):
        np.testing.assert_array_equal(out[i], mass.matvec(batch[i]))


def test_l2_norm_matches_quadrature():
    mesh = UniformMesh(9)
    rng = np.random.default_rng(7)
    coeffs = rng.standard_normal(9)
    u = FemFunction(mesh, coeffs)
    interp = _interpolant(coeffs, mesh)
    expect = np.sqrt(_element_quad(lambda x: interp(x) ** 2, mesh))
    assert fem.l2_norm(u) == pytest.approx(expect, abs=1e-12)


def test_h1_seminorm_single_hat():
    # single hat on h = 1/2: slope +-2 on both elements, integral 4
    u = FemFunction(UniformMesh(1), np.array([1.0]))
    assert fem.l2_norm(u) == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-14)
    assert fem.h1_seminorm(u) == pytest.approx(2.0, rel=1e-14)


def test_norms_satisfy_triangle_inequality():
    mesh = UniformMesh(11)
    rng = np.random.default_rng(8)
    for _ in range(10):
        a = rng.standard_normal(11)
        b = rng.standard_normal(11)
        ua, ub = FemFunction(mesh, a), FemFunction(mesh, b)
        uab = FemFunction(mesh, a + b)
        assert fem.l2_norm(uab) <= fem.l2_norm(ua) + fem.l2_norm(ub) + 1e-13
        assert fem.h1_seminorm(uab) <= (fem.h1_seminorm(ua)
                                        + fem.h1_seminorm(ub) + 1e-13)


def test_sine_hat_inner_matches_quadrature():
    mesh = UniformMesh(5)
    inner = fem.sine_hat_inner(mesh, 8)
    for k in range(1, 9):
        for j in range(1, 6):
            phi = _hat(j, mesh)
            expect = _element_quad(
                lambda x: np.sqrt(2.0) * np.sin(k * np.pi * x) * phi(x),
                mesh, order=32)
            assert inner[j - 1, k - 1] == pytest.approx(expect, abs=1e-12)


def test_sine_hat_inner_rejects_overflow():
    with pytest.raises(ValueError):
        fem.sine_hat_inner(UniformMesh(3), fem.MODE_INDEX_CAP + 1)
    with pytest.raises(ValueError):
        fem.sine_hat_inner(UniformMesh(3), 0)


def test_l2_project_idempotent_on_members():
    mesh = UniformMesh(8)
    rng = np.random.default_rng(9)
    u = FemFunction(mesh, rng.standard_normal(8))
    again = fem.l2_project(u, mesh)
    np.testing.assert_allclose(again.coeffs, u.coeffs, rtol=0, atol=1e-12)


def test_l2_project_sine_single_node():
    # target sin(pi x) = (1/sqrt 2) e_1 on the one-node mesh: c_1 = 12/pi^2
    projected = fem.l2_project(np.array([1.0 / np.sqrt(2.0)]), UniformMesh(1))
    assert projected.coeffs[0] == pytest.approx(1.2158542037080533, rel=1e-14)


def test_l2_project_callable_polynomial():
    # f(x) = x(1-x): load b_1 = 5/48, M_11 = 1/3, so c_1 = 5/16 -- and the
    # 3-point Gauss rule is exact for this cubic integrand.
    pointwise = fem.l2_project(lambda x: x * (1.0 - x), UniformMesh(1))
    assert pointwise.coeffs[0] == pytest.approx(5.0 / 16.0, rel=1e-14)


def test_l2_project_quadratic_convergence():
    from sacfem.harness import fit_rate

    target = np.array([1.0 / np.sqrt(2.0)])  # sin(pi x)
    points = []
    for n in (7, 15, 31):
        mesh = UniformMesh(n)
        err = fem.l2_distance_to_modal(fem.l2_project(target, mesh), target)
        points.append((mesh.h, err))
    assert 1.9 < fit_rate(points).slope < 2.1


def test_l2_project_self_adjoint():
    # <P_h v, w_h> = <v, w_h> for w_h in the element space
    mesh = UniformMesh(6)
    rng = np.random.default_rng(10)
    modal = rng.standard_normal(5)
    w = rng.standard_normal(6)
    projected = fem.l2_project(modal, mesh).coeffs
    lhs = w @ fem.assemble_mass(mesh).matvec(projected)
    rhs = w @ (fem.sine_hat_inner(mesh, 5) @ modal)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_l2_project_empty_modal_is_zero():
    out = fem.l2_project(np.zeros(0), UniformMesh(4))
    np.testing.assert_array_equal(out.coeffs, np.zeros(4))


def test_nonlinear_load_zero_fixed_point():
    u = FemFunction(UniformMesh(6), np.zeros(6))
    np.testing.assert_array_equal(fem.nonlinear_load(u), np.zeros(6))


def test_nonlinear_load_single_hat():
    # int phi^2 = 1/3 and int phi^4 = 1/5 on h = 1/2, so b_1 = 2/15
    u = FemFunction(UniformMesh(1), np.array([1.0]))
    assert fem.nonlinear_load(u)[0] == pytest.approx(2.0 / 15.0, rel=1e-14)


def test_nonlinear_load_positive_below_one():
    mesh = UniformMesh(9)
    rng = np.random.default_rng(12)
    for _ in range(5):
        u = FemFunction(mesh, rng.uniform(0.05, 0.95, size=9))
        assert np.all(fem.nonlinear_load(u) > 0)


def test_nonlinear_load_matches_simpson_oracle():
    mesh = UniformMesh(5)
    rng = np.random.default_rng(13)
    for _ in range(5):
        coeffs = rng.uniform(-2.0, 2.0, size=5)
        u = FemFunction(mesh, coeffs)
        interp = _interpolant(coeffs, mesh)
        load = fem.nonlinear_load(u)
        for j in range(1, 6):
            phi = _hat(j, mesh)
            expect = _simpson_per_element(
                lambda x: (interp(x) - interp(x) ** 3) * phi(x), mesh)
            assert load[j - 1] == pytest.approx(expect, abs=1e-10)


def test_nonlinear_jacobian_at_zero_is_mass():
    mesh = UniformMesh(7)
    jac = fem.nonlinear_jacobian(FemFunction(mesh, np.zeros(7)))
    mass = fem.assemble_mass(mesh)
    np.testing.assert_allclose(jac.main, mass.main, rtol=1e-14)
    np.testing.assert_allclose(jac.off, mass.off, rtol=1e-14)


def test_nonlinear_jacobian_single_hat():
    # 1/3 - 3 * (1/5) = -4/15
    jac = fem.nonlinear_jacobian(FemFunction(UniformMesh(1), np.array([1.0])))
    assert jac.main[0] == pytest.approx(-4.0 / 15.0, rel=1e-14)


def test_nonlinear_jacobian_directional_difference():
    mesh = UniformMesh(9)
    rng = np.random.default_rng(14)
    u = rng.uniform(-1.5, 1.5, size=9)
    w = rng.standard_normal(9)
    jac = fem.nonlinear_jacobian(FemFunction(mesh, u))
    eps = 1e-6
    forward = (fem.cubic_load(u + eps * w, mesh) - fem.cubic_load(u, mesh)) / eps
    np.testing.assert_allclose(forward, jac.matvec(w), rtol=0, atol=1e-4)


def test_cubic_monotonicity_bound():
    # (c_u - c_v)^T (b(u) - b(v)) <= (c_u - c_v)^T M (c_u - c_v), i.e. C = 1
    mesh = UniformMesh(9)
    mass = fem.assemble_mass(mesh)
    rng = np.random.default_rng(15)
    for _ in range(1000):
        cu = rng.uniform(-3.0, 3.0, size=9)
        cv = rng.uniform(-3.0, 3.0, size=9)
        d = cu - cv
        lhs = d @ (fem.cubic_load(cu, mesh) - fem.cubic_load(cv, mesh))
        assert lhs <= mass.quadratic_form(d)


def test_batched_loads_match_single_bitwise():
    mesh = UniformMesh(8)
    rng = np.random.default_rng(16)
    batch = rng.uniform(-2.0, 2.0, size=(6, 8))
    stacked = fem.cubic_load(batch, mesh)
    main_b, off_b = fem.cubic_jacobian_diags(batch, mesh)
    for i in range(6):
        np.testing.assert_array_equal(stacked[i], fem.cubic_load(batch[i], mesh))
        main_s, off_s = fem.cubic_jacobian_diags(batch[i], mesh)
        np.testing.assert_array_equal(main_b[i], main_s)
        np.testing.assert_array_equal(off_b[i], off_s)
    # order and batch size must not matter either
    shuffled = fem.cubic_load(batch[::-1], mesh)
    np.testing.assert_array_equal(shuffled[::-1], stacked)


def test_prolong_identity_and_refinement():
    coarse = UniformMesh(1)
    same = fem.prolong(FemFunction(coarse, np.array([1.0])), coarse)
    np.testing.assert_array_equal(same.coeffs, [1.0])
    fine = fem.prolong(FemFunction(coarse, np.array([1.0])), UniformMesh(3))
    np.testing.assert_array_equal(fine.coeffs, [0.5, 1.0, 0.5])


def test_prolong_preserves_l2_norm():
    coarse = UniformMesh(7)
    rng = np.random.default_rng(17)
    u = FemFunction(coarse, rng.standard_normal(7))
    fine = fem.prolong(u, UniformMesh(31))
    assert fem.l2_norm(fine) == pytest.approx(fem.l2_norm(u), abs=1e-12)
    assert fem.h1_seminorm(fine) == pytest.approx(fem.h1_seminorm(u), abs=1e-12)


def test_prolong_rejects_non_nested():
    u = FemFunction(UniformMesh(2), np.ones(2))
    with pytest.raises(ValueError):
        fem.prolong(u, UniformMesh(3))


def test_prolong_batched_matches_single():
    coarse, fine = UniformMesh(3), UniformMesh(15)
    rng = np.random.default_rng(18)
    batch = rng.standard_normal((5, 3))
    stacked = fem.prolong_coeffs(batch, coarse, fine)
    for i in range(5):
        np.testing.assert_array_equal(stacked[i],
                                      fem.prolong_coeffs(batch[i], coarse, fine))


def test_modal_distance_pythagoras():
    # ||v - P_h v||^2 = ||v||^2 - ||P_h v||_M^2 for the orthogonal projection
    mesh = UniformMesh(9)
    rng = np.random.default_rng(19)
    modal = rng.standard_normal(6)
    projected = fem.l2_project(modal, mesh)
    direct = fem.l2_distance_to_modal(projected, modal) ** 2
    pythag = float(modal @ modal) - fem.assemble_mass(mesh).quadratic_form(
        projected.coeffs)
    assert direct == pytest.approx(pythag, abs=1e-12)


def test_modal_distance_empty_expansion_is_norm():
    mesh = UniformMesh(5)
    rng = np.random.default_rng(20)
    u = FemFunction(mesh, rng.standard_normal(5))
    assert fem.l2_distance_to_modal(u, np.zeros(0)) == pytest.approx(
        fem.l2_norm(u), rel=1e-14)
