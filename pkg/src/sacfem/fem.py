"""P1 finite elements on a uniform mesh of (0, 1) with Dirichlet conditions.

Provides mesh/matrix types, mass and stiffness assembly, L2 projection,
the nonlinear load and Jacobian of the cubic reaction term f(v) = v - v^3,
norms, and exact prolongation between nested meshes.

Boundary values are identically zero and boundary nodes are eliminated:
every coefficient vector has length N (interior nodes only).

The nonlinear assembly routines accept stacked coefficient arrays of shape
(..., N) and operate elementwise across the leading axes in a fixed
arithmetic order, so results for one sample do not depend on how many
others are processed alongside it.  The Monte Carlo driver relies on this
for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

# 3-point Gauss-Legendre rule on the reference element [0, 1]; exact for
# polynomials of degree <= 5, enough for the degree-4 integrands produced
# by the cubic term on P1.
_GAUSS_XI = (0.5 - np.sqrt(15.0) / 10.0, 0.5, 0.5 + np.sqrt(15.0) / 10.0)
_GAUSS_W = (5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0)

# largest accepted sine-mode index in projections (guards the closed-form
# inner products from meaningless huge-k requests)
MODE_INDEX_CAP = 2 ** 26


@dataclass(frozen=True)
class UniformMesh:
    """Uniform mesh of (0, 1) with N interior nodes and spacing h = 1/(N+1)."""

    interior_count: int

    def __post_init__(self):
        if self.interior_count < 1:
            raise ValueError(
                f"interior node count must be >= 1, got {self.interior_count}"
            )

    @property
    def h(self) -> float:
        return 1.0 / (self.interior_count + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates x_j = j*h, j = 1..N."""
        return np.arange(1, self.interior_count + 1, dtype=float) * self.h


def nested(coarse: UniformMesh, fine: UniformMesh) -> bool:
    """Whether every coarse node is a fine node: (N_f + 1) divisible by (N_c + 1)."""
    return (fine.interior_count + 1) % (coarse.interior_count + 1) == 0


@dataclass(frozen=True)
class FemFunction:
    """Piecewise linear function with nodal values `coeffs` (boundary = 0)."""

    mesh: UniformMesh
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.mesh.interior_count,):
            raise ValueError(
                f"coefficient vector has shape {coeffs.shape}, expected "
                f"({self.mesh.interior_count},)"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix stored as (main diagonal, off diagonal)."""

    main: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        main = np.asarray(self.main, dtype=float)
        off = np.asarray(self.off, dtype=float)
        if main.ndim != 1 or off.shape != (max(main.shape[0] - 1, 0),):
            raise ValueError("need diagonals of length N and N-1")
        object.__setattr__(self, "main", main)
        object.__setattr__(self, "off", off)

    @property
    def dim(self) -> int:
        return self.main.shape[0]

    def matvec(self, c: np.ndarray) -> np.ndarray:
        """Apply to `c`; accepts stacked vectors of shape (..., N)."""
        c = np.asarray(c, dtype=float)
        out = self.main * c
        if self.dim > 1:
            out[..., :-1] += self.off * c[..., 1:]
            out[..., 1:] += self.off * c[..., :-1]
        return out

    def quadratic_form(self, c: np.ndarray) -> np.ndarray:
        """Return c^T A c along the last axis of `c`."""
        prod = np.asarray(c) * self.matvec(c)
        return prod.sum(axis=-1)

    def to_banded(self) -> np.ndarray:
        """LAPACK upper-banded storage (2, N) for the banded solvers."""
        ab = np.zeros((2, self.dim))
        ab[0, 1:] = self.off
        ab[1] = self.main
        return ab

    def to_dense(self) -> np.ndarray:
        dense = np.diag(self.main)
        if self.dim > 1:
            dense += np.diag(self.off, 1) + np.diag(self.off, -1)
        return dense

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs (A symmetric positive definite)."""
        if self.dim == 1:  # LAPACK's banded path rejects 1x1 systems
            return np.asarray(rhs, dtype=float) / self.main[0]
        return scipy.linalg.solveh_banded(self.to_banded(), rhs,
                                          check_finite=False)

    def __add__(self, other: "TridiagonalMatrix") -> "TridiagonalMatrix":
        return TridiagonalMatrix(self.main + other.main, self.off + other.off)

    def __sub__(self, other: "TridiagonalMatrix") -> "TridiagonalMatrix":
        return TridiagonalMatrix(self.main - other.main, self.off - other.off)

    def __rmul__(self, scalar: float) -> "TridiagonalMatrix":
        return TridiagonalMatrix(scalar * self.main, scalar * self.off)


def assemble_mass(mesh: UniformMesh) -> TridiagonalMatrix:
    """Mass matrix: rows (h/6) * [1, 4, 1]."""
    n, h = mesh.interior_count, mesh.h
    return TridiagonalMatrix(np.full(n, 4.0 * h / 6.0),
                             np.full(max(n - 1, 0), h / 6.0))


def assemble_stiffness(mesh: UniformMesh) -> TridiagonalMatrix:
    """Stiffness matrix: rows (1/h) * [-1, 2, -1]."""
    n, h = mesh.interior_count, mesh.h
    return TridiagonalMatrix(np.full(n, 2.0 / h),
                             np.full(max(n - 1, 0), -1.0 / h))


def sine_hat_inner(mesh: UniformMesh, mode_count: int) -> np.ndarray:
    """Exact inner products B[j, k] = <e_{k+1}, phi_{j+1}> as an (N, K) matrix.

    Closed form: <e_k, phi_j> = sqrt(2) * (4 / (k^2 pi^2 h)) * sin(k pi h / 2)^2
    * sin(k pi x_j).  Used to project sine expansions (noise increments,
    initial data) onto the element space without quadrature.
    """
    if mode_count < 1:
        raise ValueError(f"mode count must be >= 1, got {mode_count}")
    if mode_count > MODE_INDEX_CAP:
        raise ValueError(
            f"mode count {mode_count} exceeds the supported cap {MODE_INDEX_CAP}"
        )
    h = mesh.h
    k = np.arange(1, mode_count + 1, dtype=float)
    amp = np.sqrt(2.0) * (4.0 / (k ** 2 * np.pi ** 2 * h)) * np.sin(k * np.pi * h / 2.0) ** 2
    return amp * np.sin(np.outer(mesh.nodes, k) * np.pi)


def _padded(coeffs: np.ndarray) -> np.ndarray:
    """Append the zero boundary values: (..., N) -> (..., N+2)."""
    shape = coeffs.shape[:-1] + (coeffs.shape[-1] + 2,)
    full = np.zeros(shape, dtype=float)
    full[..., 1:-1] = coeffs
    return full


def _element_values(coeffs: np.ndarray):
    """Left/right nodal values per element: two arrays of shape (..., N+1)."""
    full = _padded(np.asarray(coeffs, dtype=float))
    return full[..., :-1], full[..., 1:]


def cubic_load(coeffs: np.ndarray, mesh: UniformMesh) -> np.ndarray:
    """Load vector b_j = integral of (u - u^3) phi_j for stacked coefficients.

    3-point Gauss per element, exact for the degree-4 integrand.  The Gauss
    points are accumulated in a fixed order so results are elementwise
    reproducible for any stacking of the leading axes.
    """
    h = mesh.h
    left, right = _element_values(coeffs)
    to_left = None
    to_right = None
    for xi, w in zip(_GAUSS_XI, _GAUSS_W):
        u = left + xi * (right - left)
        f = u - u ** 3
        cl = (h * w * (1.0 - xi)) * f
        cr = (h * w * xi) * f
        if to_left is None:
            to_left, to_right = cl, cr
        else:
            to_left += cl
            to_right += cr
    return to_left[..., 1:] + to_right[..., :-1]


def nonlinear_load(u: FemFunction) -> np.ndarray:
    """Load vector of the cubic reaction term for a single FemFunction."""
    return cubic_load(u.coeffs, u.mesh)


def cubic_jacobian_diags(coeffs: np.ndarray, mesh: UniformMesh):
    """Diagonals of J_ij = integral of (1 - 3u^2) phi_i phi_j, stacked.

    Returns (main, off) with shapes (..., N) and (..., N-1); same Gauss
    rule and ordering guarantees as `cubic_load`.
    """
    h = mesh.h
    left, right = _element_values(coeffs)
    ll = None
    rr = None
    lr = None
    for xi, w in zip(_GAUSS_XI, _GAUSS_W):
        u = left + xi * (right - left)
        fp = 1.0 - 3.0 * u ** 2
        a = (h * w * (1.0 - xi) ** 2) * fp
        b = (h * w * xi ** 2) * fp
        c = (h * w * xi * (1.0 - xi)) * fp
        if ll is None:
            ll, rr, lr = a, b, c
        else:
            ll += a
            rr += b
            lr += c
    main = rr[..., :-1] + ll[..., 1:]
    off = lr[..., 1:-1]
    return main, off


def nonlinear_jacobian(u: FemFunction) -> TridiagonalMatrix:
    """Jacobian of `nonlinear_load` at `u` as a symmetric tridiagonal matrix."""
    main, off = cubic_jacobian_diags(u.coeffs, u.mesh)
    return TridiagonalMatrix(main, off)


def l2_project(target, mesh: UniformMesh) -> FemFunction:
    """L2 projection onto the element space: solves M c = g, g_j = <target, phi_j>.

    `target` may be a vector of sine-modal coefficients (expansion in e_k),
    a FemFunction (any mesh), or a callable evaluated pointwise.  Modal
    targets use the exact closed-form inner products; callables are
    integrated per element with the 3-point Gauss rule (exact whenever the
    integrand is piecewise cubic or smoother on the elements, e.g. for
    FemFunction targets on the same mesh).
    """
    if isinstance(target, FemFunction):
        def evaluate(x):
            return _eval_piecewise(target, x)
        g = _pointwise_load(evaluate, mesh)
    elif callable(target):
        g = _pointwise_load(target, mesh)
    else:
        a = np.atleast_1d(np.asarray(target, dtype=float))
        if a.ndim != 1:
            raise ValueError("modal coefficients must form a vector")
        if a.size == 0:
            return FemFunction(mesh, np.zeros(mesh.interior_count))
        g = sine_hat_inner(mesh, a.shape[0]) @ a
    mass = assemble_mass(mesh)
    return FemFunction(mesh, mass.solve(g))


def _pointwise_load(func, mesh: UniformMesh) -> np.ndarray:
    """g_j = integral of func * phi_j via the per-element Gauss rule."""
    h = mesh.h
    edges = np.arange(0, mesh.interior_count + 1, dtype=float) * h
    to_left = np.zeros(mesh.interior_count + 1)
    to_right = np.zeros(mesh.interior_count + 1)
    for xi, w in zip(_GAUSS_XI, _GAUSS_W):
        values = np.asarray(func(edges + xi * h), dtype=float)
        to_left += (h * w * (1.0 - xi)) * values
        to_right += (h * w * xi) * values
    return to_left[1:] + to_right[:-1]


def _eval_piecewise(u: FemFunction, x: np.ndarray) -> np.ndarray:
    """Evaluate the piecewise linear interpolant of `u` at points in [0, 1]."""
    full = _padded(u.coeffs)
    h = u.mesh.h
    pos = np.clip(np.asarray(x, dtype=float), 0.0, 1.0) / h
    idx = np.minimum(pos.astype(int), u.mesh.interior_count)
    frac = pos - idx
    return full[idx] * (1.0 - frac) + full[idx + 1] * frac


def prolong_coeffs(coeffs: np.ndarray, coarse: UniformMesh,
                   fine: UniformMesh) -> np.ndarray:
    """Exact nodal values of coarse functions at fine nodes, stacked (..., N_c).

    Requires nested meshes.  Fine node j*h_f lies in a coarse element; the
    value is the convex combination of that element's endpoint values with
    exact dyadic weights whenever the refinement ratio is a power of two.
    """
    if not nested(coarse, fine):
        raise ValueError(
            f"meshes are not nested: N={coarse.interior_count} into "
            f"N={fine.interior_count}"
        )
    ratio = (fine.interior_count + 1) // (coarse.interior_count + 1)
    full = _padded(np.asarray(coeffs, dtype=float))
    j = np.arange(1, fine.interior_count + 1)
    q, rho = np.divmod(j, ratio)
    w = rho / float(ratio)
    return full[..., q] * (1.0 - w) + full[..., q + 1] * w


def prolong(u: FemFunction, fine: UniformMesh) -> FemFunction:
    """Represent `u` exactly on a nested finer mesh."""
    return FemFunction(fine, prolong_coeffs(u.coeffs, u.mesh, fine))


def l2_norm(u: FemFunction) -> float:
    """L2 norm sqrt(c^T M c)."""
    return float(np.sqrt(assemble_mass(u.mesh).quadratic_form(u.coeffs)))


def h1_seminorm(u: FemFunction) -> float:
    """H1 seminorm sqrt(c^T S c)."""
    return float(np.sqrt(assemble_stiffness(u.mesh).quadratic_form(u.coeffs)))


def l2_distance_sq_to_modal(coeffs: np.ndarray, mesh: UniformMesh,
                            modal_coeffs) -> np.ndarray:
    """Squared L2 distance between stacked element functions and a sine expansion.

    With v = sum_k a_k e_k and u having nodal coefficients c,
    ||v - u||^2 = sum a_k^2 - 2 a^T (B^T c) + c^T M c, all terms exact.
    Tiny negative results from roundoff are clipped to zero.
    """
    a = np.atleast_1d(np.asarray(modal_coeffs, dtype=float))
    c = np.asarray(coeffs, dtype=float)
    mass_term = assemble_mass(mesh).quadratic_form(c)
    if a.size == 0:
        return np.maximum(mass_term, 0.0)
    inner = sine_hat_inner(mesh, a.shape[0]) @ a
    dist_sq = float(a @ a) - 2.0 * (c * inner).sum(axis=-1) + mass_term
    return np.maximum(dist_sq, 0.0)


def l2_distance_to_modal(u: FemFunction, modal_coeffs) -> float:
    """L2 distance between a FemFunction and a sine expansion (exact norms)."""
    return float(np.sqrt(l2_distance_sq_to_modal(u.coeffs, u.mesh, modal_coeffs)))
