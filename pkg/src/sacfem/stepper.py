"""Fully implicit backward Euler stepping for the stochastic Allen-Cahn system.

One step solves the weak system

    M (x - x_prev) + tau S x = tau b(x) + w

for the new coefficients x, with M/S the mass/stiffness matrices, b the
cubic load (f(v) = v - v^3) and w the projected noise increment in load
form.  The solve is a Newton iteration with the exact tridiagonal Jacobian
M + tau S - tau J(x), started from x_prev.  For tau <= tau_max < 1 the
implicit map is strongly monotone (the cubic has one-sided Lipschitz
constant 1), so the step is uniquely solvable and the Jacobian is positive
definite throughout.

The engine integrates whole ensembles of trajectories at once: coefficient
arrays carry a leading sample axis and every arithmetic operation is
elementwise across it, per-sample Newton termination is handled by masking
the updates, and the per-sample tridiagonal solves are stacked into one
block-diagonal banded solve (blocks are decoupled, so each sample's bits
are independent of batch composition).  `backward_euler_step` and
`integrate` are thin single-sample wrappers around the same engine.

Drift variants: "cubic" is the real model; "linear" (f(v) = v) exists so
tests can pin Newton against a closed-form linear solve; "zero" (f = 0)
yields the discrete heat equation, solved directly with one prefactored
Cholesky solve per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg

from . import fem
from . import noise as noise_mod

_DRIFTS = ("cubic", "linear", "zero")


@dataclass(frozen=True)
class SchemeConfig:
    """Step size and Newton policy of the implicit scheme."""

    tau: float
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    tau_max: float = 0.5
    drift: str = "cubic"

    def __post_init__(self):
        if not 0.0 < self.tau_max < 1.0:
            raise ValueError(f"tau_max must lie in (0, 1), got {self.tau_max}")
        if not 0.0 < self.tau <= self.tau_max:
            raise ValueError(
                f"step size must lie in (0, tau_max={self.tau_max}], got {self.tau}"
            )
        if self.newton_tol <= 0:
            raise ValueError(f"newton_tol must be > 0, got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError(
                f"newton_max_iter must be >= 1, got {self.newton_max_iter}"
            )
        if self.drift not in _DRIFTS:
            raise ValueError(f"drift must be one of {_DRIFTS}, got {self.drift!r}")


class StepFailureError(RuntimeError):
    """Newton failed to converge (or the linearized solve broke down).

    The run aborts; silently damping or perturbing a sample would bias the
    Monte Carlo estimate.
    """

    def __init__(self, step_index: int, sample_index: int, iterations: int,
                 residual: float, context: str = ""):
        self.step_index = step_index
        self.sample_index = sample_index
        self.iterations = iterations
        self.residual = residual
        self.context = context
        where = f" [{context}]" if context else ""
        super().__init__(
            f"implicit step {step_index} failed for sample {sample_index} "
            f"after {iterations} Newton iterations (residual {residual:.3e})"
            f"{where}"
        )

    def __reduce__(self):
        # keeps the exception picklable across worker process boundaries
        return (type(self), (self.step_index, self.sample_index,
                             self.iterations, self.residual, self.context))


@dataclass
class TrajectoryState:
    """Endpoint of one integrated trajectory with per-step Newton diagnostics."""

    step_index: int
    state: fem.FemFunction
    newton_iterations: np.ndarray = field(repr=False)
    newton_residuals: np.ndarray = field(repr=False)


@dataclass
class EnsembleResult:
    """Endpoints of a batch of trajectories sharing mesh and step size."""

    states: np.ndarray
    newton_iterations: np.ndarray
    newton_residuals: np.ndarray
    snapshots: dict[int, np.ndarray]


def _row_norms(vec: np.ndarray) -> np.ndarray:
    return np.sqrt((vec * vec).sum(axis=-1))


def _stacked_spd_solve(main: np.ndarray, off: np.ndarray,
                       rhs: np.ndarray) -> np.ndarray:
    """Solve B independent SPD tridiagonal systems in one banded LAPACK call.

    The systems are stacked into a block-diagonal matrix; the zero couplings
    at block seams make the factorization of each block identical to a
    standalone solve, bit for bit.
    """
    b, n = main.shape
    if b * n == 1:  # LAPACK's banded path rejects 1x1 systems
        return rhs / main
    sup = np.zeros((b, n))
    sup[:, 1:] = off
    ab = np.empty((2, b * n))
    ab[0] = sup.ravel()
    ab[1] = main.ravel()
    sol = scipy.linalg.solveh_banded(ab, rhs.reshape(-1), check_finite=False)
    return sol.reshape(b, n)


def integrate_ensemble(x0: np.ndarray, loads: np.ndarray, mesh: fem.UniformMesh,
                       cfg: SchemeConfig, record_steps=()) -> EnsembleResult:
    """Integrate a batch of trajectories from stacked initial coefficients.

    `x0` has shape (B, N) and `loads` (B, M, N): the projected noise
    increment of each step in load form.  Returns endpoints plus Newton
    diagnostics of shape (B, M); `record_steps` selects step indices
    (0 = initial state) whose states are copied into `snapshots`.
    """
    x0 = np.asarray(x0, dtype=float)
    loads = np.asarray(loads, dtype=float)
    n = mesh.interior_count
    if x0.ndim != 2 or x0.shape[1] != n:
        raise ValueError(f"initial batch has shape {x0.shape}, expected (B, {n})")
    batch = x0.shape[0]
    if loads.ndim != 3 or loads.shape[0] != batch or loads.shape[2] != n:
        raise ValueError(
            f"loads have shape {loads.shape}, expected ({batch}, M, {n})"
        )
    steps = loads.shape[1]
    record = frozenset(int(m) for m in record_steps)
    bad = [m for m in record if not 0 <= m <= steps]
    if bad:
        raise ValueError(f"snapshot steps {bad} outside [0, {steps}]")

    mass = fem.assemble_mass(mesh)
    stiff = fem.assemble_stiffness(mesh)
    a0 = mass + cfg.tau * stiff

    snapshots: dict[int, np.ndarray] = {}
    x = x0.copy()
    if 0 in record:
        snapshots[0] = x.copy()

    iterations = np.zeros((batch, steps), dtype=np.int32)
    residuals = np.zeros((batch, steps))

    if cfg.drift == "zero":
        _run_linear_heat(x, loads, mass, a0, record, snapshots)
        iterations[:] = 1
        return EnsembleResult(x, iterations, residuals, snapshots)

    tau = cfg.tau
    for m in range(steps):
        target = mass.matvec(x) + loads[:, m, :]
        xn = x.copy()
        active = np.ones(batch, dtype=bool)
        for it in range(cfg.newton_max_iter + 1):
            if cfg.drift == "cubic":
                b_load = fem.cubic_load(xn, mesh)
            else:
                b_load = mass.matvec(xn)
            residual = a0.matvec(xn) - target - tau * b_load
            norms = _row_norms(residual)
            done = active & (norms <= cfg.newton_tol)
            if done.any():
                iterations[done, m] = it
                residuals[done, m] = norms[done]
                active &= ~done
            if not active.any():
                break
            if it == cfg.newton_max_iter:
                worst = int(np.argmax(active))
                raise StepFailureError(
                    step_index=m + 1, sample_index=worst,
                    iterations=cfg.newton_max_iter,
                    residual=float(norms[worst]),
                )
            if cfg.drift == "cubic":
                j_main, j_off = fem.cubic_jacobian_diags(xn, mesh)
                sys_main = a0.main - tau * j_main
                sys_off = a0.off - tau * j_off
            else:
                sys_main = np.broadcast_to(a0.main - tau * mass.main,
                                           xn.shape).copy()
                sys_off = np.broadcast_to(a0.off - tau * mass.off,
                                          (batch, max(n - 1, 0))).copy()
            try:
                delta = _stacked_spd_solve(sys_main, sys_off, residual)
            except scipy.linalg.LinAlgError as exc:
                worst = int(np.argmax(active))
                raise StepFailureError(
                    step_index=m + 1, sample_index=worst, iterations=it,
                    residual=float(norms[worst]),
                    context=f"linear solve breakdown: {exc}",
                ) from exc
            xn[active] -= delta[active]
        x = xn
        if (m + 1) in record:
            snapshots[m + 1] = x.copy()
    return EnsembleResult(x, iterations, residuals, snapshots)


def _run_linear_heat(x: np.ndarray, loads: np.ndarray,
                     mass: fem.TridiagonalMatrix, a0: fem.TridiagonalMatrix,
                     record: frozenset, snapshots: dict) -> None:
    """Zero-drift stepping: one prefactored SPD solve per step, in place.

    The step matrix M + tau S is constant, so it is Cholesky-factored once;
    Newton diagnostics degenerate (the system is linear) and are reported
    as one iteration with zero residual.
    """
    factor = scipy.linalg.cholesky_banded(a0.to_banded(), check_finite=False)
    steps = loads.shape[1]
    for m in range(steps):
        target = mass.matvec(x) + loads[:, m, :]
        sol = scipy.linalg.cho_solve_banded((factor, False), target.T,
                                            check_finite=False)
        x[...] = sol.T
        if (m + 1) in record:
            snapshots[m + 1] = x.copy()


def backward_euler_step(x_prev: fem.FemFunction, w: np.ndarray,
                        cfg: SchemeConfig) -> fem.FemFunction:
    """Advance one step: solve M(x - x_prev) + tau S x = tau b(x) + w."""
    w = np.asarray(w, dtype=float)
    n = x_prev.mesh.interior_count
    if w.shape != (n,):
        raise ValueError(f"load vector has shape {w.shape}, expected ({n},)")
    result = integrate_ensemble(x_prev.coeffs[None, :], w[None, None, :],
                                x_prev.mesh, cfg)
    return fem.FemFunction(x_prev.mesh, result.states[0])


def integrate(x0: fem.FemFunction, path: noise_mod.NoisePath, r: int,
              cfg: SchemeConfig) -> TrajectoryState:
    """Integrate one trajectory across the whole path, coarsened by factor r.

    The path's fine increments are block-aggregated by r and projected onto
    the mesh of `x0`; cfg.tau must equal r * path.tau_fine.  Deterministic
    function of its inputs.
    """
    if r < 1 or path.fine_step_count % r != 0:
        raise ValueError(
            f"factor {r} does not divide the fine step count "
            f"{path.fine_step_count}"
        )
    if not math.isclose(cfg.tau, r * path.tau_fine, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(
            f"cfg.tau={cfg.tau} does not match r * tau_fine = {r * path.tau_fine}"
        )
    loads = noise_mod.path_loads(path, r, x0.mesh)
    result = integrate_ensemble(x0.coeffs[None, :], loads[None], x0.mesh, cfg)
    return TrajectoryState(
        step_index=loads.shape[0],
        state=fem.FemFunction(x0.mesh, result.states[0]),
        newton_iterations=result.newton_iterations[0],
        newton_residuals=result.newton_residuals[0],
    )
