"""Strong-convergence testbed for a semilinear stochastic heat equation.

Finite element (piecewise linear) spatial discretization and backward Euler
time stepping for the stochastically forced Allen-Cahn equation on (0, 1)
with homogeneous Dirichlet boundary conditions, plus a Monte Carlo harness
that measures strong convergence rates against coupled high-resolution
reference solutions.

Submodules
----------
spectral
    Dirichlet Laplacian eigenpairs, covariance spectra, semigroup helpers.
fem
    Uniform meshes, tridiagonal assembly, loads, projection, prolongation.
noise
    Reproducible spectral Wiener increments and their mesh projections.
stepper
    Backward Euler with damped-free Newton solves, batched over samples.
harness
    Convergence studies, rate fitting, CSV reports, diagnostic probes.
cli
    ``sacfem`` command-line entry point.
"""

from .spectral import (
    CovarianceSpec,
    DiscreteEigensystem,
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
from .fem import (
    FemFunction,
    TridiagonalMatrix,
    UniformMesh,
    assemble_mass,
    assemble_stiffness,
    l2_distance_to_modal,
    l2_norm,
    l2_project,
    nonlinear_jacobian,
    nonlinear_load,
    prolong,
    sine_hat_inner,
)
from .noise import NoisePath, SeedSpec, aggregate, path_loads, sample_path, zero_path
from .stepper import (
    EnsembleResult,
    SchemeConfig,
    StepFailureError,
    TrajectoryState,
    backward_euler_step,
    integrate,
    integrate_ensemble,
)
from .harness import (
    ExperimentReport,
    RateFit,
    ReportRow,
    StudyConfig,
    fit_rate,
    operator_error_probe,
    regularity_probe,
    report_csv,
    run_experiment,
    strong_error,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceSpec",
    "DiscreteEigensystem",
    "DivergenceError",
    "EnsembleResult",
    "ExperimentReport",
    "FemFunction",
    "NoisePath",
    "RateFit",
    "ReportRow",
    "SchemeConfig",
    "SeedSpec",
    "SpectralOperator",
    "StepFailureError",
    "StudyConfig",
    "TrajectoryState",
    "TridiagonalMatrix",
    "UniformMesh",
    "aggregate",
    "assemble_mass",
    "assemble_stiffness",
    "backward_euler_step",
    "discrete_eigendecomposition",
    "discrete_semigroup_apply",
    "eigenfunction_values",
    "eigenvalue",
    "eigenvalues",
    "exact_semigroup_apply",
    "fit_rate",
    "hs_norm_sq",
    "integrate",
    "integrate_ensemble",
    "l2_distance_to_modal",
    "l2_norm",
    "l2_project",
    "nonlinear_jacobian",
    "nonlinear_load",
    "operator_error_probe",
    "path_loads",
    "prolong",
    "regularity_probe",
    "report_csv",
    "run_experiment",
    "sample_path",
    "sine_hat_inner",
    "strong_error",
    "zero_path",
]
