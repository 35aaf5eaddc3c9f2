"""Monte Carlo strong-error studies, rate fitting, and deterministic probes.

The central routine couples every discretization level of a sample to one
noise path: the reference trajectory runs at the finest grid, each trial
resolution consumes the same path (block-aggregated in time, reprojected in
space), and the error is measured on the reference mesh after exact
prolongation, in the reference mass norm.  Reported errors are
root-mean-square over samples with delta-method standard errors, and rates
come from ordinary least squares in log-log coordinates.

Reproducibility contract: sample i is always driven by the substream keyed
(master seed, i); per-sample results never depend on batch composition (see
`stepper`), samples are processed in fixed-size chunks, and the per-sample
error table is reassembled in ascending sample order before any reduction.
Reports are therefore byte-stable under any worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fem
from . import noise
from . import stepper
from .spectral import (CovarianceSpec, discrete_eigendecomposition,
                       discrete_semigroup_apply, exact_semigroup_apply)

# samples integrated per vectorized batch; a pure performance knob (results
# are bitwise independent of it), sized to keep a reference-resolution
# chunk's path and load arrays a few hundred MB
CHUNK_SAMPLES = 64

_AXES = ("space", "time")


def initial_modal_coeffs(init: str) -> np.ndarray:
    """Parse an initial-condition descriptor into sine-modal coefficients.

    "sin" is sin(pi x) (the default everywhere), "zero" is the origin, and
    "modal:c1,c2,..." gives explicit coefficients of e_1, e_2, ...
    """
    if init == "sin":
        return np.array([1.0 / np.sqrt(2.0)])
    if init == "zero":
        return np.zeros(0)
    if init.startswith("modal:"):
        body = init[len("modal:"):]
        try:
            coeffs = np.array([float(tok) for tok in body.split(",")])
        except ValueError as exc:
            raise ValueError(f"bad modal coefficient list {body!r}") from exc
        if coeffs.size == 0 or not np.all(np.isfinite(coeffs)):
            raise ValueError(f"bad modal coefficient list {body!r}")
        return coeffs
    raise ValueError(
        f"unknown initial condition {init!r} (use 'sin', 'zero' or 'modal:...')"
    )


@dataclass(frozen=True)
class StudyConfig:
    """One convergence study: which axis is refined, against which reference."""

    axis: str
    s: float
    trial_exponents: tuple[int, ...]
    ref_space_exponent: int
    ref_time_exponent: int
    samples: int
    master_seed: int
    horizon: float = 1.0
    init: str = "sin"
    mode_count: int | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "trial_exponents",
                           tuple(int(e) for e in self.trial_exponents))
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {_AXES}, got {self.axis!r}")
        if not self.trial_exponents:
            raise ValueError("need at least one trial resolution")
        for e in (*self.trial_exponents, self.ref_space_exponent,
                  self.ref_time_exponent):
            if not 1 <= int(e) <= 20:
                raise ValueError(f"dyadic exponent {e} outside [1, 20]")
        ref = (self.ref_space_exponent if self.axis == "space"
               else self.ref_time_exponent)
        if max(self.trial_exponents) > ref:
            raise ValueError(
                f"trial exponents {self.trial_exponents} exceed the reference "
                f"exponent {ref}: trials must be coarser than the reference"
            )
        if self.samples < 1:
            raise ValueError(f"sample count must be >= 1, got {self.samples}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError(f"master seed must be a u64, got {self.master_seed}")
        if self.workers < 1:
            raise ValueError(f"worker count must be >= 1, got {self.workers}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        steps = self.horizon * 2.0 ** self.ref_time_exponent
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValueError(
                f"horizon {self.horizon} is not a whole number of reference "
                f"steps 2^-{self.ref_time_exponent}"
            )
        if self.mode_count is not None and self.mode_count < 1:
            raise ValueError(f"mode count must be >= 1, got {self.mode_count}")
        initial_modal_coeffs(self.init)

    @property
    def ref_mesh(self) -> fem.UniformMesh:
        return fem.UniformMesh(2 ** self.ref_space_exponent - 1)

    @property
    def tau_ref(self) -> float:
        return 2.0 ** (-self.ref_time_exponent)

    @property
    def fine_step_count(self) -> int:
        return round(self.horizon * 2.0 ** self.ref_time_exponent)

    @property
    def modes(self) -> int:
        return (self.mode_count if self.mode_count is not None
                else self.ref_mesh.interior_count)


@dataclass(frozen=True)
class ReportRow:
    """One trial resolution: RMS error over samples with its standard error."""

    resolution_exponent: int
    ms_error: float
    std_err: float
    samples: int


@dataclass(frozen=True)
class ExperimentReport:
    """Study outcome: rows (coarse to fine), fitted rate, and provenance."""

    axis: str
    s: float
    rows: tuple[ReportRow, ...]
    slope: float
    slope_stderr: float
    intercept: float
    seed: int
    wall_clock: float
    config: StudyConfig = field(repr=False)


@dataclass(frozen=True)
class RateFit:
    """Log-log least squares: error ~ exp(intercept) * resolution^slope."""

    slope: float
    intercept: float
    slope_stderr: float


def fit_rate(points) -> RateFit:
    """Fit a convergence order to (resolution, error) pairs.

    Ordinary least squares of log(error) on log(resolution); the slope
    standard error comes from the residual variance (zero when only two
    points are given).  Raises on nonpositive inputs or fewer than two
    distinct resolutions.
    """
    pts = [(float(r), float(e)) for r, e in points]
    if len(pts) < 2:
        raise ValueError(f"need at least two points to fit a rate, got {len(pts)}")
    for r, e in pts:
        if r <= 0:
            raise ValueError(f"resolution must be > 0, got {r}")
        if e <= 0:
            raise ValueError(f"error values must be > 0, got {e}")
    x = np.log([r for r, _ in pts])
    y = np.log([e for _, e in pts])
    x_c = x - x.mean()
    sxx = float(x_c @ x_c)
    if sxx == 0.0:
        raise ValueError("resolutions must not all coincide")
    slope = float(x_c @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    n = len(pts)
    if n > 2:
        resid = y - (intercept + slope * x)
        stderr = math.sqrt(float(resid @ resid) / (n - 2) / sxx)
    else:
        stderr = 0.0
    return RateFit(slope=slope, intercept=intercept, slope_stderr=stderr)


@dataclass(frozen=True)
class _Resolution:
    exponent: int
    mesh: fem.UniformMesh
    factor: int  # temporal aggregation factor relative to the reference grid


def _resolutions(cfg: StudyConfig) -> tuple[_Resolution, ...]:
    out = []
    for e in cfg.trial_exponents:
        if cfg.axis == "space":
            out.append(_Resolution(e, fem.UniformMesh(2 ** e - 1), 1))
        else:
            out.append(_Resolution(e, cfg.ref_mesh,
                                   2 ** (cfg.ref_time_exponent - e)))
    return tuple(out)


def _scheme(cfg: StudyConfig, factor: int) -> stepper.SchemeConfig:
    return stepper.SchemeConfig(tau=factor * cfg.tau_ref)


def _chunk_errors(cfg: StudyConfig, start: int, count: int) -> np.ndarray:
    """Squared trial-vs-reference errors for samples [start, start+count).

    Returns a (count, len(trials)) array.  Each sample's bits depend only on
    (master seed, sample index) and the study geometry.
    """
    cov = CovarianceSpec(cfg.s)
    ref_mesh = cfg.ref_mesh
    modes = cfg.modes
    m_fine = cfg.fine_step_count
    trials = _resolutions(cfg)
    init = initial_modal_coeffs(cfg.init)
    mass_ref = fem.assemble_mass(ref_mesh)

    paths = [noise.sample_path(noise.SeedSpec(cfg.master_seed, start + i),
                               cov, modes, m_fine, cfg.horizon)
             for i in range(count)]

    def run(mesh: fem.UniformMesh, factor: int, label: str) -> np.ndarray:
        n = mesh.interior_count
        x0 = np.broadcast_to(fem.l2_project(init, mesh).coeffs,
                             (count, n)).copy()
        loads = np.empty((count, m_fine // factor, n))
        for i, path in enumerate(paths):
            loads[i] = noise.path_loads(path, factor, mesh)
        try:
            result = stepper.integrate_ensemble(x0, loads, mesh,
                                                _scheme(cfg, factor))
        except stepper.StepFailureError as err:
            raise stepper.StepFailureError(
                step_index=err.step_index,
                sample_index=start + err.sample_index,
                iterations=err.iterations, residual=err.residual,
                context=label,
            ) from err
        return result.states

    ref_states = run(ref_mesh, 1, "reference resolution")
    errors_sq = np.zeros((count, len(trials)))
    for j, res in enumerate(trials):
        if res.mesh == ref_mesh and res.factor == 1:
            continue  # identical computation and path: the error is exactly 0
        label = (f"{cfg.axis} trial 2^-{res.exponent}")
        states = run(res.mesh, res.factor, label)
        diff = ref_states - fem.prolong_coeffs(states, res.mesh, ref_mesh)
        errors_sq[:, j] = mass_ref.quadratic_form(diff)
    return errors_sq


def _chunk_task(args) -> tuple[int, np.ndarray]:
    cfg, start, count = args
    return start, _chunk_errors(cfg, start, count)


def _sample_errors(cfg: StudyConfig) -> np.ndarray:
    """Per-sample squared errors (samples, trials), ascending sample order."""
    tasks = [(cfg, start, min(CHUNK_SAMPLES, cfg.samples - start))
             for start in range(0, cfg.samples, CHUNK_SAMPLES)]
    if cfg.workers == 1 or len(tasks) == 1:
        parts = [_chunk_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(tasks))) as pool:
            parts = list(pool.map(_chunk_task, tasks))
    parts.sort(key=lambda item: item[0])
    return np.vstack([block for _, block in parts])


def _rows(cfg: StudyConfig, errors_sq: np.ndarray) -> tuple[ReportRow, ...]:
    n = errors_sq.shape[0]
    rows = []
    for j, e in enumerate(cfg.trial_exponents):
        col = errors_sq[:, j]
        mean_sq = float(col.sum()) / n
        rms = math.sqrt(mean_sq)
        if n > 1 and rms > 0.0:
            var = float(((col - mean_sq) ** 2).sum()) / (n - 1)
            stderr = math.sqrt(var / n) / (2.0 * rms)
        else:
            stderr = 0.0
        rows.append(ReportRow(resolution_exponent=int(e), ms_error=rms,
                              std_err=stderr, samples=n))
    rows.sort(key=lambda row: row.resolution_exponent)
    return tuple(rows)


def strong_error(cfg: StudyConfig) -> tuple[ReportRow, ...]:
    """Coupled-path strong-error rows for each trial resolution of a study."""
    return _rows(cfg, _sample_errors(cfg))


def run_experiment(cfg: StudyConfig) -> ExperimentReport:
    """Run a full study and assemble the report (rows, fitted rate, timing)."""
    t0 = time.perf_counter()
    rows = _rows(cfg, _sample_errors(cfg))
    points = [(2.0 ** (-row.resolution_exponent), row.ms_error)
              for row in rows if row.ms_error > 0.0]
    if len(points) >= 2:
        fit = fit_rate(points)
        slope, stderr, intercept = fit.slope, fit.slope_stderr, fit.intercept
    else:
        slope = stderr = intercept = float("nan")
    return ExperimentReport(
        axis=cfg.axis, s=cfg.s, rows=rows, slope=slope, slope_stderr=stderr,
        intercept=intercept, seed=cfg.master_seed,
        wall_clock=time.perf_counter() - t0, config=cfg,
    )


def csv_number(x: float) -> str:
    """Decimal with 17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


CSV_HEADER = "axis,s,resolution_exponent,ms_error,std_err,samples,slope,seed"


def report_csv(report: ExperimentReport) -> str:
    """Render a report in the fixed CSV schema (17 significant digits)."""
    lines = [CSV_HEADER]
    for row in report.rows:
        lines.append(",".join([
            report.axis, csv_number(report.s), str(row.resolution_exponent),
            csv_number(row.ms_error), csv_number(row.std_err), str(row.samples),
            csv_number(report.slope), str(report.seed),
        ]))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class OperatorProbeResult:
    """Exact error-operator norms ||S(t)x - S_h(t)P_h x|| over mesh families."""

    times: tuple[float, ...]
    spacings: tuple[float, ...]
    errors: np.ndarray
    fits: tuple[RateFit, ...]
    smoothness: float


def operator_error_probe(meshes, times, modal_coeffs,
                         smoothness: float = 0.0) -> OperatorProbeResult:
    """Spatial decay rate of the semigroup error operator, no Monte Carlo.

    For each mesh and each t, evaluates ||S(t)x - S_h(t)P_h x|| in closed
    form: the continuous semigroup acts on the modal coefficients of x, the
    discrete one through the generalized eigendecomposition, and the cross
    terms through the exact sine/hat inner products.  At t = 0 this is the
    projection error ||x - P_h x||.  `smoothness` records the assumed
    regularity of x (it only informs which decay rate one should expect;
    for t > 0 and resolvable x the measured rate saturates at 2).  The rate
    for each t is fitted over the mesh spacings.
    """
    meshes = tuple(meshes)
    times = tuple(float(t) for t in times)
    if not meshes or not times:
        raise ValueError("need at least one mesh and one time")
    if any(t < 0 for t in times):
        raise ValueError("times must be >= 0")
    a = np.atleast_1d(np.asarray(modal_coeffs, dtype=float))
    errors = np.zeros((len(times), len(meshes)))
    for j, mesh in enumerate(meshes):
        eig = discrete_eigendecomposition(mesh)
        c0 = fem.l2_project(a, mesh).coeffs
        for i, t in enumerate(times):
            ct = discrete_semigroup_apply(eig, t, c0)
            at = exact_semigroup_apply(t, a)
            errors[i, j] = math.sqrt(
                float(fem.l2_distance_sq_to_modal(ct, mesh, at)))
    fits = tuple(
        fit_rate(list(zip((m.h for m in meshes), errors[i])))
        for i in range(len(times))
    )
    return OperatorProbeResult(
        times=times, spacings=tuple(m.h for m in meshes), errors=errors,
        fits=fits, smoothness=float(smoothness),
    )


@dataclass(frozen=True)
class RegularityResult:
    """Temporal increment statistics E||X(t) - X(u)||^2 over dyadic gaps."""

    pairs: tuple[tuple[float, float], ...]
    gaps: tuple[float, ...]
    rms: tuple[float, ...]
    std_errs: tuple[float, ...]
    fit: RateFit
    reference_exponent: float | None
    samples: int


def regularity_probe(s: float, ref_space_exponent: int, ref_time_exponent: int,
                     samples: int, time_pairs, master_seed: int,
                     horizon: float = 1.0,
                     zero_noise: bool = False) -> RegularityResult:
    """Fit the Hoelder exponent of t -> X(t) in the mean-square sense.

    Integrates reference-resolution trajectories, snapshots each requested
    (u, t) pair, and fits log RMS(||X(t) - X(u)||) against log(t - u).  For
    the stochastic dynamics the expected exponent is min(1, gamma)/2 (which
    is 1/2 for every admissible s); with `zero_noise` the dynamics are
    deterministic and parabolic smoothing pushes the exponent to >= 1
    (a single trajectory is integrated in that case).
    """
    cfg = StudyConfig(axis="time", s=s, trial_exponents=(ref_time_exponent,),
                      ref_space_exponent=ref_space_exponent,
                      ref_time_exponent=ref_time_exponent,
                      samples=1 if zero_noise else samples,
                      master_seed=master_seed, horizon=horizon)
    pairs = tuple((float(u), float(t)) for u, t in time_pairs)
    if not pairs:
        raise ValueError("need at least one time pair")
    tau = cfg.tau_ref
    steps = {}
    for u, t in pairs:
        if not 0 < u < t <= cfg.horizon:
            raise ValueError(f"time pair ({u}, {t}) outside 0 < u < t <= T")
        for value in (u, t):
            frac = value / tau
            if abs(frac - round(frac)) > 1e-9:
                raise ValueError(
                    f"time {value} is not a whole number of reference steps"
                )
            steps[value] = round(frac)
    record = sorted(set(steps.values()))

    mesh = cfg.ref_mesh
    mass = fem.assemble_mass(mesh)
    init = initial_modal_coeffs(cfg.init)
    x0_row = fem.l2_project(init, mesh).coeffs
    cov = CovarianceSpec(s)

    parts = []
    for start in range(0, cfg.samples, CHUNK_SAMPLES):
        count = min(CHUNK_SAMPLES, cfg.samples - start)
        if zero_noise:
            loads = np.zeros((count, cfg.fine_step_count, mesh.interior_count))
        else:
            loads = np.empty((count, cfg.fine_step_count, mesh.interior_count))
            for i in range(count):
                path = noise.sample_path(noise.SeedSpec(master_seed, start + i),
                                         cov, cfg.modes, cfg.fine_step_count,
                                         cfg.horizon)
                loads[i] = noise.path_loads(path, 1, mesh)
        x0 = np.broadcast_to(x0_row, (count, mesh.interior_count)).copy()
        result = stepper.integrate_ensemble(x0, loads, mesh, _scheme(cfg, 1),
                                            record_steps=record)
        e2 = np.zeros((count, len(pairs)))
        for j, (u, t) in enumerate(pairs):
            diff = result.snapshots[steps[t]] - result.snapshots[steps[u]]
            e2[:, j] = mass.quadratic_form(diff)
        parts.append(e2)
    errors_sq = np.vstack(parts)

    n = errors_sq.shape[0]
    gaps, rms_values, std_errs = [], [], []
    for j, (u, t) in enumerate(pairs):
        col = errors_sq[:, j]
        mean_sq = float(col.sum()) / n
        rms = math.sqrt(mean_sq)
        if n > 1 and rms > 0.0:
            var = float(((col - mean_sq) ** 2).sum()) / (n - 1)
            stderr = math.sqrt(var / n) / (2.0 * rms)
        else:
            stderr = 0.0
        gaps.append(t - u)
        rms_values.append(rms)
        std_errs.append(stderr)
    fit = fit_rate(list(zip(gaps, rms_values)))
    gamma = CovarianceSpec(s).gamma
    return RegularityResult(
        pairs=pairs, gaps=tuple(gaps), rms=tuple(rms_values),
        std_errs=tuple(std_errs), fit=fit,
        reference_exponent=None if zero_noise else min(1.0, gamma) / 2.0,
        samples=n,
    )
