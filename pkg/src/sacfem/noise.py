"""Karhunen-Loeve sampling of Q-Wiener increments and their coupling machinery.

A noise path stores independent Gaussian increments DW[k][m] of the first K
sine modes over the finest time grid (variance tau_fine * lambda_k^(-s) per
entry).  Coarser discretizations consume the same path through block
aggregation, and any element mesh receives increments through the exact
sine/hat inner products.  This is what couples every resolution of a Monte
Carlo sample to one underlying Brownian path.

Streams are counter-based (Philox) and keyed by (master seed, sample
index): paths for distinct samples are independent and reproducible in any
order, which is what makes worker-count-independent results possible.

Block aggregation uses a fixed pairwise reduction tree (halve while the
factor is even, then fold the odd remainder left to right).  For the dyadic
factors used throughout, composing aggregations is bit-identical to
aggregating once, and per-mode totals are preserved bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import CovarianceSpec
from . import fem

_UINT64_BOUND = 2 ** 64


@dataclass(frozen=True)
class SeedSpec:
    """Key (master seed, sample index) of one counter-based substream."""

    master_seed: int
    sample_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < _UINT64_BOUND:
            raise ValueError(f"master seed must be a u64, got {self.master_seed}")
        if self.sample_index < 0:
            raise ValueError(f"sample index must be >= 0, got {self.sample_index}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.sample_index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NoisePath:
    """Fine-grid increments DW[k][m] of one Q-Wiener sample path."""

    cov: CovarianceSpec
    mode_count: int
    tau_fine: float
    fine_step_count: int
    increments: np.ndarray = field(repr=False)
    seed: SeedSpec | None = None

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.mode_count, self.fine_step_count):
            raise ValueError(
                f"increments have shape {inc.shape}, expected "
                f"({self.mode_count}, {self.fine_step_count})"
            )
        if self.tau_fine <= 0:
            raise ValueError(f"tau_fine must be > 0, got {self.tau_fine}")
        object.__setattr__(self, "increments", inc)

    @property
    def horizon(self) -> float:
        return self.tau_fine * self.fine_step_count


def sample_path(seed: SeedSpec, cov: CovarianceSpec, mode_count: int,
                fine_step_count: int, horizon: float) -> NoisePath:
    """Draw one path: independent N(0, tau_fine * lambda_k^(-s)) entries.

    Deterministic function of `seed`; one draw call per path, scaled
    mode-by-mode, so the bits of a sample never depend on other samples.
    """
    if mode_count < 1:
        raise ValueError(f"mode count must be >= 1, got {mode_count}")
    if fine_step_count < 1:
        raise ValueError(f"step count must be >= 1, got {fine_step_count}")
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    tau_fine = horizon / fine_step_count
    std = np.sqrt(tau_fine) * cov.mode_std(np.arange(1, mode_count + 1))
    z = seed.generator().standard_normal((mode_count, fine_step_count))
    return NoisePath(cov=cov, mode_count=mode_count, tau_fine=tau_fine,
                     fine_step_count=fine_step_count,
                     increments=z * std[:, None], seed=seed)


def zero_path(cov: CovarianceSpec, mode_count: int, fine_step_count: int,
              horizon: float) -> NoisePath:
    """A path of zero increments (deterministic dynamics on the same grid)."""
    tau_fine = horizon / fine_step_count
    return NoisePath(cov=cov, mode_count=mode_count, tau_fine=tau_fine,
                     fine_step_count=fine_step_count,
                     increments=np.zeros((mode_count, fine_step_count)))


def _block_sums(arr: np.ndarray, r: int) -> np.ndarray:
    """Sum consecutive blocks of r columns with the canonical reduction tree."""
    while r % 2 == 0:
        arr = arr[..., 0::2] + arr[..., 1::2]
        r //= 2
    if r > 1:
        acc = arr[..., 0::r].copy()
        for i in range(1, r):
            acc += arr[..., i::r]
        arr = acc
    return arr


def aggregate(path: NoisePath, r: int) -> np.ndarray:
    """Aggregate fine increments to a grid coarser by the factor r.

    Returns the (K, M_fine / r) array of block sums.  Blocks are reduced
    with a fixed pairwise tree, so aggregate(aggregate(p, 2), 2) equals
    aggregate(p, 4) bit-for-bit and per-mode totals are invariant for the
    dyadic factors the studies use.
    """
    if r < 1:
        raise ValueError(f"aggregation factor must be >= 1, got {r}")
    if path.fine_step_count % r != 0:
        raise ValueError(
            f"factor {r} does not divide the fine step count "
            f"{path.fine_step_count}"
        )
    if r == 1:
        return path.increments.copy()
    return _block_sums(path.increments, r)


def per_mode_totals(path: NoisePath) -> np.ndarray:
    """Per-mode sums over all fine steps, reduced with the canonical tree."""
    return _block_sums(path.increments, path.fine_step_count)[:, 0]


def project_increment(modal_increments: np.ndarray,
                      mesh: fem.UniformMesh) -> np.ndarray:
    """Load vector w_j = sum_k DW_k <e_k, phi_j> for one step's increments."""
    dw = np.asarray(modal_increments, dtype=float)
    if dw.ndim != 1 or dw.size == 0:
        raise ValueError("modal increments must form a nonempty vector")
    return fem.sine_hat_inner(mesh, dw.shape[0]) @ dw


def path_loads(path: NoisePath, r: int, mesh: fem.UniformMesh) -> np.ndarray:
    """All load vectors of an aggregated path on `mesh`: shape (M_fine/r, N).

    Single matrix product per path; the (inner-product matrix, increment
    block) shapes are fixed by (mesh, K, M), so the result is bitwise
    independent of which other samples are being processed.
    """
    inner = fem.sine_hat_inner(mesh, path.mode_count)
    return (inner @ aggregate(path, r)).T.copy()
