"""Sparse Bayesian learning over static DOA grids and linear-trajectory grids.

Both estimators maximize the Gaussian evidence of the block over
per-grid-point source power hyperparameters gamma via the multiplicative
fixed-point update

    gamma_m <- gamma_m * [sum_l |a_lm^H Sigma_l^-1 y_l|^2]
                       / [sum_l  a_lm^H Sigma_l^-1 a_lm]

where Sigma_l = sigma^2 I + sum_m gamma_m a_lm a_lm^H is the snapshot-l
covariance. For the trajectory grid a_lm follows candidate m's linear DOA
path across snapshots; the static grid is the alpha = 0 special case where
every snapshot shares one covariance. The lifted NL x NL covariance of the
vectorized block is block-diagonal with the Sigma_l on its diagonal, so
nothing larger than N x N is ever factorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamform import (
    PEAK_MIN_SEPARATION,
    Spectrum1D,
    Spectrum2D,
    pick_peaks_1d,
    pick_peaks_2d,
)
from .geometry import (
    AngleGrid,
    ArrayGeometry,
    TrajectoryGrid,
    TrajectoryParams,
    snapshot_steering_tensor,
    steering_matrix,
)
from .simulate import FLOAT_FMT, SnapshotBlock


@dataclass(frozen=True)
class SblConfig:
    """Fixed-point iteration settings; noise variance is assumed known."""

    noise_variance: float
    max_iterations: int = 1000
    convergence_tol: float = 1e-4
    gamma_floor: float = 1e-12

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be > 0 (it is assumed known)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be > 0")
        if self.gamma_floor < 0:
            raise ValueError("gamma_floor must be >= 0")


@dataclass
class SblState:
    """One iterate: gamma plus the per-snapshot covariances it induces."""

    gamma: np.ndarray
    per_snapshot_cov: np.ndarray  # (L, N, N), Hermitian positive-definite
    iteration: int = 0
    evidence_trace: list = field(default_factory=list)


@dataclass(frozen=True)
class TrajectoryEstimate:
    params: TrajectoryParams
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("estimate weight must be >= 0")


@dataclass
class SblResult:
    """Outcome of a fixed-point run.

    gamma is the full hyperparameter map: (M1, M2) over a trajectory grid or
    (M,) over a static grid, with pruned and invalid cells at exactly 0.
    Non-convergence is reported through the converged flag, not an exception.
    """

    gamma: np.ndarray
    estimates: list[TrajectoryEstimate]
    iterations: int
    converged: bool
    evidence_trace: np.ndarray
    max_change_trace: np.ndarray
    history: list | None = None


def trajectory_grid_steering(
    geom: ArrayGeometry, grid: TrajectoryGrid, num_snapshots: int
) -> np.ndarray:
    """Steering tensor (L, N, n_valid) for the grid's valid trajectories.

    This is the one large precomputable object shared by TL-CBF and TL-SBL;
    callers processing many blocks of equal length should build it once.
    """
    thetas = grid.snapshot_thetas(num_snapshots, grid.valid_flat)
    return snapshot_steering_tensor(geom, thetas)


def _check_gamma(gamma: np.ndarray, grid: TrajectoryGrid) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape == grid.shape:
        gamma = gamma.ravel()
    if gamma.shape != (grid.size,):
        raise ValueError(f"gamma must have length {grid.size}, got shape {gamma.shape}")
    if not np.all(np.isfinite(gamma)):
        raise ValueError("gamma must be finite")
    if gamma.min() < 0:
        raise ValueError("gamma must be non-negative")
    invalid = np.ones(grid.size, dtype=bool)
    invalid[grid.valid_flat] = False
    if np.any(gamma[invalid] != 0):
        raise ValueError("gamma has mass on trajectories that exit the visible region")
    return gamma


def _assemble(steering: np.ndarray, gamma: np.ndarray, noise_variance: float) -> np.ndarray:
    """Sigma_l = sigma^2 I + sum_m gamma_m a_lm a_lm^H, batched over l."""
    L, N, _ = steering.shape
    cov = (steering * gamma[None, None, :]) @ steering.conj().transpose(0, 2, 1)
    cov += noise_variance * np.eye(N)[None, :, :]
    return cov


def assemble_snapshot_covariances(
    gamma: np.ndarray,
    grid: TrajectoryGrid,
    geom: ArrayGeometry,
    num_snapshots: int,
    noise_variance: float,
) -> np.ndarray:
    """The L snapshot covariances induced by a full-grid gamma vector.

    These are the diagonal N x N blocks of the vectorized model's NL x NL
    covariance; its off-diagonal blocks vanish because each lifted dictionary
    column touches exactly one snapshot.
    """
    gamma = _check_gamma(gamma, grid)
    steering = trajectory_grid_steering(geom, grid, num_snapshots)
    return _assemble(steering, gamma[grid.valid_flat], noise_variance)


def _update_terms(steering, cov, y):
    """Numerator and denominator of the fixed-point ratio for every column.

    Returns (num, den, sinv_y, chol) so callers can reuse the solves for the
    evidence. Solves are per-snapshot N x N; no inverse is formed.
    """
    chol = np.linalg.cholesky(cov)  # also certifies positive-definiteness
    sinv_y = np.linalg.solve(cov, y.T[:, :, None])[..., 0]  # (L, N)
    sinv_a = np.linalg.solve(cov, steering)  # (L, N, M)
    proj = np.einsum("lnm,ln->lm", steering.conj(), sinv_y)
    num = (proj.real**2 + proj.imag**2).sum(axis=0)
    den = np.einsum("lnm,lnm->m", steering.conj(), sinv_a).real
    return num, den, sinv_y, chol


def _evidence_from_solves(chol, sinv_y, y) -> float:
    """sum_l [ -log det Sigma_l - y_l^H Sigma_l^-1 y_l ], real."""
    logdet = 2.0 * np.log(np.einsum("lnn->ln", chol).real).sum()
    quad = np.einsum("nl,ln->", y.conj(), sinv_y).real
    return float(-logdet - quad)


def tl_sbl_gamma_update(
    state: SblState, block: SnapshotBlock, grid: TrajectoryGrid, geom: ArrayGeometry
) -> np.ndarray:
    """One raw fixed-point update of the full-grid gamma vector.

    The multiplicative ratio is non-negative, so gamma stays non-negative and
    exact zeros stay zero. Flooring/pruning is the run loop's job.
    """
    gamma = _check_gamma(state.gamma, grid)
    steering = trajectory_grid_steering(geom, grid, block.num_snapshots)
    num, den, _, _ = _update_terms(steering, state.per_snapshot_cov, block.y)
    out = np.zeros(grid.size)
    valid = grid.valid_flat
    out[valid] = gamma[valid] * num / den
    return out


def log_evidence(state: SblState, block: SnapshotBlock) -> float:
    """Gaussian log-evidence of the block under the state's covariances,
    up to the additive constant -NL log pi."""
    cov = np.asarray(state.per_snapshot_cov)
    chol = np.linalg.cholesky(cov)
    sinv_y = np.linalg.solve(cov, block.y.T[:, :, None])[..., 0]
    return _evidence_from_solves(chol, sinv_y, block.y)


class _Kernel:
    """Per-iteration workhorse over the current active steering columns.

    Keeps the steering tensor, its conjugate transpose, and a scale buffer
    alive across iterations so the hot loop allocates as little as possible;
    all heavy steps are batched BLAS over the L snapshot blocks.
    """

    def __init__(self, steering: np.ndarray, y: np.ndarray, noise_variance: float):
        self.y_cols = np.ascontiguousarray(y.T)[:, :, None]  # (L, N, 1)
        self.sigma2 = noise_variance
        self.eye = np.eye(steering.shape[1])
        self._load(steering)

    def _load(self, steering: np.ndarray):
        self.A = np.ascontiguousarray(steering)
        self.A_H = np.ascontiguousarray(self.A.conj().transpose(0, 2, 1))
        self._scaled = np.empty_like(self.A)

    def compact(self, keep: np.ndarray):
        self._load(self.A[:, :, keep])

    def terms(self, gamma_active: np.ndarray):
        """num, den, logdet, quad for the covariances induced by gamma.

        Sigma_l^-1 is applied through its Cholesky factor (z = R^-1 a per
        column); the factor certifies positive-definiteness as a side effect.
        """
        np.multiply(self.A, gamma_active[None, None, :], out=self._scaled)
        cov = self._scaled @ self.A_H
        cov += self.sigma2 * self.eye[None]
        chol = np.linalg.cholesky(cov)
        chol_inv = np.linalg.solve(chol, np.broadcast_to(self.eye, cov.shape).copy())
        z = chol_inv @ self.A
        w = (chol_inv @ self.y_cols)[..., 0]  # (L, N) = R^-1 y_l
        den = np.einsum("lnm,lnm->m", z.real, z.real) + np.einsum("lnm,lnm->m", z.imag, z.imag)
        proj = np.einsum("lnm,ln->lm", z, w.conj())  # conj of a_lm^H Sigma_l^-1 y_l
        num = (proj.real**2 + proj.imag**2).sum(axis=0)
        logdet = 2.0 * np.log(np.einsum("lnn->ln", chol).real).sum()
        quad = float((w.real**2 + w.imag**2).sum())
        return num, den, float(-logdet - quad)


def _fixed_point_loop(steering, y, config: SblConfig, record_history: bool):
    """Shared TL/static iteration: returns (gamma, diag) over the columns of
    `steering`, pruning columns whose gamma hits the floor.

    `steering` is (L, N, M_active); the static case passes the same matrix
    for every l (a broadcast view keeps that cheap until materialized here).
    """
    m_total = steering.shape[2]
    gamma = np.ones(m_total)
    active = np.arange(m_total)
    kernel = _Kernel(steering, y, config.noise_variance)
    evidence = []
    max_changes = []
    history = [] if record_history else None
    converged = False
    iteration = 0

    for iteration in range(1, config.max_iterations + 1):
        num, den, ev = kernel.terms(gamma[active])
        evidence.append(ev)

        old = gamma[active]
        new = old * num / den
        new[new < config.gamma_floor] = 0.0  # prune: frozen at exactly zero
        rel_change = float(np.max(np.abs(new - old) / (old + config.gamma_floor))) if old.size else 0.0
        gamma[active] = new
        max_changes.append(rel_change)
        if record_history:
            full = np.zeros(m_total)
            full[active] = new
            history.append(full)

        if np.any(new == 0.0):
            keep = np.flatnonzero(gamma[active] > 0.0)
            # compact lazily: re-slicing the big steering tensor costs a copy
            if keep.size < 0.8 * active.size:
                active = active[keep]
                kernel.compact(keep)
        if rel_change < config.convergence_tol:
            converged = True
            break

    # evidence of the final iterate, so the trace brackets every gamma
    evidence.append(kernel.terms(gamma[active])[2])

    diag = {
        "iterations": iteration,
        "converged": converged,
        "evidence": np.array(evidence),
        "max_changes": np.array(max_changes),
        "history": history,
    }
    return gamma, diag


def run_tl_sbl(
    block: SnapshotBlock,
    grid: TrajectoryGrid,
    geom: ArrayGeometry,
    config: SblConfig,
    num_estimates: int | None = None,
    steering: np.ndarray | None = None,
    record_history: bool = False,
) -> SblResult:
    """Fixed-point TL-SBL over a trajectory grid.

    Iterates assemble -> update until the largest relative gamma change drops
    below config.convergence_tol or max_iterations is hit. Estimates are the
    strict local maxima of the final gamma surface (top num_estimates, or all
    when None), with near-duplicate tracks suppressed: before convergence
    prunes it, one source's gamma mass often straddles two cells of the same
    trajectory ridge, and both can be strict maxima. Pass a precomputed
    `steering` tensor (from trajectory_grid_steering) when calling repeatedly
    on one grid.
    """
    if block.y.shape[0] != geom.num_sensors:
        raise ValueError("block sensor count does not match geometry")
    if steering is None:
        steering = trajectory_grid_steering(geom, grid, block.num_snapshots)
    gamma_valid, diag = _fixed_point_loop(steering, block.y, config, record_history)

    gamma_full = np.zeros(grid.size)
    gamma_full[grid.valid_flat] = gamma_valid
    gamma_map = gamma_full.reshape(grid.shape)
    k = grid.size if num_estimates is None else num_estimates
    peaks = pick_peaks_2d(
        Spectrum2D(grid=grid, power=gamma_map), k, min_separation=PEAK_MIN_SEPARATION
    )
    estimates = [
        TrajectoryEstimate(params=p, weight=float(gamma_map[_grid_pos(grid, p)])) for p in peaks
    ]
    history = None
    if record_history:
        history = []
        for h in diag["history"]:
            full = np.zeros(grid.size)
            full[grid.valid_flat] = h
            history.append(full.reshape(grid.shape))
    return SblResult(
        gamma=gamma_map,
        estimates=estimates,
        iterations=diag["iterations"],
        converged=diag["converged"],
        evidence_trace=diag["evidence"],
        max_change_trace=diag["max_changes"],
        history=history,
    )


def _grid_pos(grid: TrajectoryGrid, params: TrajectoryParams) -> tuple[int, int]:
    i1 = int(np.searchsorted(grid.phis, params.phi))
    i2 = int(np.searchsorted(grid.alphas, params.alpha))
    return i1, i2


def run_static_sbl(
    block: SnapshotBlock,
    grid: AngleGrid,
    geom: ArrayGeometry,
    config: SblConfig,
    num_estimates: int | None = None,
    record_history: bool = False,
) -> SblResult:
    """Fixed-point MMV-SBL over a static DOA grid.

    The update is the alpha = 0 specialization of TL-SBL's: one covariance
    Sigma = sigma^2 I + A diag(gamma) A^H is shared by all snapshots, and the
    ratio uses the per-snapshot average in numerator and denominator alike.
    Estimates carry alpha = 0 so downstream metrics treat all methods alike.
    """
    if block.y.shape[0] != geom.num_sensors:
        raise ValueError("block sensor count does not match geometry")
    A = steering_matrix(geom, grid.thetas)
    L = block.num_snapshots
    steering = np.broadcast_to(A[None, :, :], (L, *A.shape))
    gamma, diag = _fixed_point_loop(steering, block.y, config, record_history)

    k = len(grid) if num_estimates is None else num_estimates
    peak_angles = pick_peaks_1d(
        Spectrum1D(grid=grid, power=gamma), k, min_separation=PEAK_MIN_SEPARATION
    )
    estimates = []
    for theta in peak_angles:
        j = int(np.searchsorted(grid.thetas, theta))
        estimates.append(
            TrajectoryEstimate(params=TrajectoryParams(theta, 0.0), weight=float(gamma[j]))
        )
    return SblResult(
        gamma=gamma,
        estimates=estimates,
        iterations=diag["iterations"],
        converged=diag["converged"],
        evidence_trace=diag["evidence"],
        max_change_trace=diag["max_changes"],
        history=diag["history"],
    )


def write_sbl_diagnostics(result: SblResult, path) -> Path:
    """Per-iteration CSV: iteration, max relative gamma change, evidence.

    The evidence column holds the evidence of the gamma the iteration started
    from; the final row reports the returned gamma with an empty change.
    """
    path = Path(path)
    with open(path, "w") as f:
        f.write(f"# converged={str(result.converged).lower()} after {result.iterations} iterations\n")
        f.write("iteration,max_gamma_change,evidence\n")
        for i, change in enumerate(result.max_change_trace, start=1):
            f.write(f"{i},{FLOAT_FMT % change},{FLOAT_FMT % result.evidence_trace[i - 1]}\n")
        f.write(f"final,,{FLOAT_FMT % result.evidence_trace[-1]}\n")
    return path
