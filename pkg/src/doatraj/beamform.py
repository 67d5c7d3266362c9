"""Conventional beamforming over static angles and over linear DOA trajectories.

Both spectra are the same per-snapshot matched filter
P = (1/L) sum_l |a_l^H y_l|^2; the static spectrum just uses the same
steering vector at every snapshot. They share one kernel so that the
trajectory spectrum restricted to alpha = 0 reproduces the static spectrum
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import AngleGrid, ArrayGeometry, TrajectoryGrid, TrajectoryParams, snapshot_steering_tensor
from .simulate import FLOAT_FMT, SnapshotBlock


@dataclass(frozen=True)
class Spectrum1D:
    """Angular power spectrum on a static DOA grid."""

    grid: AngleGrid
    power: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power, dtype=float)
        object.__setattr__(self, "power", power)
        if power.shape != (len(self.grid),):
            raise ValueError("power length must match grid")
        if power.min() < 0:
            raise ValueError("spectrum power must be non-negative")


@dataclass(frozen=True)
class Spectrum2D:
    """Power over a (phi, alpha) trajectory grid; invalid cells hold 0."""

    grid: TrajectoryGrid
    power: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power, dtype=float)
        object.__setattr__(self, "power", power)
        if power.shape != self.grid.shape:
            raise ValueError("power shape must match grid shape")
        if power.min() < 0:
            raise ValueError("spectrum power must be non-negative")


def _per_snapshot_power(y: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """(1/L) sum_l |steering[l,:,m]^H y[:,l]|^2 for every candidate m."""
    L = y.shape[1]
    inner = np.einsum("lnm,nl->lm", steering.conj(), y)
    return (inner.real**2 + inner.imag**2).sum(axis=0) / L


def cbf_spectrum(block: SnapshotBlock, grid: AngleGrid, geom: ArrayGeometry) -> Spectrum1D:
    """Conventional beamformer power P(theta) = (1/L) sum_l |a(theta)^H y_l|^2.

    Computed as the alpha = 0 slice of the trajectory spectrum so the two
    agree bit for bit (they are the same formula; sharing the code path keeps
    the floating-point evaluation identical too).
    """
    static = TrajectoryGrid(grid.thetas, np.array([0.0]))
    spec2 = tl_cbf_spectrum(block, static, geom)
    return Spectrum1D(grid=grid, power=spec2.power[:, 0])


def tl_cbf_spectrum(block: SnapshotBlock, grid: TrajectoryGrid, geom: ArrayGeometry) -> Spectrum2D:
    """Trajectory beamformer P(phi, alpha) = (1/L) sum_l |a_l(phi, alpha)^H y_l|^2.

    a_l(phi, alpha) steers to the snapshot-l DOA of the candidate trajectory.
    Grid cells whose trajectory exits the visible region get power 0 and are
    never offered to peak picking.
    """
    if block.y.shape[0] != geom.num_sensors:
        raise ValueError("block sensor count does not match geometry")
    L = block.num_snapshots
    valid = grid.valid_flat
    thetas = grid.snapshot_thetas(L, valid)
    steering = snapshot_steering_tensor(geom, thetas)
    power = np.zeros(grid.size)
    power[valid] = _per_snapshot_power(block.y, steering)
    return Spectrum2D(grid=grid, power=power.reshape(grid.shape))


def _strict_local_maxima_1d(power: np.ndarray) -> np.ndarray:
    """Indices that strictly exceed both available neighbors."""
    left = np.empty(power.size, dtype=bool)
    right = np.empty(power.size, dtype=bool)
    left[0] = True
    left[1:] = power[1:] > power[:-1]
    right[-1] = True
    right[:-1] = power[:-1] > power[1:]
    return np.flatnonzero(left & right)


# Track separation below which the estimation pipeline treats two candidate
# peaks as duplicates of one source: trajectory dictionaries are highly
# correlated along a ridge of near-identical tracks (e.g. (phi, alpha) vs
# (phi+1, alpha-2), whose DOA tracks stay 0.5 degrees apart on average), and
# noise easily splits one source into two strict local maxima there.  The
# pickers themselves default to no suppression -- a merged main lobe from two
# genuinely unresolved sources still yields one peak either way, and that
# baseline weakness should stay visible -- but estimate extraction opts in so
# a duplicate never consumes another source's estimate slot.
PEAK_MIN_SEPARATION = 2.0


def _mean_track_distance(p: TrajectoryParams, q: TrajectoryParams) -> float:
    """Mean absolute DOA difference between two linear tracks over a block.

    Uses the continuum limit of (1/L) sum_l |delta_phi + (l-1)/(L-1) delta_alpha|,
    i.e. the integral over [0, 1]; the picker needs a block-length-free scale,
    and for L >= 2 the discrete mean differs by at most delta_alpha/(2(L-1)).
    """
    a = p.phi - q.phi
    b = p.alpha - q.alpha
    end = a + b
    if a * end >= 0.0:  # no sign change: |mean of a linear function|
        return abs(a + 0.5 * b)
    return (a * a + end * end) / (2.0 * abs(b))


def pick_peaks_1d(spectrum: Spectrum1D, k: int, min_separation: float = 0.0) -> list[float]:
    """Up to k grid angles that are strict local maxima, strongest first.

    Boundary points compare only against their one available neighbor; equal
    neighbors disqualify both (a constant spectrum has no peaks). Ties in
    power are broken toward the lower grid index. With a positive
    min_separation, candidates closer than that many degrees to an
    already-selected peak are skipped as duplicates of the same source; the
    default keeps every strict maximum.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = _strict_local_maxima_1d(spectrum.power)
    order = np.lexsort((idx, -spectrum.power[idx]))
    picked: list[float] = []
    for i in idx[order]:
        theta = float(spectrum.grid.thetas[i])
        if any(abs(theta - other) < min_separation for other in picked):
            continue
        picked.append(theta)
        if len(picked) == k:
            break
    return picked


def _strict_local_maxima_2d(power: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Flat indices of valid cells strictly above all valid 8-neighbors.

    Invalid cells are treated like points beyond the grid edge: they are
    neither candidates nor comparison neighbors.
    """
    m1, m2 = power.shape
    is_max = valid.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            src_i = slice(max(0, -di), m1 - max(0, di))
            src_j = slice(max(0, -dj), m2 - max(0, dj))
            dst_i = slice(max(0, di), m1 - max(0, -di))
            dst_j = slice(max(0, dj), m2 - max(0, -dj))
            beaten = power[dst_i, dst_j] <= power[src_i, src_j]
            is_max[dst_i, dst_j] &= ~(beaten & valid[src_i, src_j])
    return np.flatnonzero(is_max.ravel())


def pick_peaks_2d(
    spectrum: Spectrum2D, k: int, min_separation: float = 0.0
) -> list[TrajectoryParams]:
    """Up to k trajectory grid points that are strict 8-neighborhood maxima.

    Ordered by descending power; ties broken by lower row-major flat index.
    With a positive min_separation, candidates whose DOA track stays within
    that many degrees (mean over the block) of an already-selected peak's
    track are skipped as duplicates of the same source; the default keeps
    every strict maximum. Returns fewer than k entries when the surface runs
    out of distinct maxima.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = _strict_local_maxima_2d(spectrum.power, spectrum.grid.valid_mask)
    flat_power = spectrum.power.ravel()
    order = np.lexsort((idx, -flat_power[idx]))
    picked: list[TrajectoryParams] = []
    for m in idx[order]:
        params = spectrum.grid.params_at(int(m))
        if any(_mean_track_distance(params, other) < min_separation for other in picked):
            continue
        picked.append(params)
        if len(picked) == k:
            break
    return picked


def write_spectrum_1d(spectrum: Spectrum1D, path, label: str = "cbf") -> Path:
    """CSV export: theta_deg, power; one comment line naming the grid."""
    path = Path(path)
    g = spectrum.grid.thetas
    with open(path, "w") as f:
        f.write(f"# {label} power; theta grid [{FLOAT_FMT % g[0]}, {FLOAT_FMT % g[-1]}], {g.size} points\n")
        f.write("theta_deg,power\n")
        for theta, p in zip(g, spectrum.power):
            f.write(f"{FLOAT_FMT % theta},{FLOAT_FMT % p}\n")
    return path


def write_spectrum_2d(spectrum: Spectrum2D, path, label: str = "tl-cbf") -> Path:
    """CSV export: rows are phi, columns are alpha; invalid cells hold 0."""
    path = Path(path)
    g = spectrum.grid
    with open(path, "w") as f:
        f.write(
            f"# {label} power; rows: phi grid [{FLOAT_FMT % g.phis[0]}, {FLOAT_FMT % g.phis[-1]}] "
            f"({g.phis.size} points); columns: alpha grid [{FLOAT_FMT % g.alphas[0]}, "
            f"{FLOAT_FMT % g.alphas[-1]}] ({g.alphas.size} points); invalid trajectories 0\n"
        )
        f.write("phi_deg," + ",".join(f"alpha={FLOAT_FMT % a}" for a in g.alphas) + "\n")
        for i, phi in enumerate(g.phis):
            row = ",".join(FLOAT_FMT % p for p in spectrum.power[i])
            f.write(f"{FLOAT_FMT % phi},{row}\n")
    return path
