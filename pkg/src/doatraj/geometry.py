"""Uniform linear array geometry, steering vectors, and DOA trajectory grids.

Angles are handled in degrees everywhere and converted to radians only
inside trigonometric evaluation. The visible region is [-90, 90] degrees
relative to array broadside.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

VISIBLE_DEG = 90.0
_ANGLE_SLACK = 1e-9  # tolerate float round-off at the +-90 boundary


def _check_visible(theta_deg: float, what: str = "theta") -> None:
    if not (-VISIBLE_DEG - _ANGLE_SLACK <= theta_deg <= VISIBLE_DEG + _ANGLE_SLACK):
        raise ValueError(f"{what} = {theta_deg} deg outside visible region [-90, 90]")


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array described by sensor count and spacing in wavelengths.

    Only the ratio d/lambda enters the narrowband steering model, so spacing
    is stored directly as that dimensionless number (0.5 = half-wavelength).
    """

    num_sensors: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.num_sensors < 2:
            raise ValueError(f"num_sensors must be >= 2, got {self.num_sensors}")
        if self.spacing_over_wavelength <= 0:
            raise ValueError(
                f"spacing_over_wavelength must be > 0, got {self.spacing_over_wavelength}"
            )


@dataclass(frozen=True)
class TrajectoryParams:
    """Linear DOA trajectory within one block: phi at the first snapshot,
    total change alpha over the block.

    The per-snapshot DOA is ``theta_l = phi + (l-1)/(L-1) * alpha`` for
    ``l = 1..L``. Both endpoints (phi and phi + alpha) must stay inside the
    visible region; since the path is linear this keeps every snapshot valid
    for any block length.
    """

    phi: float
    alpha: float

    def __post_init__(self):
        _check_visible(self.phi, "phi")
        _check_visible(self.phi + self.alpha, "phi + alpha")

    def doas(self, num_snapshots: int) -> np.ndarray:
        """Per-snapshot DOAs (degrees) over a block of length L."""
        return self.phi + snapshot_fractions(num_snapshots) * self.alpha


def snapshot_fractions(num_snapshots: int) -> np.ndarray:
    """The ramp (l-1)/(L-1) for l = 1..L; 0 at the first snapshot, 1 at the last."""
    if num_snapshots < 2:
        raise ValueError(f"block length must be >= 2, got {num_snapshots}")
    return np.arange(num_snapshots) / (num_snapshots - 1)


def trajectory_doa(params: TrajectoryParams, l: int, num_snapshots: int) -> float:
    """DOA (degrees) at 1-based snapshot ``l`` of an ``L``-snapshot block."""
    if num_snapshots < 2:
        raise ValueError(f"block length must be >= 2, got {num_snapshots}")
    if not 1 <= l <= num_snapshots:
        raise ValueError(f"snapshot index {l} outside 1..{num_snapshots}")
    return params.phi + (l - 1) / (num_snapshots - 1) * params.alpha


def steering_vector(geom: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Steering vector of an N-sensor ULA toward ``theta_deg``.

    Entry n (0-based) is ``exp(2j pi n (d/lambda) sin theta)``; the first
    sensor is the phase reference, so entry 0 is always 1.
    """
    _check_visible(theta_deg)
    n = np.arange(geom.num_sensors)
    phase = 2.0 * np.pi * geom.spacing_over_wavelength * np.sin(np.radians(theta_deg))
    return np.exp(1j * phase * n)


def steering_matrix(geom: ArrayGeometry, thetas_deg) -> np.ndarray:
    """Stack steering vectors column-wise: (N, M) for M candidate DOAs."""
    thetas = np.asarray(thetas_deg, dtype=float)
    if thetas.size and (
        thetas.min() < -VISIBLE_DEG - _ANGLE_SLACK or thetas.max() > VISIBLE_DEG + _ANGLE_SLACK
    ):
        raise ValueError("steering_matrix: some angles outside visible region")
    n = np.arange(geom.num_sensors)
    phase = 2.0 * np.pi * geom.spacing_over_wavelength * np.sin(np.radians(thetas))
    return np.exp(1j * np.outer(n, phase))


def snapshot_steering_tensor(geom: ArrayGeometry, thetas_lm: np.ndarray) -> np.ndarray:
    """Per-snapshot steering vectors for per-snapshot angles.

    Parameters
    ----------
    thetas_lm : (L, M) array
        Angle of candidate m at snapshot l, degrees.

    Returns
    -------
    (L, N, M) complex array; ``[l, :, m]`` is the steering vector toward
    ``thetas_lm[l, m]``.
    """
    thetas = np.asarray(thetas_lm, dtype=float)
    if thetas.size and (
        thetas.min() < -VISIBLE_DEG - _ANGLE_SLACK or thetas.max() > VISIBLE_DEG + _ANGLE_SLACK
    ):
        raise ValueError("snapshot_steering_tensor: some angles outside visible region")
    n = np.arange(geom.num_sensors)
    phase = 2.0 * np.pi * geom.spacing_over_wavelength * np.sin(np.radians(thetas))
    return np.exp(1j * phase[:, None, :] * n[None, :, None])


def trajectory_steering_matrix(
    geom: ArrayGeometry, params: TrajectoryParams, num_snapshots: int
) -> np.ndarray:
    """Matrix of steering vectors along a linear trajectory: column l is the
    steering vector at the snapshot-l DOA. Shape (N, L)."""
    thetas = params.doas(num_snapshots)
    return steering_matrix(geom, thetas)


@dataclass(frozen=True)
class AngleGrid:
    """Strictly increasing grid of candidate static DOAs (degrees)."""

    thetas: np.ndarray

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        object.__setattr__(self, "thetas", thetas)
        if thetas.ndim != 1 or thetas.size == 0:
            raise ValueError("AngleGrid needs a non-empty 1-D list of angles")
        if np.any(np.diff(thetas) <= 0):
            raise ValueError("AngleGrid angles must be strictly increasing")
        if thetas[0] < -VISIBLE_DEG or thetas[-1] > VISIBLE_DEG:
            raise ValueError("AngleGrid angles must lie in [-90, 90]")

    def __len__(self) -> int:
        return self.thetas.size

    @classmethod
    def uniform(cls, start: float, stop: float, step: float) -> "AngleGrid":
        count = int(round((stop - start) / step)) + 1
        return cls(start + step * np.arange(count))


@dataclass(frozen=True)
class TrajectoryGrid:
    """Rectangular (phi, alpha) search grid of candidate linear trajectories.

    The flat index is row-major over phi then alpha: ``m = i1 * M2 + i2``
    for phi index i1 and alpha index i2. Cells whose trajectory would leave
    the visible region are kept in the rectangle (the flat index stays
    bijective) but marked invalid; estimators skip them rather than clamp.
    """

    phis: np.ndarray
    alphas: np.ndarray

    def __post_init__(self):
        phis = np.asarray(self.phis, dtype=float)
        alphas = np.asarray(self.alphas, dtype=float)
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "alphas", alphas)
        for name, arr in (("phis", phis), ("alphas", alphas)):
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError(f"TrajectoryGrid {name} must be non-empty and 1-D")
            if np.any(np.diff(arr) <= 0):
                raise ValueError(f"TrajectoryGrid {name} must be strictly increasing")
        if phis[0] < -VISIBLE_DEG or phis[-1] > VISIBLE_DEG:
            raise ValueError("TrajectoryGrid phis must lie in [-90, 90]")

    @classmethod
    def uniform(
        cls,
        phi_start: float,
        phi_stop: float,
        phi_step: float,
        alpha_start: float,
        alpha_stop: float,
        alpha_step: float,
    ) -> "TrajectoryGrid":
        n_phi = int(round((phi_stop - phi_start) / phi_step)) + 1
        n_alpha = int(round((alpha_stop - alpha_start) / alpha_step)) + 1
        return cls(
            phi_start + phi_step * np.arange(n_phi),
            alpha_start + alpha_step * np.arange(n_alpha),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.phis.size, self.alphas.size

    @property
    def size(self) -> int:
        return self.phis.size * self.alphas.size

    def flat_index(self, phi_index: int, alpha_index: int) -> int:
        m1, m2 = self.shape
        if not (0 <= phi_index < m1 and 0 <= alpha_index < m2):
            raise IndexError(f"grid index ({phi_index}, {alpha_index}) out of range")
        return phi_index * m2 + alpha_index

    def unflatten(self, m: int) -> tuple[int, int]:
        if not 0 <= m < self.size:
            raise IndexError(f"flat index {m} out of range")
        m2 = self.alphas.size
        return divmod(m, m2)

    def params_at(self, m: int) -> TrajectoryParams:
        i1, i2 = self.unflatten(m)
        return TrajectoryParams(float(self.phis[i1]), float(self.alphas[i2]))

    @cached_property
    def valid_mask(self) -> np.ndarray:
        """(M1, M2) boolean mask of trajectories that stay inside [-90, 90]."""
        end = self.phis[:, None] + self.alphas[None, :]
        mask = (end >= -VISIBLE_DEG) & (end <= VISIBLE_DEG)
        mask.setflags(write=False)
        return mask

    @cached_property
    def valid_flat(self) -> np.ndarray:
        """Flat indices (row-major) of the valid cells."""
        idx = np.flatnonzero(self.valid_mask.ravel())
        idx.setflags(write=False)
        return idx

    def snapshot_thetas(self, num_snapshots: int, flat_indices=None) -> np.ndarray:
        """Per-snapshot DOAs (degrees) of grid trajectories.

        Returns (L, len(flat_indices)) for the requested cells, or the full
        (L, M1*M2) row-major table when ``flat_indices`` is None. Invalid
        cells are included in the full table; callers must mask them before
        asking for steering vectors.
        """
        frac = snapshot_fractions(num_snapshots)
        full = (
            self.phis[None, :, None] + frac[:, None, None] * self.alphas[None, None, :]
        ).reshape(num_snapshots, self.size)
        if flat_indices is None:
            return full
        return full[:, flat_indices]
