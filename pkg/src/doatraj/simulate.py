"""Synthetic multi-block array data for static and moving narrowband sources.

Each block of L snapshots is y_l = sum_k a(theta_k,l) s_k,l + w_l with
source amplitudes and noise drawn i.i.d. circular complex Gaussian. Source
DOAs follow either per-block linear trajectories (phi, alpha) or a continuous
function of normalized scenario time sampled once per snapshot.

Randomness is split into independent substreams keyed by
(seed, kind, stream, block) so that adding or removing one source never
changes the draws of another source or of the noise: simulating sources
jointly is bitwise the sum of simulating them alone plus the noise block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .geometry import ArrayGeometry, TrajectoryParams, steering_matrix

_SOURCE_STREAM = 1  # RNG substream tags; see module docstring
_NOISE_STREAM = 2

FLOAT_FMT = "%.17g"  # round-trips float64 exactly; shared by all CSV writers

Trajectory = Union[TrajectoryParams, Sequence[TrajectoryParams], Callable[[float], float]]


def noise_variance_from_snr(snr_db: float, reference_power: float = 1.0) -> float:
    """Noise variance for a per-sensor, per-snapshot SNR in dB.

    SNR_dB = 10 log10(P / sigma^2) with P the (unit by default) source power.
    snr_db = inf requests noiseless data (sigma^2 = 0).
    """
    if np.isposinf(snr_db):
        return 0.0
    return reference_power * 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class SourceSpec:
    """One narrowband source: its DOA trajectory, power, and RNG stream.

    trajectory may be a single TrajectoryParams (reused every block), a
    sequence of per-block TrajectoryParams, or a callable mapping normalized
    scenario time in [0, 1] to DOA degrees, sampled once per snapshot.
    stream identifies the source's RNG substream; it defaults to the source's
    position in the scenario list, and keeping it fixed makes a source's
    amplitude draws independent of what other sources are present.
    """

    trajectory: Trajectory
    power: float = 1.0
    stream: int | None = None

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"source power must be > 0, got {self.power}")


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: ArrayGeometry
    sources: tuple[SourceSpec, ...]
    num_blocks: int
    snapshots_per_block: int
    snr_db: float
    rng_seed: int

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(self.sources) < 1:
            raise ValueError("need at least one source")
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.snapshots_per_block < 2:
            raise ValueError("snapshots_per_block must be >= 2")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def noise_variance(self) -> float:
        return noise_variance_from_snr(self.snr_db)

    def source_stream(self, k: int) -> int:
        s = self.sources[k].stream
        return k if s is None else s


@dataclass(frozen=True)
class SnapshotBlock:
    """One block of L array snapshots: y is N x L, column l is snapshot l."""

    y: np.ndarray
    block_index: int

    def __post_init__(self):
        y = np.asarray(self.y)
        object.__setattr__(self, "y", y)
        if y.ndim != 2:
            raise ValueError("block data must be an N x L matrix")
        if self.block_index < 0:
            raise ValueError("block_index must be non-negative")

    @property
    def num_snapshots(self) -> int:
        return self.y.shape[1]


@dataclass
class ScenarioData:
    """Simulated blocks plus the per-snapshot ground truth that produced them.

    truth has shape (num_blocks, K, L): true DOA of source k at snapshot l of
    block b, in degrees. meta is the JSON-ready config echo written to disk.
    """

    geometry: ArrayGeometry
    blocks: list[SnapshotBlock]
    truth: np.ndarray
    noise_variance: float
    snr_db: float
    rng_seed: int
    meta: dict = field(default_factory=dict)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def num_sources(self) -> int:
        return self.truth.shape[1]

    @property
    def snapshots_per_block(self) -> int:
        return self.truth.shape[2]


def _snapshot_times(num_blocks: int, snapshots_per_block: int) -> np.ndarray:
    """Normalized time of every snapshot, (B, L), spanning [0, 1] inclusive."""
    total = num_blocks * snapshots_per_block
    return (np.arange(total) / (total - 1)).reshape(num_blocks, snapshots_per_block)


def _source_doas(config: ScenarioConfig, k: int) -> np.ndarray:
    """True DOA table (B, L) in degrees for source k; validates the range."""
    B, L = config.num_blocks, config.snapshots_per_block
    traj = config.sources[k].trajectory
    if isinstance(traj, TrajectoryParams):
        doas = np.broadcast_to(traj.doas(L), (B, L)).copy()
    elif callable(traj):
        doas = np.vectorize(traj, otypes=[float])(_snapshot_times(B, L))
    else:
        per_block = list(traj)
        if len(per_block) != B:
            raise ValueError(
                f"source {k}: got {len(per_block)} per-block trajectories for {B} blocks"
            )
        doas = np.stack([p.doas(L) for p in per_block])
    if doas.min() < -90.0 or doas.max() > 90.0:
        raise ValueError(f"source {k}: trajectory leaves the visible region [-90, 90]")
    return doas


def _amplitude_rng(seed: int, stream: int, block_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _SOURCE_STREAM, stream, block_index]))


def _noise_rng(seed: int, block_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _NOISE_STREAM, 0, block_index]))


def _complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_block(config: ScenarioConfig, block_index: int) -> tuple[SnapshotBlock, np.ndarray]:
    """Simulate one block; returns (block, truth) with truth of shape (K, L).

    Deterministic given (config.rng_seed, block_index): each source draws its
    amplitudes from its own substream and the noise from a separate one.
    """
    if not 0 <= block_index < config.num_blocks:
        raise ValueError(f"block_index {block_index} outside 0..{config.num_blocks - 1}")
    geom = config.geometry
    L = config.snapshots_per_block
    truth = np.empty((config.num_sources, L))
    y = np.zeros((geom.num_sensors, L), dtype=complex)
    for k, src in enumerate(config.sources):
        doas = _source_doas(config, k)[block_index]
        truth[k] = doas
        rng = _amplitude_rng(config.rng_seed, config.source_stream(k), block_index)
        amplitudes = _complex_gaussian(rng, L, src.power)
        y += steering_matrix(geom, doas) * amplitudes[None, :]
    sigma2 = config.noise_variance
    if sigma2 > 0:
        y += _complex_gaussian(_noise_rng(config.rng_seed, block_index), y.shape, sigma2)
    return SnapshotBlock(y=y, block_index=block_index), truth


def simulate_trajectory_scenario(config: ScenarioConfig) -> ScenarioData:
    """Simulate all blocks of a scenario (consecutive, non-overlapping).

    The returned truth table records the true DOA of every
    (block, source, snapshot); metrics consume it directly rather than
    re-deriving trajectories.
    """
    blocks = []
    truth = np.empty((config.num_blocks, config.num_sources, config.snapshots_per_block))
    for b in range(config.num_blocks):
        block, t = simulate_block(config, b)
        blocks.append(block)
        truth[b] = t
    return ScenarioData(
        geometry=config.geometry,
        blocks=blocks,
        truth=truth,
        noise_variance=config.noise_variance,
        snr_db=config.snr_db,
        rng_seed=config.rng_seed,
        meta=describe_config(config),
    )


def describe_config(config: ScenarioConfig) -> dict:
    """JSON-ready echo of a scenario config, with every derived value resolved."""

    def describe_trajectory(traj: Trajectory):
        if isinstance(traj, TrajectoryParams):
            return {"kind": "linear", "phi": traj.phi, "alpha": traj.alpha}
        if callable(traj):
            name = getattr(traj, "__name__", None) or type(traj).__name__
            return {"kind": "sampled", "function": name}
        return {
            "kind": "per_block",
            "params": [{"phi": p.phi, "alpha": p.alpha} for p in traj],
        }

    return {
        "geometry": {
            "num_sensors": config.geometry.num_sensors,
            "spacing_over_wavelength": config.geometry.spacing_over_wavelength,
        },
        "sources": [
            {
                "trajectory": describe_trajectory(s.trajectory),
                "power": s.power,
                "stream": config.source_stream(k),
            }
            for k, s in enumerate(config.sources)
        ],
        "num_blocks": config.num_blocks,
        "snapshots_per_block": config.snapshots_per_block,
        "snr_db": config.snr_db,
        "noise_variance": config.noise_variance,
        "rng_seed": config.rng_seed,
    }


# ---------------------------------------------------------------------------
# Scenario files: scenario.json header + per-block CSV + ground-truth CSV.


def _block_filename(block_index: int) -> str:
    return f"block_{block_index:04d}.csv"


def write_scenario(data: ScenarioData, out_dir) -> Path:
    """Write a scenario directory: scenario.json, block_*.csv, truth.csv.

    Block CSV layout (documented in each file's header line): row l-1 holds
    snapshot l as re(y_0), im(y_0), ..., re(y_{N-1}), im(y_{N-1}).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    N = data.geometry.num_sensors
    header = dict(data.meta) if data.meta else {}
    header.update(
        {
            "format": "doatraj-scenario-v1",
            "geometry": {
                "num_sensors": N,
                "spacing_over_wavelength": data.geometry.spacing_over_wavelength,
            },
            "num_blocks": data.num_blocks,
            "snapshots_per_block": data.snapshots_per_block,
            "num_sources": data.num_sources,
            "snr_db": data.snr_db,
            "noise_variance": data.noise_variance,
            "rng_seed": data.rng_seed,
            "block_files": [_block_filename(b.block_index) for b in data.blocks],
            "truth_file": "truth.csv",
        }
    )
    (out / "scenario.json").write_text(_dump_json(header) + "\n")

    comment = (
        f"# rows: snapshots l=1..{data.snapshots_per_block}; "
        f"columns: re(sensor 0), im(sensor 0), ..., re(sensor {N - 1}), im(sensor {N - 1})"
    )
    for block in data.blocks:
        interleaved = np.empty((block.y.shape[1], 2 * N))
        interleaved[:, 0::2] = block.y.real.T
        interleaved[:, 1::2] = block.y.imag.T
        np.savetxt(
            out / _block_filename(block.block_index),
            interleaved,
            fmt=FLOAT_FMT,
            delimiter=",",
            header=comment,
            comments="",
        )

    with open(out / "truth.csv", "w") as f:
        f.write("# block is 0-based, snapshot is 1-based, source is 0-based\n")
        f.write("block,snapshot,source,theta_deg\n")
        B, K, L = data.truth.shape
        for b in range(B):
            for l in range(L):
                for k in range(K):
                    f.write(f"{b},{l + 1},{k},{FLOAT_FMT % data.truth[b, k, l]}\n")
    return out


def read_scenario(scenario_dir) -> ScenarioData:
    """Read back a directory written by write_scenario."""
    root = Path(scenario_dir)
    header = json.loads((root / "scenario.json").read_text())
    if header.get("format") != "doatraj-scenario-v1":
        raise ValueError(f"{root}: not a doatraj scenario directory")
    geom = ArrayGeometry(
        num_sensors=header["geometry"]["num_sensors"],
        spacing_over_wavelength=header["geometry"]["spacing_over_wavelength"],
    )
    N = geom.num_sensors
    B = header["num_blocks"]
    K = header["num_sources"]
    L = header["snapshots_per_block"]

    blocks = []
    for b, name in enumerate(header["block_files"]):
        raw = np.loadtxt(root / name, delimiter=",", skiprows=1, ndmin=2)
        if raw.shape != (L, 2 * N):
            raise ValueError(f"{name}: expected {L}x{2 * N} samples, got {raw.shape}")
        # match the simulator's memory layout so downstream BLAS reductions
        # run in the same order and reproduce results bit for bit
        y = np.ascontiguousarray((raw[:, 0::2] + 1j * raw[:, 1::2]).T)
        blocks.append(SnapshotBlock(y=y, block_index=b))

    truth = np.empty((B, K, L))
    truth.fill(np.nan)
    rows = np.loadtxt(root / header["truth_file"], delimiter=",", skiprows=2, ndmin=2)
    for b, l, k, theta in rows:
        truth[int(b), int(k), int(l) - 1] = theta
    if np.isnan(truth).any():
        raise ValueError("truth.csv does not cover every (block, source, snapshot)")

    return ScenarioData(
        geometry=geom,
        blocks=blocks,
        truth=truth,
        noise_variance=header["noise_variance"],
        snr_db=header["snr_db"],
        rng_seed=header["rng_seed"],
        meta=header,
    )


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)
