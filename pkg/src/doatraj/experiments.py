"""Built-in demonstration scenarios and experiment orchestration.

Four canned scenarios exercise every estimator: two single-block four-source
scenes (one on the search grid, one off it), a smooth single-source sweep
split into 31 blocks, and a two-source crossing scene scored on its
non-crossing regions.  `run_experiment` ties simulation, estimation, and
scoring together and writes the CSV/JSON artifact tree consumed by the
command line front end.  All artifacts are deterministic for a fixed seed:
floats are printed with FLOAT_FMT and JSON keys are sorted, so re-running a
config produces byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .beamform import (
    PEAK_MIN_SEPARATION,
    Spectrum1D,
    Spectrum2D,
    cbf_spectrum,
    pick_peaks_1d,
    pick_peaks_2d,
    tl_cbf_spectrum,
    write_spectrum_1d,
    write_spectrum_2d,
)
from .geometry import AngleGrid, ArrayGeometry, TrajectoryGrid, TrajectoryParams
from .metrics import (
    DEFAULT_CROSSING_THRESHOLD,
    associate_and_score,
    summarize_reports,
    write_report_csv,
)
from .sbl import (
    SblConfig,
    SblResult,
    TrajectoryEstimate,
    run_static_sbl,
    run_tl_sbl,
    trajectory_grid_steering,
    write_sbl_diagnostics,
)
from .simulate import (
    FLOAT_FMT,
    ScenarioConfig,
    ScenarioData,
    SourceSpec,
    describe_config,
    simulate_trajectory_scenario,
    write_scenario,
)

ALGORITHMS = ("cbf", "tl-cbf", "sbl", "tl-sbl")
EXAMPLE_IDS = (1, 2, 3, 4)

# SBL needs a positive noise variance; noiseless scenarios run against this
# small stand-in so the covariances stay invertible.
NOISELESS_SBL_VARIANCE = 1e-6


def default_theta_grid() -> AngleGrid:
    return AngleGrid.uniform(-90.0, 90.0, 1.0)


def default_trajectory_grid() -> TrajectoryGrid:
    return TrajectoryGrid.uniform(-90.0, 90.0, 1.0, -15.0, 15.0, 1.0)


# ---------------------------------------------------------------------------
# Built-in trajectories for the multi-block scenarios.


def _block_time_grid(num_blocks: int, snapshots_per_block: int) -> np.ndarray:
    """(B, L) table of the scenario-wide snapshot times in [0, 1]."""
    total = num_blocks * snapshots_per_block
    return (np.arange(total) / (total - 1)).reshape(num_blocks, snapshots_per_block)


def solve_sweep_amplitude(
    num_blocks: int, snapshots_per_block: int, max_block_change: float
) -> float:
    """Amplitude A such that theta(t) = c - A cos(2 pi t) changes by exactly
    `max_block_change` degrees within its steepest block.

    The per-block DOA range of the unit waveform is evaluated on the exact
    snapshot grid the simulator uses, so the constraint holds snapshot-for-
    snapshot, not just in the continuum limit.
    """
    unit = -np.cos(2.0 * np.pi * _block_time_grid(num_blocks, snapshots_per_block))
    widest = float((unit.max(axis=1) - unit.min(axis=1)).max())
    return max_block_change / widest


def example3_trajectory(num_blocks: int = 31, snapshots_per_block: int = 50):
    """Smooth single-source sweep: one full cosine period centred on -20
    degrees, scaled so the steepest block sweeps exactly 11.5 degrees.
    """
    amplitude = solve_sweep_amplitude(num_blocks, snapshots_per_block, 11.5)

    def smooth_sweep(t):
        return -20.0 - amplitude * np.cos(2.0 * np.pi * t)

    return smooth_sweep


def example4_trajectories():
    """Two smooth sinusoids that cross exactly once near mid-scenario.

    The fast source oscillates three times with up to ~8 degrees of motion
    inside the steepest blocks (what a static per-block estimator cannot
    model); the slow source descends through it so their separation dwells
    in the 10-16 degree band around the crossing, where a 10-sensor
    beamformer is resolution-limited but blocks still count toward the
    score.  Both stay within +/- 52 degrees of broadside: a half-wavelength
    line array loses angular resolution near endfire (beamwidth grows like
    1/cos), so wider excursions make every estimator fail at once instead
    of separating them.
    """

    def fast_weaver(t):
        return 24.0 * np.sin(6.0 * np.pi * (t - 0.125))

    def slow_faller(t):
        return 52.0 * np.cos(np.pi * t + 0.1)

    return fast_weaver, slow_faller


# ---------------------------------------------------------------------------
# Experiment configuration.


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything one experiment needs: the scenario, which estimators to
    run, the search grids, SBL settings, and scoring options.

    sbl = None derives the noise variance from the scenario (substituting
    NOISELESS_SBL_VARIANCE when the scenario is noiseless); num_estimates =
    None keeps as many estimates per block as the scenario has sources.
    """

    scenario: ScenarioConfig
    algorithms: tuple = ALGORITHMS
    theta_grid: AngleGrid = field(default_factory=default_theta_grid)
    trajectory_grid: TrajectoryGrid = field(default_factory=default_trajectory_grid)
    sbl: SblConfig | None = None
    crossing_threshold: float = DEFAULT_CROSSING_THRESHOLD
    num_estimates: int | None = None
    output_dir: str | None = None

    def __post_init__(self):
        algs = tuple(self.algorithms)
        if not algs:
            raise ValueError("algorithms: at least one algorithm must be selected")
        unknown = [a for a in algs if a not in ALGORITHMS]
        if unknown:
            raise ValueError(
                f"algorithms: unknown {unknown[0]!r}, choose from {', '.join(ALGORITHMS)}"
            )
        if len(set(algs)) != len(algs):
            raise ValueError("algorithms: duplicates are not allowed")
        object.__setattr__(self, "algorithms", algs)
        if self.crossing_threshold < 0.0:
            raise ValueError("crossing_threshold must be >= 0")
        if self.num_estimates is not None and self.num_estimates < 1:
            raise ValueError("num_estimates must be >= 1")

    @property
    def estimates_per_block(self) -> int:
        if self.num_estimates is not None:
            return self.num_estimates
        return self.scenario.num_sources

    def resolved_sbl(self) -> SblConfig:
        if self.sbl is not None:
            return self.sbl
        variance = self.scenario.noise_variance
        if variance == 0.0:
            variance = NOISELESS_SBL_VARIANCE
        return SblConfig(noise_variance=variance)


def example_config(example_id: int, seed: int = 0, output_dir=None) -> ExperimentConfig:
    """Canned scenario: N = 10 half-wavelength sensors at 10 dB SNR.

    1: four on-grid linear trajectories, one block of 100 snapshots.
    2: four off-grid linear trajectories, one block of 100 snapshots.
    3: single smooth sweep, 31 blocks of 50 snapshots (11.5 degree max
       per-block change).
    4: two crossing sources, 52 blocks of 30 snapshots, scored on
       non-crossing regions.
    """
    geom = ArrayGeometry(10)
    if example_id == 1:
        sources = [
            SourceSpec(TrajectoryParams(-10.0, 1.0)),
            SourceSpec(TrajectoryParams(-30.0, -5.0)),
            SourceSpec(TrajectoryParams(42.0, 7.0)),
            SourceSpec(TrajectoryParams(66.0, -11.0)),
        ]
        num_blocks, snapshots = 1, 100
    elif example_id == 2:
        sources = [
            SourceSpec(TrajectoryParams(-15.5, 2.5)),
            SourceSpec(TrajectoryParams(-25.5, -6.5)),
            SourceSpec(TrajectoryParams(47.5, 4.5)),
            SourceSpec(TrajectoryParams(71.5, -12.5)),
        ]
        num_blocks, snapshots = 1, 100
    elif example_id == 3:
        sources = [SourceSpec(example3_trajectory())]
        num_blocks, snapshots = 31, 50
    elif example_id == 4:
        fast, slow = example4_trajectories()
        sources = [SourceSpec(fast), SourceSpec(slow)]
        num_blocks, snapshots = 52, 30
    else:
        raise ValueError(f"example_id must be 1, 2, 3, or 4, got {example_id!r}")
    scenario = ScenarioConfig(
        geometry=geom,
        sources=sources,
        num_blocks=num_blocks,
        snapshots_per_block=snapshots,
        snr_db=10.0,
        rng_seed=seed,
    )
    return ExperimentConfig(scenario=scenario, output_dir=None if output_dir is None else str(output_dir))


def describe_experiment(config: ExperimentConfig) -> dict:
    """JSON-ready echo of an experiment config with every default resolved."""

    def angle_grid_dict(grid: AngleGrid) -> dict:
        thetas = grid.thetas
        step = None
        if len(thetas) > 1:
            diffs = np.diff(thetas)
            if np.allclose(diffs, diffs[0]):
                step = float(diffs[0])
        return {
            "start": float(thetas[0]),
            "stop": float(thetas[-1]),
            "step": step,
            "count": len(thetas),
        }

    sbl = config.resolved_sbl()
    return {
        "scenario": describe_config(config.scenario),
        "algorithms": list(config.algorithms),
        "theta_grid": angle_grid_dict(config.theta_grid),
        "trajectory_grid": {
            "phi": angle_grid_dict(AngleGrid(config.trajectory_grid.phis)),
            "alpha": angle_grid_dict(AngleGrid(config.trajectory_grid.alphas)),
        },
        "sbl": {
            "noise_variance": sbl.noise_variance,
            "max_iterations": sbl.max_iterations,
            "convergence_tol": sbl.convergence_tol,
            "gamma_floor": sbl.gamma_floor,
        },
        "metrics": {"crossing_threshold_deg": config.crossing_threshold},
        "num_estimates": config.estimates_per_block,
        "output_dir": config.output_dir,
    }


# ---------------------------------------------------------------------------
# Running one experiment end to end.


@dataclass
class _BlockOutput:
    """What one (block x algorithm) sweep produced, kept until the merge."""

    estimates: dict
    spectra: dict
    sbl_results: dict


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    data: ScenarioData
    estimates: dict  # algorithm -> per-block list of TrajectoryEstimate
    reports: dict  # algorithm -> TrajectoryErrorReport
    sbl_converged: dict  # algorithm -> per-block convergence flags
    output_dir: Path | None

    @property
    def all_converged(self) -> bool:
        return all(all(flags) for flags in self.sbl_converged.values())


def _power_at_1d(spec: Spectrum1D, theta: float) -> float:
    j = int(np.searchsorted(spec.grid.thetas, theta))
    return float(spec.power[j])


def _power_at_2d(spec: Spectrum2D, params: TrajectoryParams) -> float:
    i1 = int(np.searchsorted(spec.grid.phis, params.phi))
    i2 = int(np.searchsorted(spec.grid.alphas, params.alpha))
    return float(spec.power[i1, i2])


def _estimate_block(block, config: ExperimentConfig, sbl_cfg: SblConfig, steering) -> _BlockOutput:
    geom = config.scenario.geometry
    top_k = config.estimates_per_block
    estimates, spectra, sbl_results = {}, {}, {}
    for alg in config.algorithms:
        if alg == "cbf":
            spec = cbf_spectrum(block, config.theta_grid, geom)
            estimates[alg] = [
                TrajectoryEstimate(TrajectoryParams(theta, 0.0), weight=_power_at_1d(spec, theta))
                for theta in pick_peaks_1d(spec, top_k, min_separation=PEAK_MIN_SEPARATION)
            ]
            spectra[alg] = spec
        elif alg == "tl-cbf":
            spec = tl_cbf_spectrum(block, config.trajectory_grid, geom)
            estimates[alg] = [
                TrajectoryEstimate(params, weight=_power_at_2d(spec, params))
                for params in pick_peaks_2d(spec, top_k, min_separation=PEAK_MIN_SEPARATION)
            ]
            spectra[alg] = spec
        elif alg == "sbl":
            result = run_static_sbl(block, config.theta_grid, geom, sbl_cfg, num_estimates=top_k)
            estimates[alg] = result.estimates
            spectra[alg] = Spectrum1D(grid=config.theta_grid, power=result.gamma)
            sbl_results[alg] = result
        else:  # tl-sbl
            result = run_tl_sbl(
                block, config.trajectory_grid, geom, sbl_cfg,
                num_estimates=top_k, steering=steering,
            )
            estimates[alg] = result.estimates
            spectra[alg] = Spectrum2D(grid=config.trajectory_grid, power=result.gamma)
            sbl_results[alg] = result
    return _BlockOutput(estimates=estimates, spectra=spectra, sbl_results=sbl_results)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Simulate, estimate with every selected algorithm, score, and (when the
    config names an output directory) write the artifact tree.
    """
    data = simulate_trajectory_scenario(config.scenario)
    return estimate_scenario(data, config, threads=threads, include_scenario=True)


def estimate_scenario(
    data: ScenarioData,
    config: ExperimentConfig,
    threads: int = 1,
    include_scenario: bool = False,
) -> ExperimentResult:
    """Estimate and score an already-simulated scenario.

    Blocks are independent jobs; threads > 1 runs them on a thread pool
    (the heavy lifting is BLAS, which releases the GIL).  Results are merged
    in block order, so the output is identical for any thread count.
    include_scenario controls whether the artifact tree gets a copy of the
    scenario files (run writes them; estimating an existing directory does
    not duplicate its input).
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if data.geometry.num_sensors != config.scenario.geometry.num_sensors:
        raise ValueError("scenario data sensor count does not match the config geometry")
    if data.snapshots_per_block != config.scenario.snapshots_per_block:
        raise ValueError("scenario data snapshots per block does not match the config")
    sbl_cfg = config.resolved_sbl()

    steering = None
    if "tl-sbl" in config.algorithms:
        steering = trajectory_grid_steering(
            config.scenario.geometry, config.trajectory_grid, config.scenario.snapshots_per_block
        )

    if threads == 1:
        outputs = [_estimate_block(b, config, sbl_cfg, steering) for b in data.blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_estimate_block, b, config, sbl_cfg, steering) for b in data.blocks
            ]
            outputs = [f.result() for f in futures]

    estimates = {alg: [out.estimates[alg] for out in outputs] for alg in config.algorithms}
    reports = {
        alg: associate_and_score(estimates[alg], data.truth, config.crossing_threshold)
        for alg in config.algorithms
    }
    sbl_converged = {
        alg: [out.sbl_results[alg].converged for out in outputs]
        for alg in config.algorithms
        if alg in ("sbl", "tl-sbl")
    }

    out_dir = None
    if config.output_dir is not None:
        out_dir = Path(config.output_dir)
        _write_artifacts(
            config, data, outputs, estimates, reports, sbl_converged, out_dir,
            include_scenario=include_scenario,
        )

    return ExperimentResult(
        config=config,
        data=data,
        estimates=estimates,
        reports=reports,
        sbl_converged=sbl_converged,
        output_dir=out_dir,
    )


# ---------------------------------------------------------------------------
# Artifact files.


def write_estimates_csv(per_block: Sequence[Sequence[TrajectoryEstimate]], path) -> None:
    """block,rank,phi_deg,alpha_deg,weight -- rank 0 is the strongest."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "rank", "phi_deg", "alpha_deg", "weight"])
        for b, block_estimates in enumerate(per_block):
            for rank, est in enumerate(block_estimates):
                writer.writerow([
                    b, rank,
                    FLOAT_FMT % est.params.phi,
                    FLOAT_FMT % est.params.alpha,
                    FLOAT_FMT % est.weight,
                ])


def read_estimates_csv(path, num_blocks: int):
    """Inverse of write_estimates_csv; blocks without rows come back empty."""
    per_block = [[] for _ in range(num_blocks)]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            b = int(row["block"])
            if not 0 <= b < num_blocks:
                raise ValueError(f"{path}: block {b} out of range for {num_blocks} blocks")
            per_block[b].append(
                TrajectoryEstimate(
                    TrajectoryParams(float(row["phi_deg"]), float(row["alpha_deg"])),
                    weight=float(row["weight"]),
                )
            )
    return per_block


def write_trajectories_csv(per_block, snapshots_per_block: int, path) -> None:
    """Per-snapshot DOA tracks for every estimate: block,rank,snapshot,theta_deg
    (snapshot is 1-based, matching the ground-truth table).
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "rank", "snapshot", "theta_deg"])
        for b, block_estimates in enumerate(per_block):
            for rank, est in enumerate(block_estimates):
                for l, theta in enumerate(est.params.doas(snapshots_per_block), start=1):
                    writer.writerow([b, rank, l, FLOAT_FMT % theta])


def _write_artifacts(
    config, data, outputs, estimates, reports, sbl_converged, out_dir: Path,
    include_scenario: bool = True,
):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w") as fh:
        json.dump(describe_experiment(config), fh, indent=2, sort_keys=True)
        fh.write("\n")

    if include_scenario:
        write_scenario(data, out_dir / "scenario")

    spectra_dir = out_dir / "spectra"
    spectra_dir.mkdir(exist_ok=True)
    diag_dir = out_dir / "diagnostics"
    diag_dir.mkdir(exist_ok=True)
    for b, out in enumerate(outputs):
        for alg, spec in out.spectra.items():
            suffix = "gamma" if alg in ("sbl", "tl-sbl") else "power"
            path = spectra_dir / f"{alg}_{suffix}_b{b:04d}.csv"
            if isinstance(spec, Spectrum1D):
                write_spectrum_1d(spec, path)
            else:
                write_spectrum_2d(spec, path)
        for alg, result in out.sbl_results.items():
            write_sbl_diagnostics(result, diag_dir / f"{alg}_b{b:04d}.csv")

    L = config.scenario.snapshots_per_block
    for alg in config.algorithms:
        write_estimates_csv(estimates[alg], out_dir / f"estimates_{alg}.csv")
        write_trajectories_csv(estimates[alg], L, out_dir / f"trajectories_{alg}.csv")
        write_report_csv(reports[alg], out_dir / f"metrics_{alg}_blocks.csv")

    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(metrics_summary(reports, sbl_converged), fh, indent=2, sort_keys=True)
        fh.write("\n")


def metrics_summary(reports, sbl_converged) -> dict:
    summary = {"rmse": summarize_reports(reports)}
    if sbl_converged:
        summary["sbl_convergence"] = {
            alg: {"converged_blocks": int(sum(flags)), "num_blocks": len(flags)}
            for alg, flags in sorted(sbl_converged.items())
        }
    return summary
