"""Command line front end.

Subcommands:

    doatraj reproduce {1,2,3,4} [--seed N] [--output-dir DIR] [--strict] [--threads N]
    doatraj run CONFIG [--seed N] [--output-dir DIR] [--strict] [--threads N]
    doatraj simulate CONFIG [--seed N] [--output-dir DIR]
    doatraj estimate SCENARIO_DIR [--config CONFIG] [--output-dir DIR] [--strict] [--threads N]
    doatraj evaluate RUN_DIR [--crossing-threshold DEG] [--output-dir DIR]

Configs are JSON.  A full example with every recognized field (everything
except scenario.sources, scenario.num_blocks, scenario.snapshots_per_block,
scenario.snr_db, and scenario.rng_seed may be omitted and defaults):

    {
      "scenario": {
        "num_sensors": 10,
        "spacing_over_wavelength": 0.5,
        "sources": [{"phi": -10.0, "alpha": 1.0, "power": 1.0}],
        "num_blocks": 1,
        "snapshots_per_block": 100,
        "snr_db": 10.0,
        "rng_seed": 0
      },
      "algorithms": ["cbf", "tl-cbf", "sbl", "tl-sbl"],
      "theta_grid": {"start": -90, "stop": 90, "step": 1},
      "trajectory_grid": {"phi": {"start": -90, "stop": 90, "step": 1},
                          "alpha": {"start": -15, "stop": 15, "step": 1}},
      "sbl": {"noise_variance": null, "max_iterations": 1000,
              "convergence_tol": 1e-4, "gamma_floor": 1e-12},
      "metrics": {"crossing_threshold": 10.0},
      "num_estimates": null,
      "output_dir": "out"
    }

Exit codes: 0 success; 1 validation error (bad config, bad usage); 2 numeric
failure; 3 non-convergence when --strict is given.  Every output directory
contains the fully resolved configuration, defaults included.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    ALGORITHMS,
    DEFAULT_CROSSING_THRESHOLD,
    ExperimentConfig,
    default_theta_grid,
    default_trajectory_grid,
    estimate_scenario,
    example_config,
    metrics_summary,
    read_estimates_csv,
    run_experiment,
)
from .geometry import AngleGrid, ArrayGeometry, TrajectoryGrid, TrajectoryParams
from .metrics import associate_and_score, summarize_reports, write_report_csv
from .sbl import SblConfig
from .simulate import (
    ScenarioConfig,
    SourceSpec,
    read_scenario,
    simulate_trajectory_scenario,
    write_scenario,
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class ConvergenceError(RuntimeError):
    """SBL hit its iteration cap and --strict was requested."""


_MISSING = object()


def _field(mapping, key, path, kind, default=_MISSING):
    """Fetch mapping[key] with a type check, or the default; errors carry the
    dotted path of the offending field.
    """
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: expected an object")
    if key not in mapping:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = mapping[key]
    checks = {
        "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "string": lambda v: isinstance(v, str),
        "object": lambda v: isinstance(v, dict),
        "array": lambda v: isinstance(v, list),
    }
    if not checks[kind](value):
        raise ConfigError(f"{path}.{key}: expected {kind}, got {type(value).__name__}")
    return value


def _reject_unknown(mapping, known, path):
    for key in mapping:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")


def _parse_angle_grid(node, path) -> AngleGrid:
    _reject_unknown(node, {"start", "stop", "step"}, path)
    start = _field(node, "start", path, "number")
    stop = _field(node, "stop", path, "number")
    step = _field(node, "step", path, "number", 1.0)
    try:
        return AngleGrid.uniform(float(start), float(stop), float(step))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_trajectory_grid(node, path) -> TrajectoryGrid:
    _reject_unknown(node, {"phi", "alpha"}, path)
    phi = _parse_angle_grid(_field(node, "phi", path, "object"), f"{path}.phi")
    alpha = _parse_angle_grid(_field(node, "alpha", path, "object"), f"{path}.alpha")
    return TrajectoryGrid(phis=phi.thetas, alphas=alpha.thetas)


def _parse_scenario(node, path="scenario", seed_override=None) -> ScenarioConfig:
    _reject_unknown(
        node,
        {"num_sensors", "spacing_over_wavelength", "sources", "num_blocks",
         "snapshots_per_block", "snr_db", "rng_seed"},
        path,
    )
    num_sensors = _field(node, "num_sensors", path, "integer", 10)
    spacing = _field(node, "spacing_over_wavelength", path, "number", 0.5)
    sources_node = _field(node, "sources", path, "array")
    if not sources_node:
        raise ConfigError(f"{path}.sources: at least one source is required")
    sources = []
    for k, src in enumerate(sources_node):
        src_path = f"{path}.sources[{k}]"
        if not isinstance(src, dict):
            raise ConfigError(f"{src_path}: expected an object")
        _reject_unknown(src, {"phi", "alpha", "power"}, src_path)
        phi = _field(src, "phi", src_path, "number")
        alpha = _field(src, "alpha", src_path, "number", 0.0)
        power = _field(src, "power", src_path, "number", 1.0)
        try:
            sources.append(SourceSpec(TrajectoryParams(float(phi), float(alpha)), power=float(power)))
        except ValueError as exc:
            raise ConfigError(f"{src_path}: {exc}") from exc
    seed = _field(node, "rng_seed", path, "integer", 0)
    if seed_override is not None:
        seed = seed_override
    try:
        return ScenarioConfig(
            geometry=ArrayGeometry(num_sensors, float(spacing)),
            sources=sources,
            num_blocks=_field(node, "num_blocks", path, "integer"),
            snapshots_per_block=_field(node, "snapshots_per_block", path, "integer"),
            snr_db=float(_field(node, "snr_db", path, "number")),
            rng_seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_sbl(node, path) -> SblConfig | None:
    """None when noise_variance is absent/null: derive it from the scenario."""
    _reject_unknown(node, {"noise_variance", "max_iterations", "convergence_tol", "gamma_floor"}, path)
    defaults = SblConfig(noise_variance=1.0)
    variance = node.get("noise_variance")
    kwargs = {
        "max_iterations": _field(node, "max_iterations", path, "integer", defaults.max_iterations),
        "convergence_tol": _field(node, "convergence_tol", path, "number", defaults.convergence_tol),
        "gamma_floor": _field(node, "gamma_floor", path, "number", defaults.gamma_floor),
    }
    if variance is None:
        if kwargs == {
            "max_iterations": defaults.max_iterations,
            "convergence_tol": defaults.convergence_tol,
            "gamma_floor": defaults.gamma_floor,
        }:
            return None
        raise ConfigError(
            f"{path}.noise_variance: required when other SBL settings are overridden"
        )
    if not isinstance(variance, (int, float)) or isinstance(variance, bool):
        raise ConfigError(f"{path}.noise_variance: expected number or null")
    try:
        return SblConfig(noise_variance=float(variance), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        node = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return node


def parse_experiment(
    node: dict,
    *,
    scenario: ScenarioConfig | None = None,
    seed_override: int | None = None,
    output_dir_override=None,
    path: str = "config",
) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed JSON object.

    Pass `scenario` to supply the scenario externally (the estimate command,
    where data comes from files); the config's own scenario section is then
    ignored.
    """
    _reject_unknown(
        node,
        {"scenario", "algorithms", "theta_grid", "trajectory_grid", "sbl",
         "metrics", "num_estimates", "output_dir"},
        path,
    )
    if scenario is None:
        scenario = _parse_scenario(
            _field(node, "scenario", path, "object"), f"{path}.scenario", seed_override
        )
    algorithms = _field(node, "algorithms", path, "array", list(ALGORITHMS))
    for i, alg in enumerate(algorithms):
        if not isinstance(alg, str):
            raise ConfigError(f"{path}.algorithms[{i}]: expected string")
    theta_node = _field(node, "theta_grid", path, "object", None)
    traj_node = _field(node, "trajectory_grid", path, "object", None)
    sbl_node = _field(node, "sbl", path, "object", None)
    metrics_node = _field(node, "metrics", path, "object", {})
    _reject_unknown(metrics_node, {"crossing_threshold"}, f"{path}.metrics")
    threshold = _field(
        metrics_node, "crossing_threshold", f"{path}.metrics", "number", DEFAULT_CROSSING_THRESHOLD
    )
    num_estimates = node.get("num_estimates")
    if num_estimates is not None and (not isinstance(num_estimates, int) or isinstance(num_estimates, bool)):
        raise ConfigError(f"{path}.num_estimates: expected integer or null")
    output_dir = _field(node, "output_dir", path, "string", None)
    if output_dir_override is not None:
        output_dir = str(output_dir_override)
    try:
        return ExperimentConfig(
            scenario=scenario,
            algorithms=tuple(algorithms),
            theta_grid=_parse_angle_grid(theta_node, f"{path}.theta_grid")
            if theta_node is not None else default_theta_grid(),
            trajectory_grid=_parse_trajectory_grid(traj_node, f"{path}.trajectory_grid")
            if traj_node is not None else default_trajectory_grid(),
            sbl=_parse_sbl(sbl_node, f"{path}.sbl") if sbl_node is not None else None,
            crossing_threshold=float(threshold),
            num_estimates=num_estimates,
            output_dir=output_dir,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommand bodies.  Each returns 0 or raises; main() maps exceptions to
# exit codes.


def _print_outcome(result) -> None:
    print(f"wrote {result.output_dir}")
    for alg in result.config.algorithms:
        rmse = result.reports[alg].overall_rmse
        shown = "n/a" if np.isnan(rmse) else f"{rmse:.4f} deg"
        print(f"  {alg:7s} rmse {shown}")


def _check_strict(result, strict: bool) -> None:
    if not strict or result.all_converged:
        return
    stuck = {
        alg: [b for b, ok in enumerate(flags) if not ok]
        for alg, flags in result.sbl_converged.items()
        if not all(flags)
    }
    detail = "; ".join(f"{alg}: blocks {blocks}" for alg, blocks in sorted(stuck.items()))
    raise ConvergenceError(f"iteration cap reached before tolerance ({detail})")


def cmd_reproduce(example_id: int, seed: int = 0, output_dir=None,
                  strict: bool = False, threads: int = 1) -> int:
    """Run one built-in scenario with all four algorithms."""
    config = example_config(example_id, seed=seed)
    out = Path(output_dir) if output_dir is not None else Path(f"example{example_id}")
    config = dataclasses.replace(config, output_dir=str(out))
    result = run_experiment(config, threads=threads)
    _print_outcome(result)
    _check_strict(result, strict)
    return 0


def cmd_run(config_file, seed=None, output_dir=None, strict: bool = False, threads: int = 1) -> int:
    node = load_config_file(config_file)
    config = parse_experiment(node, seed_override=seed, output_dir_override=output_dir)
    if config.output_dir is None:
        raise ConfigError("config.output_dir: required (or pass --output-dir)")
    result = run_experiment(config, threads=threads)
    _print_outcome(result)
    _check_strict(result, strict)
    return 0


def cmd_simulate(config_file, seed=None, output_dir=None) -> int:
    """Generate and write scenario files only."""
    node = load_config_file(config_file)
    config = parse_experiment(node, seed_override=seed, output_dir_override=output_dir)
    if config.output_dir is None:
        raise ConfigError("config.output_dir: required (or pass --output-dir)")
    data = simulate_trajectory_scenario(config.scenario)
    out = write_scenario(data, config.output_dir)
    print(f"wrote {out}")
    return 0


def cmd_estimate(scenario_dir, config_file=None, output_dir=None,
                 strict: bool = False, threads: int = 1) -> int:
    """Run estimators against an existing scenario directory."""
    data = read_scenario(scenario_dir)
    # Stand-in scenario: estimation only needs geometry, block shape, noise
    # level, and the source count (the default estimate count per block).
    stand_in = ScenarioConfig(
        geometry=data.geometry,
        sources=[SourceSpec(TrajectoryParams(0.0, 0.0))] * data.num_sources,
        num_blocks=data.num_blocks,
        snapshots_per_block=data.snapshots_per_block,
        snr_db=data.snr_db,
        rng_seed=data.rng_seed,
    )
    node = load_config_file(config_file) if config_file is not None else {}
    config = parse_experiment(node, scenario=stand_in, output_dir_override=output_dir)
    if config.output_dir is None:
        raise ConfigError("config.output_dir: required (or pass --output-dir)")
    result = estimate_scenario(data, config, threads=threads)
    _print_outcome(result)
    _check_strict(result, strict)
    return 0


def cmd_evaluate(run_dir, crossing_threshold=None, output_dir=None) -> int:
    """Re-score the estimates in a run directory against its ground truth."""
    run_dir = Path(run_dir)
    scenario_dir = run_dir / "scenario" if (run_dir / "scenario").is_dir() else run_dir
    data = read_scenario(scenario_dir)
    if crossing_threshold is None:
        crossing_threshold = DEFAULT_CROSSING_THRESHOLD
        config_path = run_dir / "config.json"
        if config_path.exists():
            echoed = json.loads(config_path.read_text())
            crossing_threshold = (
                echoed.get("metrics", {}).get("crossing_threshold_deg", crossing_threshold)
            )
    estimate_files = sorted(run_dir.glob("estimates_*.csv"))
    if not estimate_files:
        raise ConfigError(f"{run_dir}: no estimates_*.csv files to evaluate")
    out = Path(output_dir) if output_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for path in estimate_files:
        alg = path.stem[len("estimates_"):]
        estimates = read_estimates_csv(path, data.num_blocks)
        reports[alg] = associate_and_score(estimates, data.truth, crossing_threshold)
        write_report_csv(reports[alg], out / f"metrics_{alg}_blocks.csv")
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics_summary(reports, {}), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for alg in sorted(reports):
        rmse = reports[alg].overall_rmse
        shown = "n/a" if np.isnan(rmse) else f"{rmse:.4f} deg"
        print(f"  {alg:7s} rmse {shown}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="doatraj", description=(
        "Trajectory DOA estimation: simulate moving-source array data and "
        "estimate with CBF, TL-CBF, SBL, and TL-SBL."
    ))
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, strict=True):
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
        p.add_argument("--output-dir", default=None, help="directory for artifact files")
        if strict:
            p.add_argument("--strict", action="store_true",
                           help="exit 3 if any SBL run hits its iteration cap")
            p.add_argument("--threads", type=int, default=1,
                           help="number of concurrent block jobs (default 1)")

    p = sub.add_parser("reproduce", help="run a built-in scenario (1-4)")
    p.add_argument("example_id", type=int, choices=(1, 2, 3, 4))
    common(p)
    p.set_defaults(func=lambda a: cmd_reproduce(
        a.example_id, seed=a.seed if a.seed is not None else 0,
        output_dir=a.output_dir, strict=a.strict, threads=a.threads))

    p = sub.add_parser("run", help="simulate + estimate + score from a config file")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=lambda a: cmd_run(
        a.config, seed=a.seed, output_dir=a.output_dir, strict=a.strict, threads=a.threads))

    p = sub.add_parser("simulate", help="write scenario files only")
    p.add_argument("config")
    common(p, strict=False)
    p.set_defaults(func=lambda a: cmd_simulate(a.config, seed=a.seed, output_dir=a.output_dir))

    p = sub.add_parser("estimate", help="estimate from an existing scenario directory")
    p.add_argument("scenario_dir")
    p.add_argument("--config", default=None, help="JSON config (scenario section ignored)")
    common(p, seed=False)
    p.set_defaults(func=lambda a: cmd_estimate(
        a.scenario_dir, config_file=a.config, output_dir=a.output_dir,
        strict=a.strict, threads=a.threads))

    p = sub.add_parser("evaluate", help="re-score estimates in a run directory")
    p.add_argument("run_dir")
    p.add_argument("--crossing-threshold", type=float, default=None,
                   help="exclusion threshold in degrees (default: the run's)")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=lambda a: cmd_evaluate(
        a.run_dir, crossing_threshold=a.crossing_threshold, output_dir=a.output_dir))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
