"""Tests for the command line front end: exit codes, config validation
diagnostics, and byte-level agreement between the simulate/estimate split
and the one-shot run command.
"""

import json
from pathlib import Path

import pytest

from doatraj.cli import main

TINY_CONFIG = {
    "scenario": {
        "num_sensors": 4,
        "sources": [{"phi": -6.0, "alpha": 2.0}, {"phi": 12.0, "alpha": -2.0}],
        "num_blocks": 2,
        "snapshots_per_block": 10,
        "snr_db": 10.0,
        "rng_seed": 0,
    },
    "theta_grid": {"start": -20, "stop": 20, "step": 2},
    "trajectory_grid": {
        "phi": {"start": -20, "stop": 20, "step": 2},
        "alpha": {"start": -4, "stop": 4, "step": 2},
    },
}


def write_config(tmp_path, overrides=None, **top_level):
    node = json.loads(json.dumps(TINY_CONFIG))
    if overrides:
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            target = node
            for p in parts[:-1]:
                target = target[p]
            if value is ...:
                del target[parts[-1]]
            else:
                target[parts[-1]] = value
    node.update(top_level)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(node))
    return path


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# ---------------------------------------------------------------------------
# Happy path.


def test_run_writes_artifacts_and_reports_rmse(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert f"wrote {out}" in stdout
    for alg in ("cbf", "tl-cbf", "sbl", "tl-sbl"):
        assert alg in stdout
        assert (out / f"estimates_{alg}.csv").exists()
    echo = json.loads((out / "config.json").read_text())
    # defaults are resolved into the echo
    assert echo["metrics"]["crossing_threshold_deg"] == 10.0
    assert echo["sbl"]["max_iterations"] == 1000
    assert echo["scenario"]["noise_variance"] == pytest.approx(0.1)


def test_run_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    first = tree_bytes(out)
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    assert tree_bytes(out) == first


def test_seed_flag_overrides_config_seed(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--seed", "5", "--output-dir", str(out)]) == 0
    echo = json.loads((out / "config.json").read_text())
    assert echo["scenario"]["rng_seed"] == 5
    header = json.loads((out / "scenario" / "scenario.json").read_text())
    assert header["rng_seed"] == 5


def test_simulate_then_estimate_matches_run(tmp_path):
    """Splitting the pipeline across processes reproduces the one-shot run
    bit for bit on every shared artifact.
    """
    cfg = write_config(tmp_path)
    run_out = tmp_path / "run"
    scen_out = tmp_path / "scen"
    est_out = tmp_path / "est"
    assert main(["run", str(cfg), "--output-dir", str(run_out)]) == 0
    assert main(["simulate", str(cfg), "--output-dir", str(scen_out)]) == 0
    assert main([
        "estimate", str(scen_out), "--config", str(cfg), "--output-dir", str(est_out),
    ]) == 0

    run_tree = tree_bytes(run_out)
    est_tree = tree_bytes(est_out)
    # the estimate run has no scenario/ copy and its config echo differs
    # (sampled scenario stand-in); everything downstream must be identical
    shared = {
        name for name in run_tree
        if not name.startswith("scenario/") and name != "config.json"
    }
    assert shared <= set(est_tree)
    for name in sorted(shared):
        assert est_tree[name] == run_tree[name], name


def test_simulate_scenario_matches_run_copy(tmp_path):
    cfg = write_config(tmp_path)
    run_out = tmp_path / "run"
    scen_out = tmp_path / "scen"
    assert main(["run", str(cfg), "--output-dir", str(run_out)]) == 0
    assert main(["simulate", str(cfg), "--output-dir", str(scen_out)]) == 0
    run_scen = {
        name[len("scenario/"):]: data
        for name, data in tree_bytes(run_out).items()
        if name.startswith("scenario/")
    }
    assert tree_bytes(scen_out) == run_scen


def test_estimate_ignores_scenario_section_of_config(tmp_path):
    """estimate reads array geometry and block shape from the scenario files;
    a config's scenario section (even a contradictory one) changes nothing.
    """
    cfg = write_config(tmp_path)
    scen_out = tmp_path / "scen"
    assert main(["simulate", str(cfg), "--output-dir", str(scen_out)]) == 0

    a, b = tmp_path / "a", tmp_path / "b"
    lying = write_config(tmp_path, overrides={"scenario.num_sensors": 99})
    assert main(["estimate", str(scen_out), "--config", str(cfg), "--output-dir", str(a)]) == 0
    assert main(["estimate", str(scen_out), "--config", str(lying), "--output-dir", str(b)]) == 0
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert set(ta) == set(tb)
    assert {k: v for k, v in ta.items() if k != "config.json"} == {
        k: v for k, v in tb.items() if k != "config.json"
    }
    echo_a = json.loads(ta["config.json"])
    echo_b = json.loads(tb["config.json"])
    echo_a.pop("output_dir"), echo_b.pop("output_dir")
    assert echo_a == echo_b


def test_evaluate_reproduces_run_metrics(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    run_metrics = json.loads((out / "metrics.json").read_text())

    redo = tmp_path / "redo"
    assert main(["evaluate", str(out), "--output-dir", str(redo)]) == 0
    redo_metrics = json.loads((redo / "metrics.json").read_text())
    # evaluate re-scores from files, so convergence counters are absent
    assert redo_metrics["rmse"] == run_metrics["rmse"]
    for alg in ("cbf", "tl-cbf", "sbl", "tl-sbl"):
        assert (redo / f"metrics_{alg}_blocks.csv").read_bytes() == (
            out / f"metrics_{alg}_blocks.csv"
        ).read_bytes()


def test_evaluate_accepts_threshold_override(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    redo = tmp_path / "redo"
    assert main([
        "evaluate", str(out), "--crossing-threshold", "0", "--output-dir", str(redo),
    ]) == 0
    metrics = json.loads((redo / "metrics.json").read_text())
    assert metrics["rmse"]["cbf"]["crossing_threshold_deg"] == 0.0


def test_reproduce_unknown_example_exits_1(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["reproduce", "9"]) == 1
    assert "invalid choice" in capsys.readouterr().err


def test_usage_error_exits_1(capsys):
    assert main(["frobnicate"]) == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Config validation diagnostics.


def test_missing_config_file_exits_1(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json"), "--output-dir", str(tmp_path / "o")]) == 1
    assert "nope.json" in capsys.readouterr().err


def test_invalid_json_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad), "--output-dir", str(tmp_path / "o")]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_unknown_field_names_dotted_path(tmp_path, capsys):
    cfg = write_config(tmp_path, overrides={"scenario.bogus": 1})
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "config.scenario.bogus: unknown field" in capsys.readouterr().err


def test_missing_required_field_names_dotted_path(tmp_path, capsys):
    cfg = write_config(tmp_path, overrides={"scenario.num_blocks": ...})
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "config.scenario.num_blocks: required" in capsys.readouterr().err


def test_wrong_type_names_dotted_path(tmp_path, capsys):
    cfg = write_config(tmp_path, overrides={"scenario.snr_db": "quiet"})
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "config.scenario.snr_db: expected number, got str" in capsys.readouterr().err


def test_empty_algorithms_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, algorithms=[])
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "at least one algorithm" in capsys.readouterr().err


def test_unknown_algorithm_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, algorithms=["cbf", "esprit"])
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "esprit" in capsys.readouterr().err


def test_sbl_override_requires_noise_variance(tmp_path, capsys):
    cfg = write_config(tmp_path, sbl={"noise_variance": None, "max_iterations": 5})
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "noise_variance: required" in capsys.readouterr().err


def test_run_without_output_dir_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", str(cfg)]) == 1
    assert "output_dir" in capsys.readouterr().err


def test_evaluate_without_estimates_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    scen = tmp_path / "scen"
    assert main(["simulate", str(cfg), "--output-dir", str(scen)]) == 0
    assert main(["evaluate", str(scen)]) == 1
    assert "no estimates" in capsys.readouterr().err


def test_source_outside_visible_region_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, overrides={"scenario.sources": [{"phi": 89.0, "alpha": 5.0}]})
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    assert "visible region" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Strict mode.


def test_strict_exits_3_when_iteration_cap_hit(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        algorithms=["tl-sbl"],
        sbl={"noise_variance": 0.1, "max_iterations": 1},
    )
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--strict", "--output-dir", str(out)]) == 3
    err = capsys.readouterr().err
    assert "non-convergence" in err
    assert "tl-sbl" in err
    # artifacts are still written before the strict check fires
    assert (out / "metrics.json").exists()


def test_without_strict_capped_run_exits_0(tmp_path):
    cfg = write_config(
        tmp_path,
        algorithms=["tl-sbl"],
        sbl={"noise_variance": 0.1, "max_iterations": 1},
    )
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["sbl_convergence"]["tl-sbl"]["converged_blocks"] == 0
