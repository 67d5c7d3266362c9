"""Trajectory-level error metrics.

Estimated trajectories are matched to ground truth block by block with an
optimal assignment on per-snapshot absolute error, blocks where two true
sources pass close to each other are excluded, and the survivors are pooled
into per-snapshot RMS DOA error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import TrajectoryParams
from .sbl import TrajectoryEstimate

DEFAULT_CROSSING_THRESHOLD = 10.0


def expand_trajectory(params: TrajectoryParams, num_snapshots: int) -> np.ndarray:
    """Per-snapshot DOAs swept by a linear trajectory over `num_snapshots`."""
    return params.doas(num_snapshots)


@dataclass(frozen=True)
class TrajectoryErrorReport:
    """Outcome of scoring one algorithm's estimates against ground truth.

    per_block_rmse is NaN for excluded blocks and for blocks that produced
    no matched estimates; overall_rmse pools squared per-snapshot errors
    across every matched (estimate, source) pair in the included blocks.
    association maps estimate index -> true source index per block (empty
    for excluded blocks), and is injective within each block.
    """

    per_block_rmse: np.ndarray
    overall_rmse: float
    association: tuple
    excluded_blocks: tuple
    crossing_threshold: float

    @property
    def num_blocks(self) -> int:
        return len(self.per_block_rmse)


def _normalize_estimates(entries) -> list:
    """Coerce one block's estimates to (original_index, params, weight).

    Bare TrajectoryParams are accepted with list position standing in for
    weight (earlier entries rank higher), matching how peak pickers order
    their output.
    """
    out = []
    for pos, entry in enumerate(entries):
        if isinstance(entry, TrajectoryEstimate):
            out.append((pos, entry.params, float(entry.weight)))
        elif isinstance(entry, TrajectoryParams):
            out.append((pos, entry, -float(pos)))
        else:
            raise TypeError(
                f"estimate entries must be TrajectoryEstimate or TrajectoryParams, got {type(entry).__name__}"
            )
    return out


def crossing_blocks(truth: np.ndarray, crossing_threshold: float) -> list:
    """Indices of blocks where two true sources come strictly closer than
    the threshold at any snapshot.  A threshold of zero excludes nothing.
    """
    num_blocks, num_sources, _ = truth.shape
    excluded = []
    for b in range(num_blocks):
        close = False
        for k1 in range(num_sources):
            for k2 in range(k1 + 1, num_sources):
                gap = np.abs(truth[b, k1] - truth[b, k2])
                if np.any(gap < crossing_threshold):
                    close = True
                    break
            if close:
                break
        if close:
            excluded.append(b)
    return excluded


def associate_and_score(
    estimates: Sequence[Sequence],
    truth: np.ndarray,
    crossing_threshold: float = DEFAULT_CROSSING_THRESHOLD,
) -> TrajectoryErrorReport:
    """Match per-block trajectory estimates to true sources and score them.

    estimates holds one sequence per block (TrajectoryEstimate or bare
    TrajectoryParams); truth is (num_blocks, num_sources, num_snapshots)
    of true DOAs.  Within a block, estimates beyond the true source count
    are discarded by weight, the rest are assigned to sources minimizing
    total per-snapshot absolute error, and each matched pair contributes
    its per-snapshot errors to the block and overall RMSE.  Blocks flagged
    by `crossing_blocks` are excluded from scoring.
    """
    truth = np.asarray(truth, dtype=float)
    if truth.ndim != 3 or truth.size == 0:
        raise ValueError("truth table must be non-empty with shape (blocks, sources, snapshots)")
    num_blocks, num_sources, num_snapshots = truth.shape
    if len(estimates) != num_blocks:
        raise ValueError(f"got estimates for {len(estimates)} blocks, truth has {num_blocks}")
    if crossing_threshold < 0.0:
        raise ValueError("crossing_threshold must be >= 0")

    excluded = crossing_blocks(truth, crossing_threshold)
    excluded_set = set(excluded)

    per_block_rmse = np.full(num_blocks, math.nan)
    association = []
    pooled_sq = 0.0
    pooled_count = 0

    for b in range(num_blocks):
        if b in excluded_set:
            association.append({})
            continue
        entries = _normalize_estimates(estimates[b])
        if len(entries) > num_sources:
            entries.sort(key=lambda item: -item[2])  # stable: ties keep input order
            entries = entries[:num_sources]
        if not entries:
            association.append({})
            continue

        tracks = np.stack([expand_trajectory(params, num_snapshots) for _, params, _ in entries])
        cost = np.abs(tracks[:, None, :] - truth[b][None, :, :]).sum(axis=2)
        rows, cols = linear_sum_assignment(cost)

        sq = (tracks[rows] - truth[b][cols]) ** 2
        per_block_rmse[b] = math.sqrt(sq.mean())
        pooled_sq += sq.sum()
        pooled_count += sq.size
        association.append({entries[r][0]: int(c) for r, c in zip(rows, cols)})

    overall = math.sqrt(pooled_sq / pooled_count) if pooled_count else math.nan
    return TrajectoryErrorReport(
        per_block_rmse=per_block_rmse,
        overall_rmse=overall,
        association=tuple(association),
        excluded_blocks=tuple(excluded),
        crossing_threshold=float(crossing_threshold),
    )


def write_report_csv(report: TrajectoryErrorReport, path) -> None:
    """Per-block breakdown: block, RMSE (blank when unscored), exclusion
    flag, and the matched estimate->source pairs as `i:k` tokens.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "rmse_deg", "excluded", "matches"])
        excluded = set(report.excluded_blocks)
        for b in range(report.num_blocks):
            rmse = report.per_block_rmse[b]
            matches = " ".join(f"{i}:{k}" for i, k in sorted(report.association[b].items()))
            writer.writerow([
                b,
                "" if math.isnan(rmse) else f"{rmse:.17g}",
                int(b in excluded),
                matches,
            ])


def summarize_reports(reports: Mapping[str, TrajectoryErrorReport]) -> dict:
    """JSON-ready summary keyed by algorithm name."""
    summary = {}
    for name in sorted(reports):
        report = reports[name]
        summary[name] = {
            "overall_rmse_deg": None if math.isnan(report.overall_rmse) else report.overall_rmse,
            "excluded_blocks": list(report.excluded_blocks),
            "crossing_threshold_deg": report.crossing_threshold,
            "scored_blocks": int(np.sum(~np.isnan(report.per_block_rmse))),
        }
    return summary


def write_rmse_summary(reports: Mapping[str, TrajectoryErrorReport], path) -> None:
    with open(path, "w") as fh:
        json.dump(summarize_reports(reports), fh, indent=2, sort_keys=True)
        fh.write("\n")
