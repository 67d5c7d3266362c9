"""What motion inside a block costs a static estimator.

One source ramps steadily from -28 to +20 degrees across 8 blocks of 50
snapshots, so it moves about 5.9 degrees while each block's covariance is
being averaged.  A static estimator has to summarize that motion with a
single angle; against a uniformly moving source the best it can do is the
middle of the ramp, leaving a per-snapshot RMS error of sweep/sqrt(12).
Estimators that model the within-block motion should instead sit near the
half-cell quantization floor of the search grid.
"""
import numpy as np

from doatraj.experiments import ExperimentConfig, run_experiment
from doatraj.geometry import AngleGrid, ArrayGeometry, TrajectoryGrid
from doatraj.simulate import ScenarioConfig, SourceSpec

scenario = ScenarioConfig(
    geometry=ArrayGeometry(10),
    sources=[SourceSpec(lambda t: -28.0 + 48.0 * t)],
    num_blocks=8,
    snapshots_per_block=50,
    snr_db=10.0,
    rng_seed=0,
)

# Search only the region the source actually visits; same 1-degree cells as
# the full grids, just fewer of them, which keeps the demo quick.
config = ExperimentConfig(
    scenario=scenario,
    theta_grid=AngleGrid.uniform(-40.0, 30.0, 1.0),
    trajectory_grid=TrajectoryGrid.uniform(-40.0, 30.0, 1.0, -10.0, 10.0, 1.0),
)

result = run_experiment(config)

# The blocks all span the same fraction of the scenario, so the sweep per
# block is constant; read it off the ground-truth table.
tracks = result.data.truth[:, 0, :]
sweeps = tracks.max(axis=1) - tracks.min(axis=1)
print(f"per-block sweep: {sweeps.mean():.2f} degrees")
print(f"static prediction, sweep/sqrt(12): {sweeps.mean() / np.sqrt(12.0):.2f} degrees\n")

print("per-block RMSE, degrees:")
print("block   cbf   sbl   tl-cbf  tl-sbl")
for b in range(scenario.num_blocks):
    row = [result.reports[alg].per_block_rmse[b] for alg in ("cbf", "sbl", "tl-cbf", "tl-sbl")]
    print(f"  {b}    {row[0]:5.2f} {row[1]:5.2f}   {row[2]:5.2f}   {row[3]:5.2f}")

print("\noverall RMSE, degrees:")
for alg in ("cbf", "sbl", "tl-cbf", "tl-sbl"):
    print(f"  {alg:7s} {result.reports[alg].overall_rmse:5.2f}")

# cbf lands right on the sweep/sqrt(12) prediction: its error is the motion
# it cannot express, not noise.  sbl runs a little above it -- a moving
# source looks like two static ones to a sparse model, and with one estimate
# to spend it parks on one end of the ramp instead of the middle.  The
# trajectory versions track within a twentieth of a degree here because this
# ramp sits almost exactly on a slope cell; the off-grid demo shows the more
# typical half-cell floor.
