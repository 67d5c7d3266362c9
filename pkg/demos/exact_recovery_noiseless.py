"""
Exact recovery of four moving sources without noise
====================================================

Four sources move linearly within a single 100-snapshot block, each
described by a (start angle, total change) pair that sits exactly on the
search grid.  With the noise turned off, a sparse trajectory estimator
should hand back those four grid cells exactly -- and the trajectory
beamformer should show why "should" is doing some work in that sentence.
"""
import dataclasses

from doatraj.experiments import example_config, run_experiment

# The canned four-source scenario: (-10, 1), (-30, -5), (42, 7), (66, -11),
# one block, L = 100, ten half-wavelength sensors.  Swap the 10 dB SNR for
# a noiseless run.
cfg = example_config(1)
cfg = dataclasses.replace(
    cfg,
    scenario=dataclasses.replace(cfg.scenario, snr_db=float("inf")),
    algorithms=("cbf", "tl-cbf", "sbl", "tl-sbl"),
)

truth = sorted(
    (src.trajectory.phi, src.trajectory.alpha) for src in cfg.scenario.sources
)
print("true (start, change) pairs:", truth)

result = run_experiment(cfg)

# The static methods (cbf, sbl) only report a start angle; their alpha is
# always 0.  The trajectory methods search the full (start, change) grid.
for alg in cfg.algorithms:
    got = sorted((e.params.phi, e.params.alpha) for e in result.estimates[alg][0])
    print(f"{alg:7s} -> {got}")

# TL-SBL recovers all four cells exactly.  TL-CBF does not, even with no
# noise: the two sources that end 6 degrees apart sit inside the array's
# beamwidth, and their cross power inflates cells with extreme slopes until
# the true cells are no longer local maxima.  That resolution failure is a
# property of beamformer spectra, not a bug in the peak picker -- the sparse
# estimator sees the same data and gets all four.
tl_sbl = sorted((e.params.phi, e.params.alpha) for e in result.estimates["tl-sbl"][0])
print("\nTL-SBL exact:", tl_sbl == truth)
