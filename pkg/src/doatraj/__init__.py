"""DOA trajectory localization for moving narrowband sources.

Conventional beamforming and sparse Bayesian learning, plus their
trajectory-aware variants (TL-CBF, TL-SBL) that search over linear
DOA paths (phi, alpha) instead of static angles.
"""

from .beamform import (
    Spectrum1D,
    Spectrum2D,
    cbf_spectrum,
    pick_peaks_1d,
    pick_peaks_2d,
    tl_cbf_spectrum,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    estimate_scenario,
    example_config,
    run_experiment,
)
from .geometry import (
    AngleGrid,
    ArrayGeometry,
    TrajectoryGrid,
    TrajectoryParams,
    snapshot_fractions,
    snapshot_steering_tensor,
    steering_matrix,
    steering_vector,
    trajectory_doa,
    trajectory_steering_matrix,
)
from .metrics import TrajectoryErrorReport, associate_and_score, expand_trajectory
from .sbl import (
    SblConfig,
    SblResult,
    SblState,
    TrajectoryEstimate,
    assemble_snapshot_covariances,
    log_evidence,
    run_static_sbl,
    run_tl_sbl,
    tl_sbl_gamma_update,
    trajectory_grid_steering,
)
from .simulate import (
    ScenarioConfig,
    ScenarioData,
    SnapshotBlock,
    SourceSpec,
    noise_variance_from_snr,
    read_scenario,
    simulate_block,
    simulate_trajectory_scenario,
    write_scenario,
)

__all__ = [
    "AngleGrid",
    "ArrayGeometry",
    "ExperimentConfig",
    "ExperimentResult",
    "SblConfig",
    "SblResult",
    "SblState",
    "ScenarioConfig",
    "ScenarioData",
    "SnapshotBlock",
    "SourceSpec",
    "Spectrum1D",
    "Spectrum2D",
    "TrajectoryErrorReport",
    "TrajectoryEstimate",
    "TrajectoryGrid",
    "TrajectoryParams",
    "assemble_snapshot_covariances",
    "associate_and_score",
    "cbf_spectrum",
    "estimate_scenario",
    "example_config",
    "expand_trajectory",
    "log_evidence",
    "noise_variance_from_snr",
    "pick_peaks_1d",
    "pick_peaks_2d",
    "read_scenario",
    "run_experiment",
    "run_static_sbl",
    "run_tl_sbl",
    "simulate_block",
    "simulate_trajectory_scenario",
    "snapshot_fractions",
    "snapshot_steering_tensor",
    "steering_matrix",
    "steering_vector",
    "tl_cbf_spectrum",
    "tl_sbl_gamma_update",
    "trajectory_doa",
    "trajectory_grid_steering",
    "trajectory_steering_matrix",
    "write_scenario",
]
