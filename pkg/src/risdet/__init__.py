"""Surface-assisted radar detection: detectors, experiments, aperture design."""

from .detectors import (
    BatchResult,
    CGlrtConfig,
    DetectionOutcome,
    DetectorKind,
    NonMonotonic,
    a_glrt,
    alpha_hat,
    amf,
    batch_evaluate,
    bounded_cfar_bounds,
    c_glrt,
    c_glrt_gain_trace,
    candidate_pairs,
    ep_glrt_ka,
    ep_glrt_km,
    kelly,
)
from .geometry import (
    C_LIGHT,
    BinLayout,
    InfeasibleGeometry,
    PathDelays,
    ScenarioGeometry,
    WindowTooSmall,
    bin_layout,
    check_feasibility,
    compute_delays,
    path_distances,
    ris_angles,
    scenario_from_config,
)
from .hermitian_numerics import (
    HermitianFactor,
    NotPositiveDefinite,
    cholesky,
    logdet,
    logdet_plus_outer,
    quad_form,
    solve,
    whiten,
)
from .signal_model import (
    CovarianceModel,
    DataSet,
    SteeringSet,
    TargetParams,
    alpha_from_sinr,
    build_covariance,
    clutter_power_from_cnr,
    steering_vector,
    synthesize,
    synthesize_batch,
    trial_rng,
)

__version__ = "0.1.0"

__all__ = [
    "BatchResult",
    "BinLayout",
    "C_LIGHT",
    "CGlrtConfig",
    "CovarianceModel",
    "DataSet",
    "DetectionOutcome",
    "DetectorKind",
    "HermitianFactor",
    "InfeasibleGeometry",
    "NonMonotonic",
    "NotPositiveDefinite",
    "PathDelays",
    "ScenarioGeometry",
    "SteeringSet",
    "TargetParams",
    "WindowTooSmall",
    "a_glrt",
    "alpha_from_sinr",
    "alpha_hat",
    "amf",
    "batch_evaluate",
    "bin_layout",
    "bounded_cfar_bounds",
    "build_covariance",
    "c_glrt",
    "c_glrt_gain_trace",
    "candidate_pairs",
    "check_feasibility",
    "cholesky",
    "clutter_power_from_cnr",
    "compute_delays",
    "ep_glrt_ka",
    "ep_glrt_km",
    "kelly",
    "logdet",
    "logdet_plus_outer",
    "path_distances",
    "quad_form",
    "ris_angles",
    "scenario_from_config",
    "solve",
    "steering_vector",
    "synthesize",
    "synthesize_batch",
    "trial_rng",
    "whiten",
    "__version__",
]
