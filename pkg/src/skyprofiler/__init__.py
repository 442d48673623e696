"""Joint trajectory estimation, prediction, and maneuverability profiling.

The package turns noisy, intermittent position observations of flying
objects into denoised trajectories, short-horizon predictions, per-object
motion profiles (spike-and-slab driving-force fingerprints), Bayesian
class assignments, and an online-learned registry of motion classes that
grows when genuinely new behavior arrives.
"""

__version__ = "0.1.0"

from .baselines import BaselineResult, fcm_direct, kmeans_direct
from .classify import ClassPosterior, ProfileClassifier, classify_population
from .cluster import (
    FuzzyCMeansResult,
    KMeansResult,
    fuzzy_cmeans,
    kmeans_cluster,
)
from .exceptions import (
    ConfigError,
    InsufficientDataError,
    NumericalError,
    SkyProfilerError,
)
from .experiments import (
    ConfusionMatrix,
    EXPERIMENT_NAMES,
    ExperimentConfig,
    config_from_dict,
    evaluate_confusion,
    load_config,
    run_experiment,
    stacked_hyper_error,
)
from .filtering import (
    EstimatedTrajectory,
    FilterState,
    filter_population,
    filter_trajectory,
    predict_ahead,
)
from .kinematics import (
    DrivingForce,
    Observation,
    StateVector,
    SystemModel,
    build_system,
)
from .mixture import extract_population_profiles, extract_profile
from .online import (
    ClassRegistry,
    ClusteringResult,
    IngestResult,
    OnlineConfig,
    RunningProfile,
    SegmentBatch,
    ingest_segment,
    penalized_cluster,
    registry_from_json,
    registry_to_json,
    segment_batches,
    update_running_profile,
)
from .profiles import (
    ChannelProfile,
    ClassHyperParams,
    MotionProfile,
    default_class_set,
    extended_class_set,
    fit_class_hyper_params,
    novel_class,
)
from .simulate import SynthTrajectory, generate_population, sample_profile

__all__ = [
    "BaselineResult",
    "ChannelProfile",
    "ClassHyperParams",
    "ClassPosterior",
    "ClassRegistry",
    "ClusteringResult",
    "ConfigError",
    "ConfusionMatrix",
    "DrivingForce",
    "EXPERIMENT_NAMES",
    "EstimatedTrajectory",
    "ExperimentConfig",
    "FilterState",
    "FuzzyCMeansResult",
    "IngestResult",
    "InsufficientDataError",
    "KMeansResult",
    "MotionProfile",
    "NumericalError",
    "Observation",
    "OnlineConfig",
    "ProfileClassifier",
    "RunningProfile",
    "SegmentBatch",
    "SkyProfilerError",
    "StateVector",
    "SynthTrajectory",
    "SystemModel",
    "build_system",
    "classify_population",
    "config_from_dict",
    "default_class_set",
    "evaluate_confusion",
    "extended_class_set",
    "extract_population_profiles",
    "extract_profile",
    "fcm_direct",
    "filter_population",
    "filter_trajectory",
    "fit_class_hyper_params",
    "fuzzy_cmeans",
    "generate_population",
    "ingest_segment",
    "kmeans_cluster",
    "kmeans_direct",
    "load_config",
    "novel_class",
    "penalized_cluster",
    "predict_ahead",
    "registry_from_json",
    "registry_to_json",
    "run_experiment",
    "sample_profile",
    "segment_batches",
    "stacked_hyper_error",
    "update_running_profile",
    "__version__",
]
