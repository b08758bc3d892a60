"""HMM toolkit for discrete-count telegraph signals.

The package splits into focused modules: :mod:`core` holds the model
types and the filtering/smoothing/EM machinery, :mod:`exact` the
path-enumeration cross-check, :mod:`ingest` timestamp parsing and
binning, :mod:`simulate` the seeded generator, :mod:`selection`
multi-state fitting and model comparison, :mod:`io` the on-disk
formats, and :mod:`cli` the command line front end.
"""

from .core import (
    EMISSION_FLOOR,
    OCCUPANCY_FLOOR,
    BinPrediction,
    FitResult,
    ModelSpec,
    ObservationSequence,
    PairwisePosterior,
    PosteriorTrajectory,
    ZeroLikelihoodError,
    backward_pass,
    baum_welch,
    clamp_counts,
    forward_filter,
    log_likelihood,
    predict_bin,
    reestimate_emissions,
    reestimate_initial,
    reestimate_transitions,
    smooth,
)
from .exact import brute_force_filtered, brute_force_pairwise, brute_force_posterior
from .ingest import (
    PhotonRecord,
    TimestampOrderError,
    TimestampParseError,
    bin_counts,
    parse_timestamps,
    rebin,
)
from .selection import (
    GroupRates,
    KStateFit,
    ModelComparison,
    StateLabeling,
    aggregate_populations,
    assign_labels,
    canonicalize,
    compare_models,
    emission_means,
    fit_k_states,
    fit_restarts,
    permute_states,
    rates_from_transitions,
    stationary_distribution,
)
from .simulate import (
    SimConfig,
    default_paper_model,
    poisson_emission_table,
    run_simulation,
    scatter_timestamps,
    simulate_chain,
)

__version__ = "0.1.0"

__all__ = [
    "BinPrediction",
    "EMISSION_FLOOR",
    "FitResult",
    "GroupRates",
    "KStateFit",
    "ModelComparison",
    "ModelSpec",
    "OCCUPANCY_FLOOR",
    "ObservationSequence",
    "PairwisePosterior",
    "PhotonRecord",
    "PosteriorTrajectory",
    "SimConfig",
    "StateLabeling",
    "TimestampOrderError",
    "TimestampParseError",
    "ZeroLikelihoodError",
    "aggregate_populations",
    "assign_labels",
    "backward_pass",
    "baum_welch",
    "bin_counts",
    "brute_force_filtered",
    "brute_force_pairwise",
    "brute_force_posterior",
    "canonicalize",
    "clamp_counts",
    "compare_models",
    "default_paper_model",
    "emission_means",
    "fit_k_states",
    "fit_restarts",
    "forward_filter",
    "log_likelihood",
    "parse_timestamps",
    "permute_states",
    "poisson_emission_table",
    "predict_bin",
    "rates_from_transitions",
    "rebin",
    "reestimate_emissions",
    "reestimate_initial",
    "reestimate_transitions",
    "run_simulation",
    "scatter_timestamps",
    "simulate_chain",
    "smooth",
    "stationary_distribution",
    "__version__",
]
