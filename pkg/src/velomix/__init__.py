"""Route-choice behavior inference from bike-share trip durations."""

from .classify import (
    MatchConfig,
    PairClassification,
    TreeSummary,
    classify_pair,
    proportion_histogram,
    summarize_tree,
)
from .distributions import (
    DistFit,
    GammaParams,
    GaussianParams,
    LogNormalParams,
    discretized_pmf,
    fit_gamma,
    fit_gaussian,
    fit_lognormal,
    lognormal_mode,
)
from .estimators import (
    DiscretizedGamma,
    DiscretizedGaussian,
    DiscretizedLogNormal,
    DiscretizedLogNormalMixture,
)
from .gof import ChiSquareResult, chi_square_sf, chi_square_test
from .ingest import (
    CleaningConfig,
    CleaningStats,
    PairSample,
    Station,
    TripRecord,
    aggregate_pairs,
    clean_trips,
    parse_stations,
    parse_trips,
    remove_outliers,
)
from .mixture import (
    EmConfig,
    MixtureFit,
    MixtureParams,
    fit_mixture_em,
    mixture_bic,
    order_components,
    responsibilities,
)
from .regression import RegressionResult, ols_fit
from .report import RunConfig, load_run_config, pair_report, run_pipeline
from .routing import (
    RouteReference,
    RoutingClient,
    RoutingConfig,
    fetch_pair_references,
    fetch_route,
)
from .simulate import GroundTruth, gen_sample, mixture_from_modes, run_experiment

__version__ = "0.1.0"
