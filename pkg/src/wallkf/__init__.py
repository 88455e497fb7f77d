"""Sequential data assimilation for wall thermal properties and heat fluxes.

The package joins three layers:

* exact Kalman filters for the noisily observed boundary process
  (:mod:`wallkf.kalman`) and for the state conditional on fixed parameters
  (:mod:`wallkf.marginal_kf`);
* two joint state-parameter ensemble filters sharing one analysis step
  (:mod:`wallkf.ensemble`): a marginalized variant that integrates the
  boundary uncertainty out analytically, and a sampled-control variant;
* the 1D heat-conduction wall instantiation (:mod:`wallkf.wall`), data
  handling (:mod:`wallkf.data`), and run orchestration with a CLI
  (:mod:`wallkf.experiment`, :mod:`wallkf.cli`).
"""

from .data import (
    MeasurementRecord,
    NoiseSpec,
    SyntheticSpec,
    TruthSeries,
    estimate_noise_variance,
    generate_synthetic,
    load_csv,
    write_csv,
)
from .ensemble import (
    Ensemble,
    FilterDiagnostics,
    LogNormalPrior,
    PointPrior,
    PredictionCovariance,
    PriorSpec,
    UniformPrior,
    analyze,
    enkf_covariance,
    enkf_predict,
    enmkf_covariance,
    enmkf_predict,
    init_ensemble,
    sample_covariance,
    step,
)
from .errors import ConfigError, DataError, DimensionError, NumericalError, WallkfError
from .experiment import (
    ComparisonReport,
    ConvergenceStudy,
    NoiseConfig,
    RunConfig,
    RunResult,
    StoppingRule,
    compare_methods,
    convergence_study,
    load_run_config,
    run_filter,
    stopping_check,
    stopping_time,
)
from .kalman import (
    ControlFilterState,
    ControlModel,
    ar1_model,
    ar2_model,
    default_control_model,
    filter_series,
    kf_predict,
    kf_update,
    observed_posterior,
)
from .marginal_kf import ConditionalStateFilter, mkf_predict, mkf_update
from .statespace import ModelOperators, ModelProvider, augment, split
from .wall import (
    WallConfig,
    WallParameters,
    build_operators,
    flux_observe,
    initial_condition,
    wall_provider,
)

__version__ = "0.1.0"
