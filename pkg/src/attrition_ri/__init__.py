"""Randomization inference for treatment effects under sample attrition."""
from .data import Dataset, Mechanism, load_dataset
from .errors import AttritionError, CapacityError, ConfigError, DataError, UnsupportedError
from .imputation import effect_vector, recommended_b, restrict_observed, worst_case
from .nulldist import DesignSpec, NullDistribution, build_null, load_null, save_null, tail_prob
from .quantiles import (
    DeltaHSpec,
    QuantileBand,
    QuantileHypothesis,
    band_all_units_mar,
    band_observed_subsample,
    choose_observed_ranks,
    combine_all_units_sharp,
    delta_H,
    prediction_band,
    quantile_test,
    xi_vector,
)
from .rankstats import StatConfig, psi, ranks, statistic
from .testing import (
    ConstantEffectCI,
    TestResult,
    TwoStepTrace,
    invert_constant_ci,
    label_switch,
    sharp_test,
    sharp_test_subsample,
    two_step_test,
    upper_conf_total_m0,
)

__version__ = "0.1.0"
