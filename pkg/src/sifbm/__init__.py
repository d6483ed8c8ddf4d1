"""Set-indexed fractional Brownian motion toolkit.

Measure arithmetic on rectangle and grid lower-set families, the fractional
covariance kernels built on the symmetric-difference pseudo-metric, exact
Gaussian sampling, projections along increasing flows, and an executable
property-verification suite.
"""

__version__ = "0.1.0"

from .set_families import (
    ComplexityError,
    ContextError,
    GridLowerSet,
    IncrementSpec,
    MeasureConsistencyError,
    Rectangle,
    SchemaError,
    SetFamily,
    difference_measure,
    discretize,
    dump_family,
    expansion,
    family_from_json,
    family_to_json,
    intersection,
    intersection_measure,
    load_family,
    measure,
    region_measure,
    symdiff_measure,
)
from .covariance import (
    CounterexampleWitness,
    GramMatrix,
    Hurst,
    PsdReport,
    gram,
    increment_cross_cov,
    increment_cross_cov_via_gram,
    increment_variance_closed_form,
    increment_variance_via_gram,
    levy_cov,
    pivoted_cholesky,
    psd_check,
    psd_counterexample_search,
    sheet_cov,
    sifbm_cov,
    sifbm_cov_alt,
)
from .sampler import (
    JitterPolicy,
    MissingSetsError,
    Moments,
    NotPositiveSemidefiniteError,
    SampleEnsemble,
    empirical_moments,
    factorize,
    increment_values,
    sample,
)
from .flows import (
    FlatSegmentError,
    Flow,
    FlowSamples,
    HolderEstimate,
    TimeChange,
    comparison_on_flows,
    flow_from_json,
    flow_to_json,
    holder_estimate,
    invert_time_change,
    load_flow,
    projected_cov,
    sample_along_flow,
    theta,
    time_change,
)
from .property_suite import (
    DEFAULT_CONFIG,
    PropertyReport,
    ScalingAction,
    SuiteConfigError,
    SuiteResult,
    check_c0_stationarity,
    check_fbs_rectangle_identity,
    check_self_similarity,
    exhibit_thcstat_gap,
    run_suite,
)
