"""Tensors, connections and geodesics of the Finsler change L -> L exp(beta/L).

Closed forms for the changed metric are checked against an independent
forward-mode differentiation oracle (see :mod:`hexpfinsler.diffkit`).
"""
from .closed_forms import (
    ChangeScalars,
    ChangeSingularityError,
    ShermanMorrisonSingularityError,
    StarredTensors,
    change_scalars,
    invert_rank_one,
    star_cartan,
    star_cartan_mixed,
    star_inverse_metric,
    star_inverse_metric_by_lemma,
    star_l_derivs,
    star_metric,
    starred_tensors,
)
from .difference import (
    berwald_diff,
    change_context,
    defining_residuals,
    difference_tensor,
    oracle_difference,
    parallel_check,
    printed_form_witnesses,
    solve_special,
)
from .diffkit import Dual, EvaluationDomainError, Jet, fd_check, jet_eval
from .fundamentals import (
    DegenerateMetricError,
    base_tensors,
    berwald_coefficients,
    h_cov_deriv_b,
    metricity_residual,
    spray_coefficients,
    spray_connections,
    supporting_element_residual,
    v_cov_deriv,
)
from .metrics import (
    ChangeOverflowError,
    ChartSpec,
    HVectorField,
    InadmissibleMetricError,
    MetricFunction,
    hexp_apply,
    make_hvector,
    make_metric,
    sample_points,
    validate_hvector,
)
from .projectivity import (
    GeodesicTrace,
    InsufficientTraceError,
    condition_residual,
    export_trace,
    geodesic_trace,
    is_projective,
    projective_factor,
    read_trace,
    trace_compare,
)

__version__ = "0.1.0"
