"""Interpolation-accelerated likelihoods for large single-covariate datasets."""

from .errors import CoverageError, EvaluationError, InvalidInputError
from .interp_core import (
    AggregatedWeights,
    ErrorProbeReport,
    NodeGrid,
    WindowSpec,
    accumulate_weights,
    calibrate_spacing,
    chebyshev_nodes,
    estimate_error,
    interpolate_at,
    lagrange_weights,
    max_abs_weight_sum,
    weighted_sum,
    window_for,
)
from .quadrature import HermiteRule, expect_under_normal, gauss_hermite

__version__ = "0.1.0"
