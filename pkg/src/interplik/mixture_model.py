"""Two-component normal mixture fitted by maximum likelihood."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .interp_core import AggregatedWeights, NodeGrid, WindowSpec, accumulate_weights, weighted_sum
from .optimize import FitResult, OptimizerConfig, ParamTransform, maximize

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

PARAM_NAMES = ("weight1", "mu1", "sigma1", "mu2", "sigma2")
TRANSFORM = ParamTransform(("logit", "identity", "log", "identity", "log"), PARAM_NAMES)
DEFAULT_H = 0.15


@dataclass(frozen=True)
class MixtureParams:
    weight1: float = 0.3
    mu1: float = 0.0
    sigma1: float = 1.0
    mu2: float = 0.4
    sigma2: float = 1.3

    def __post_init__(self):
        if not 0 <= self.weight1 <= 1:
            raise InvalidInputError(f"weight1 must lie in [0, 1], got {self.weight1}")
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise InvalidInputError(f"sigmas must be positive: {self}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, v) -> "MixtureParams":
        return cls(*map(float, v))

    def canonical(self) -> "MixtureParams":
        """Same distribution with components ordered so that ``mu1 <= mu2``."""
        if self.mu1 <= self.mu2:
            return self
        return MixtureParams(1.0 - self.weight1, self.mu2, self.sigma2, self.mu1, self.sigma1)


TRUTH = MixtureParams()


def simulate_mixture(n: int, params: MixtureParams, seed: int) -> np.ndarray:
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    first = rng.random(n) < params.weight1
    x1 = rng.normal(params.mu1, params.sigma1, n)
    x2 = rng.normal(params.mu2, params.sigma2, n)
    return np.where(first, x1, x2)


def mixture_logdensity(params: MixtureParams, x):
    x = np.asarray(x, dtype=float)
    d1 = (x - params.mu1) / params.sigma1
    d2 = (x - params.mu2) / params.sigma2
    l1 = -0.5 * d1 * d1 - math.log(params.sigma1) - _HALF_LOG_2PI
    l2 = -0.5 * d2 * d2 - math.log(params.sigma2) - _HALF_LOG_2PI
    w = params.weight1
    if w == 1.0:
        out = l1
    elif w == 0.0:
        out = l2
    else:
        out = np.logaddexp(math.log(w) + l1, math.log1p(-w) + l2)
    return float(out) if out.ndim == 0 else out


def loglik_direct(params: MixtureParams, data) -> float:
    return float(np.sum(mixture_logdensity(params, data)))


def build_context(
    data, h: float = DEFAULT_H, window: WindowSpec = WindowSpec(), grid: Optional[NodeGrid] = None
) -> AggregatedWeights:
    data = np.asarray(data, dtype=float)
    if grid is None:
        grid = NodeGrid.covering(data, h, window)
    return accumulate_weights(grid, window, data)


def loglik_interp(params: MixtureParams, context: AggregatedWeights) -> float:
    return weighted_sum(context, lambda xs: mixture_logdensity(params, xs))


def starting_values(data) -> MixtureParams:
    q25, q75 = np.percentile(data, [25, 75])
    sd = float(np.std(data, ddof=1))
    return MixtureParams(0.5, float(q25), sd, float(q75), sd)


def _relabel(fit: FitResult) -> FitResult:
    if fit.estimates[1] <= fit.estimates[3]:
        return fit
    # u' = A u swaps the components and negates logit(weight1)
    perm = [0, 3, 4, 1, 2]
    A = np.eye(5)[perm]
    A[0, 0] = -1.0
    est = fit.estimates[perm]
    est[0] = 1.0 - fit.estimates[0]
    return replace(
        fit,
        estimates=est,
        unconstrained_estimates=A @ fit.unconstrained_estimates,
        se=None if fit.se is None else fit.se[perm],
        hessian=A @ fit.hessian @ A.T,
    )


def fit_mixture(
    data,
    config: OptimizerConfig = OptimizerConfig(),
    h: float = DEFAULT_H,
    *,
    use_interpolation: bool = True,
    context: Optional[AggregatedWeights] = None,
    start: Optional[MixtureParams] = None,
) -> FitResult:
    """Fit the five mixture parameters; reported components satisfy ``mu1 <= mu2``."""
    data = np.asarray(data, dtype=float)
    if data.size < 10:
        raise InvalidInputError(f"need at least 10 observations, got {data.size}")
    if use_interpolation and context is None:
        context = build_context(data, h)
    start = start or starting_values(data)
    sigma_floor = 1e-6 * float(np.std(data, ddof=1))

    def objective(v) -> float:
        if v[2] < sigma_floor or v[4] < sigma_floor:
            return -math.inf
        p = MixtureParams.from_array(v)
        return loglik_interp(p, context) if use_interpolation else loglik_direct(p, data)

    with np.errstate(over="ignore", under="ignore"):
        fit = maximize(objective, start.as_array(), TRANSFORM, config)
    return _relabel(fit)
