"""Two-stage exposure/outcome model with an error-prone exposure measure.

Everybody in the cohort has a binary outcome ``y`` and an approximate log
exposure ``z_a``; a random validation subsample also has the true log
exposure ``z``. ``(z, z_a)`` is bivariate normal and
``P(y = 1 | z) = expit((z - location) / scale)``.

For people without ``z`` the outcome probability is an expectation over
``z | z_a``, done by Gauss-Hermite quadrature. Because that contribution
depends on the data only through ``z_a`` (per outcome value), its total can
be computed from aggregated interpolation weights.
"""

from __future__ import annotations

import io
import math
from dataclasses import astuple, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit

from .errors import EvaluationError, InvalidInputError
from .interp_core import AggregatedWeights, NodeGrid, WindowSpec, accumulate_weights
from .optimize import FitResult, OptimizerConfig, ParamTransform, maximize
from .quadrature import HermiteRule, gauss_hermite

_LOG_2PI = math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_SQRTPI = math.sqrt(math.pi)
P_FLOOR = 1e-300

PARAM_NAMES = ("mu_z", "sigma_z", "mu_a", "sigma_a", "rho", "location", "scale")
TRANSFORM = ParamTransform(
    ("identity", "log", "identity", "log", "fisher-z", "identity", "log"), PARAM_NAMES
)


@dataclass(frozen=True)
class EpiParams:
    mu_z: float = 0.0
    sigma_z: float = 1.0
    mu_a: float = 0.0
    sigma_a: float = math.sqrt(100.0 / 9.0)
    rho: float = 0.3
    location: float = 4.733
    scale: float = 0.693

    def __post_init__(self):
        if not (self.sigma_z > 0 and self.sigma_a > 0 and self.scale > 0):
            raise InvalidInputError(f"standard deviations and scale must be positive: {self}")
        if not -1 < self.rho < 1:
            raise InvalidInputError(f"rho must lie in (-1, 1), got {self.rho}")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, v) -> "EpiParams":
        return cls(*map(float, v))


TRUTH = EpiParams()


@dataclass(frozen=True)
class EpiDesign:
    n_stage1: int = 63_350
    n_stage2: int = 219
    hermite_order: int = 8

    def __post_init__(self):
        if not 0 < self.n_stage2 <= self.n_stage1:
            raise InvalidInputError(f"need 0 < n_stage2 <= n_stage1, got {self.n_stage2}, {self.n_stage1}")


@dataclass(frozen=True, eq=False)
class Cohort:
    """Simulated study data.

    ``stage1_*`` hold the people measured only with ``z_a``; ``stage2_*`` the
    validation subsample with both exposures.
    """

    stage1_y: np.ndarray
    stage1_za: np.ndarray
    stage2_y: np.ndarray
    stage2_z: np.ndarray
    stage2_za: np.ndarray
    seed: Optional[int] = None

    @property
    def n_stage1_only(self) -> int:
        return int(self.stage1_y.size)

    @property
    def n_stage2(self) -> int:
        return int(self.stage2_y.size)

    def to_text(self) -> str:
        """One record per line: ``stage,y,z,z_a`` with ``z`` empty for stage 1."""
        buf = io.StringIO()
        buf.write("stage,y,z,z_a\n")
        for y, za in zip(self.stage1_y, self.stage1_za):
            buf.write(f"1,{int(y)},,{float(za)!r}\n")
        for y, z, za in zip(self.stage2_y, self.stage2_z, self.stage2_za):
            buf.write(f"2,{int(y)},{float(z)!r},{float(za)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, seed: Optional[int] = None) -> "Cohort":
        s1, s2 = [], []
        for n, line in enumerate(text.splitlines()[1:], start=2):
            if not line.strip():
                continue
            stage, y, z, za = line.split(",")
            if stage == "1":
                s1.append((int(y), float(za)))
            elif stage == "2":
                s2.append((int(y), float(z), float(za)))
            else:
                raise InvalidInputError(f"line {n}: unknown stage {stage!r}")
        a1 = np.array(s1, dtype=float).reshape(-1, 2)
        a2 = np.array(s2, dtype=float).reshape(-1, 3)
        return cls(
            a1[:, 0].astype(np.int8), a1[:, 1], a2[:, 0].astype(np.int8), a2[:, 1], a2[:, 2], seed
        )


class EvalCounter:
    """Counts logistic probability evaluations."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


def simulate_cohort(design: EpiDesign, truth: EpiParams, seed: int) -> Cohort:
    rng = np.random.default_rng(seed)
    n = design.n_stage1
    z = rng.normal(truth.mu_z, truth.sigma_z, n)
    slope = truth.rho * truth.sigma_a / truth.sigma_z
    noise_sd = truth.sigma_a * math.sqrt(1.0 - truth.rho**2)
    z_a = truth.mu_a + slope * (z - truth.mu_z) + noise_sd * rng.standard_normal(n)
    y = (rng.random(n) < expit((z - truth.location) / truth.scale)).astype(np.int8)
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, design.n_stage2, replace=False)] = True
    return Cohort(y[~chosen], z_a[~chosen], y[chosen], z[chosen], z_a[chosen], seed)


def conditional_z_given_za(params: EpiParams, z_a):
    """Mean and sd of ``z`` given ``z_a`` under the bivariate normal."""
    mean = params.mu_z + params.rho * (params.sigma_z / params.sigma_a) * (np.asarray(z_a) - params.mu_a)
    sd = params.sigma_z * math.sqrt(1.0 - params.rho**2)
    return (float(mean) if np.ndim(mean) == 0 else mean), sd


def _log_normal_pdf(x, mu, sigma):
    d = (x - mu) / sigma
    return -0.5 * d * d - math.log(sigma) - 0.5 * _LOG_2PI


def _outcome_probs(z_a: np.ndarray, params: EpiParams, rule: HermiteRule):
    """``(P(y=0 | z_a), P(y=1 | z_a))`` by quadrature over ``z | z_a``."""
    mean, sd = conditional_z_given_za(params, z_a)
    u = (mean[:, None] + (_SQRT2 * sd) * rule.abscissae - params.location) / params.scale
    w = rule.weights / _SQRTPI
    return expit(-u) @ w, expit(u) @ w


def stage1_term(y, z_a, params: EpiParams, rule: HermiteRule, counter: Optional[EvalCounter] = None):
    """``log f(z_a) + log P(y | z_a)`` for people without a true exposure measure.

    ``y`` and ``z_a`` broadcast; a scalar pair returns a float.
    """
    scalar = np.ndim(z_a) == 0 and np.ndim(y) == 0
    y, z_a = np.broadcast_arrays(np.asarray(y), np.asarray(z_a, dtype=float))
    y, z_a = y.ravel(), z_a.ravel()
    mean, sd = conditional_z_given_za(params, z_a)
    sign = np.where(y == 1, 1.0, -1.0)
    u = sign[:, None] * (
        (mean[:, None] + (_SQRT2 * sd) * rule.abscissae - params.location) / params.scale
    )
    if counter is not None:
        counter.add(u.size)
    p = expit(u) @ (rule.weights / _SQRTPI)
    out = _log_normal_pdf(z_a, params.mu_a, params.sigma_a) + np.log(np.clip(p, P_FLOOR, 1.0))
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"stage-1 term not finite for {params}")
    return float(out[0]) if scalar else out


def stage2_term(y, z, z_a, params: EpiParams, counter: Optional[EvalCounter] = None):
    """``log P(y | z) + log f(z, z_a)`` for the validation subsample."""
    one_minus_r2 = 1.0 - params.rho**2
    if one_minus_r2 < 1e-12:
        raise InvalidInputError(f"correlation too close to +-1: rho={params.rho}")
    scalar = np.ndim(z) == 0
    y = np.asarray(y)
    z = np.asarray(z, dtype=float)
    z_a = np.asarray(z_a, dtype=float)
    u = (z - params.location) / params.scale
    if counter is not None:
        counter.add(np.size(u))
    bern = log_expit(np.where(y == 1, u, -u))
    dz = (z - params.mu_z) / params.sigma_z
    da = (z_a - params.mu_a) / params.sigma_a
    quad = (dz * dz - 2.0 * params.rho * dz * da + da * da) / one_minus_r2
    dens = -_LOG_2PI - math.log(params.sigma_z * params.sigma_a) - 0.5 * math.log(one_minus_r2) - 0.5 * quad
    out = bern + dens
    return float(out) if scalar else out


@dataclass(eq=False)
class EpiLikContext:
    """Per-cohort weight tables reused for every likelihood evaluation."""

    grid: NodeGrid
    window: WindowSpec
    weights_y0: AggregatedWeights
    weights_y1: AggregatedWeights
    stage2_y: np.ndarray
    stage2_z: np.ndarray
    stage2_za: np.ndarray
    active_nodes: np.ndarray = field(init=False, repr=False)
    active_w0: np.ndarray = field(init=False, repr=False)
    active_w1: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        active = np.flatnonzero((self.weights_y0.totals != 0) | (self.weights_y1.totals != 0))
        self.active_nodes = self.grid.node(active)
        self.active_w0 = self.weights_y0.totals[active]
        self.active_w1 = self.weights_y1.totals[active]


def default_spacing(z_a) -> float:
    return float(np.std(z_a, ddof=1)) / 8.0


def build_context(
    cohort: Cohort,
    h: Optional[float] = None,
    window: WindowSpec = WindowSpec(),
    grid: Optional[NodeGrid] = None,
) -> EpiLikContext:
    """Aggregate stage-1 interpolation weights separately for ``y = 0`` and ``y = 1``.

    ``h=None`` picks an eighth of the sample sd of stage-1 ``z_a``. An explicit
    ``grid`` overrides ``h``.
    """
    za = cohort.stage1_za
    if grid is None:
        if h is None:
            h = default_spacing(za) if za.size > 1 else 0.1
        if za.size:
            grid = NodeGrid.covering(za, h, window)
        else:
            grid = NodeGrid(0.0, h, window.order)
    y1 = cohort.stage1_y == 1
    return EpiLikContext(
        grid,
        window,
        accumulate_weights(grid, window, za[~y1], stratum=0),
        accumulate_weights(grid, window, za[y1], stratum=1),
        cohort.stage2_y,
        cohort.stage2_z,
        cohort.stage2_za,
    )


def _stage2_total(params, y, z, za, counter):
    if y.size == 0:
        return 0.0
    return float(np.sum(stage2_term(y, z, za, params, counter)))


def loglik_direct(
    params: EpiParams, cohort: Cohort, rule: HermiteRule, counter: Optional[EvalCounter] = None
) -> float:
    """Log-likelihood summed record by record."""
    total = _stage2_total(params, cohort.stage2_y, cohort.stage2_z, cohort.stage2_za, counter)
    if cohort.n_stage1_only:
        total += float(np.sum(stage1_term(cohort.stage1_y, cohort.stage1_za, params, rule, counter)))
    return total


def loglik_interp(
    params: EpiParams, context: EpiLikContext, rule: HermiteRule, counter: Optional[EvalCounter] = None
) -> float:
    """Log-likelihood with the stage-1 total replaced by weighted node values."""
    total = _stage2_total(params, context.stage2_y, context.stage2_z, context.stage2_za, counter)
    xs = context.active_nodes
    if xs.size:
        if counter is not None:
            counter.add(2 * xs.size * rule.order)
        p0, p1 = _outcome_probs(xs, params, rule)
        log_fa = _log_normal_pdf(xs, params.mu_a, params.sigma_a)
        g0 = log_fa + np.log(np.clip(p0, P_FLOOR, 1.0))
        g1 = log_fa + np.log(np.clip(p1, P_FLOOR, 1.0))
        total += float(context.active_w0 @ g0 + context.active_w1 @ g1)
    return total


def make_objective(cohort: Cohort, rule: HermiteRule, context: Optional[EpiLikContext] = None):
    """Log-likelihood as a function of the constrained parameter vector.

    Parameter vectors outside the model's domain score ``-inf``.
    """

    def objective(v) -> float:
        try:
            p = EpiParams.from_array(v)
            if context is None:
                val = loglik_direct(p, cohort, rule)
            else:
                val = loglik_interp(p, context, rule)
        except (InvalidInputError, EvaluationError, FloatingPointError):
            return -math.inf
        return val if math.isfinite(val) else -math.inf

    return objective


def fit_epi(
    cohort: Cohort,
    start: EpiParams,
    config: OptimizerConfig = OptimizerConfig(),
    *,
    use_interpolation: bool = True,
    h: Optional[float] = None,
    hermite_order: int = 8,
    context: Optional[EpiLikContext] = None,
) -> FitResult:
    rule = gauss_hermite(hermite_order)
    if use_interpolation and context is None:
        context = build_context(cohort, h)
    objective = make_objective(cohort, rule, context if use_interpolation else None)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        return maximize(objective, start.as_array(), TRANSFORM, config)
