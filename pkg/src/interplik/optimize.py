"""Maximum likelihood on an unconstrained scale with finite-difference standard errors.

Parameters with a restricted domain are searched through a per-coordinate
transform (``log`` for scales, ``fisher-z``/tanh for correlations, ``logit``
for proportions). The Hessian is taken on the unconstrained scale and the
resulting standard errors are carried back with the delta method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import EvaluationError, InvalidInputError

CODES = ("identity", "log", "fisher-z", "logit")


@dataclass(frozen=True)
class ParamTransform:
    codes: tuple[str, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        bad = [c for c in self.codes if c not in CODES]
        if bad:
            raise InvalidInputError(f"unknown transform codes {bad}; expected one of {CODES}")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"p{i}" for i in range(len(self.codes))))
        if len(self.names) != len(self.codes):
            raise InvalidInputError("names and codes differ in length")

    def __len__(self):
        return len(self.codes)


def to_unconstrained(transform: ParamTransform, constrained) -> np.ndarray:
    c = np.asarray(constrained, dtype=float)
    if c.shape != (len(transform),):
        raise InvalidInputError(f"expected {len(transform)} values, got shape {c.shape}")
    out = np.empty_like(c)
    for i, (code, name, v) in enumerate(zip(transform.codes, transform.names, c)):
        if code == "identity":
            out[i] = v
        elif code == "log":
            if not v > 0:
                raise InvalidInputError(f"{name} must be positive, got {v}")
            out[i] = math.log(v)
        elif code == "fisher-z":
            if not -1 < v < 1:
                raise InvalidInputError(f"{name} must lie in (-1, 1), got {v}")
            out[i] = math.atanh(v)
        else:
            if not 0 < v < 1:
                raise InvalidInputError(f"{name} must lie in (0, 1), got {v}")
            out[i] = math.log(v) - math.log1p(-v)
    return out


def from_unconstrained(transform: ParamTransform, unconstrained) -> np.ndarray:
    u = np.asarray(unconstrained, dtype=float)
    out = np.empty_like(u)
    for i, (code, v) in enumerate(zip(transform.codes, u)):
        if code == "identity":
            out[i] = v
        elif code == "log":
            out[i] = math.exp(v)
        elif code == "fisher-z":
            out[i] = math.tanh(v)
        else:
            out[i] = 0.5 * (1.0 + math.tanh(0.5 * v))
    return out


def jacobian_diag(transform: ParamTransform, unconstrained) -> np.ndarray:
    """``|d constrained / d unconstrained|`` per coordinate."""
    u = np.asarray(unconstrained, dtype=float)
    c = from_unconstrained(transform, u)
    out = np.ones_like(u)
    for i, code in enumerate(transform.codes):
        if code == "log":
            out[i] = c[i]
        elif code == "fisher-z":
            out[i] = 1.0 - c[i] ** 2
        elif code == "logit":
            out[i] = c[i] * (1.0 - c[i])
    return out


@dataclass(frozen=True)
class OptimizerConfig:
    max_evaluations: int = 20_000
    # relative to max(1, |objective(start)|)
    function_tolerance: float = 1e-12
    parameter_tolerance: float = 1e-7
    restarts: int = 2
    fd_step_scale: float = 1e-4
    initial_step: float = 0.1

    def __post_init__(self):
        if not (self.function_tolerance > 0 and self.parameter_tolerance > 0 and self.fd_step_scale > 0):
            raise InvalidInputError("tolerances and fd_step_scale must be positive")
        if self.restarts < 0 or self.max_evaluations < 1:
            raise InvalidInputError("restarts must be >= 0 and max_evaluations >= 1")


@dataclass
class FitResult:
    estimates: np.ndarray
    unconstrained_estimates: np.ndarray
    loglik: float
    se: Optional[np.ndarray]
    hessian: np.ndarray
    hessian_pd: bool
    converged: bool
    # objective calls made by the search, excluding the Hessian stencil
    n_evaluations: int
    names: tuple[str, ...] = field(default=())


def fd_hessian(objective: Callable[[np.ndarray], float], point, step_scale: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian with step ``step_scale * max(1, |x_i|)``."""
    x = np.asarray(point, dtype=float)
    n = x.size
    steps = step_scale * np.maximum(1.0, np.abs(x))

    def f(v):
        val = float(objective(v))
        if not math.isfinite(val):
            raise EvaluationError(f"objective not finite at {v.tolist()}")
        return val

    f0 = f(x)
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = steps[i]
        H[i, i] = (f(x + e) - 2.0 * f0 + f(x - e)) / steps[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = steps[i]
            ej[j] = steps[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
    return 0.5 * (H + H.T)


def standard_errors(hessian, transform: ParamTransform, unconstrained) -> tuple[Optional[np.ndarray], bool]:
    """Delta-method standard errors from the Hessian of a log-likelihood.

    Returns ``(None, False)`` when ``-hessian`` is not positive definite.
    """
    neg = -np.asarray(hessian, dtype=float)
    try:
        chol = np.linalg.cholesky(neg)
    except np.linalg.LinAlgError:
        return None, False
    inv_chol = np.linalg.inv(chol)
    var_u = np.sum(inv_chol**2, axis=0)
    se = np.sqrt(var_u) * jacobian_diag(transform, unconstrained)
    if not np.all(np.isfinite(se) & (se > 0)):
        return None, False
    return se, True


def _simplex(x0: np.ndarray, step: float) -> np.ndarray:
    return np.vstack([x0, x0 + step * np.eye(x0.size)])


def maximize(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    transform: ParamTransform,
    config: OptimizerConfig = OptimizerConfig(),
) -> FitResult:
    """Maximize ``objective`` (a function of constrained parameters) by Nelder-Mead.

    The simplex search runs on the unconstrained scale and is restarted from
    the best point ``config.restarts`` times with a fresh simplex.
    """
    n_evals = 0

    def neg(u):
        nonlocal n_evals
        n_evals += 1
        val = objective(from_unconstrained(transform, u))
        return -val if math.isfinite(val) else math.inf

    u0 = to_unconstrained(transform, start)
    f0 = -neg(u0)
    if not math.isfinite(f0):
        raise EvaluationError(f"objective is not finite at the start {list(start)}")
    fatol = config.function_tolerance * max(1.0, abs(f0))

    best_u, best_f = u0, f0
    converged = False
    for attempt in range(config.restarts + 1):
        budget = config.max_evaluations - n_evals
        if budget <= 0:
            converged = False
            break
        res = minimize(
            neg,
            best_u,
            method="Nelder-Mead",
            options={
                "xatol": config.parameter_tolerance,
                "fatol": fatol,
                "maxfev": budget,
                "maxiter": 10 * budget,
                "initial_simplex": _simplex(best_u, config.initial_step),
            },
        )
        improvement = -res.fun - best_f
        if -res.fun >= best_f:
            best_u, best_f = res.x, -res.fun
        converged = bool(res.success)
        if attempt > 0 and improvement <= fatol:
            break
    if not math.isfinite(best_f):
        raise EvaluationError("no finite objective value found")

    def obj_u(u):
        return objective(from_unconstrained(transform, u))

    try:
        H = fd_hessian(obj_u, best_u, config.fd_step_scale)
        se, pd = standard_errors(H, transform, best_u)
    except EvaluationError:
        H = np.full((len(transform), len(transform)), np.nan)
        se, pd = None, False
    return FitResult(
        estimates=from_unconstrained(transform, best_u),
        unconstrained_estimates=np.asarray(best_u, dtype=float),
        loglik=float(best_f),
        se=se,
        hessian=H,
        hessian_pd=pd,
        converged=converged,
        n_evaluations=n_evals,
        names=transform.names,
    )
