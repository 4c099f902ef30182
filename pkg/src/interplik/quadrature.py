"""Gauss-Hermite rules and expectations under a normal distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EvaluationError, InvalidInputError

MAX_ORDER = 64


@dataclass(frozen=True)
class HermiteRule:
    """Nodes and weights for integrals against ``exp(-t**2)``."""

    order: int
    abscissae: np.ndarray
    weights: np.ndarray


def _orthonormal_hermite(n: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Hermite values ``p_0..p_n`` at ``t`` stacked as rows."""
    p = np.empty((n + 1, t.size))
    p[0] = math.pi ** -0.25
    if n >= 1:
        p[1] = math.sqrt(2.0) * t * p[0]
    for k in range(1, n):
        p[k + 1] = math.sqrt(2.0 / (k + 1)) * t * p[k] - math.sqrt(k / (k + 1)) * p[k - 1]
    return p


@lru_cache(maxsize=None)
def _rule(order: int) -> HermiteRule:
    # Golub-Welsch: eigenvalues of the Jacobi matrix, then one Newton step on p_n.
    off = np.sqrt(np.arange(1, order) / 2.0)
    t = np.linalg.eigvalsh(np.diag(off, 1) + np.diag(off, -1))
    p = _orthonormal_hermite(order, t)
    t = t - p[order] / (math.sqrt(2.0 * order) * p[order - 1])
    p = _orthonormal_hermite(order - 1, t)
    w = 1.0 / np.sum(p**2, axis=0)
    t = 0.5 * (t - t[::-1])
    w = 0.5 * (w + w[::-1])
    t.flags.writeable = False
    w.flags.writeable = False
    return HermiteRule(order, t, w)


def gauss_hermite(order: int) -> HermiteRule:
    """Gauss-Hermite rule exact for polynomials of degree ``2*order - 1``."""
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise InvalidInputError(f"Hermite order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    return _rule(int(order))


def expect_under_normal(rule: HermiteRule, mean, sd, f) -> np.ndarray | float:
    """``E[f(Z)]`` for ``Z ~ Normal(mean, sd**2)``.

    ``mean`` and ``sd`` broadcast against each other; ``f`` must accept arrays.
    """
    if np.any(np.asarray(sd) <= 0):
        raise InvalidInputError("sd must be positive")
    z = np.asarray(mean)[..., None] + math.sqrt(2.0) * np.asarray(sd)[..., None] * rule.abscissae
    vals = np.asarray(f(z), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("integrand is not finite at a quadrature node")
    out = vals @ rule.weights / math.sqrt(math.pi)
    return float(out) if np.ndim(out) == 0 else out
