"""Piecewise Lagrange interpolation on equally spaced nodes.

The central trick: a sum ``sum_i g(x_i)`` over many samples is replaced by
``sum_j W_j g(node_j)`` where ``W_j`` collects the interpolation weight every
sample places on node ``j``. The totals depend only on the samples, so they are
computed once and reused for every parameter value that changes ``g``.

Windows of ``order`` consecutive nodes tile the grid with a stride of
``order - 2*margin - 1`` nodes. Window ``k`` starts at node ``stride*k`` and
serves ``[node(stride*k + margin), node(stride*k + margin + stride)]``, so every
served point has at least ``margin`` nodes strictly below and above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CoverageError, EvaluationError, InvalidInputError

# Tolerance, in units of the node spacing, for treating a point as sitting on a node.
_SNAP = 1e-9
_CHUNK = 1 << 16


@dataclass(frozen=True)
class WindowSpec:
    order: int = 20
    margin: int = 3

    def __post_init__(self):
        if self.margin < 0 or self.order < 2 * self.margin + 2:
            raise InvalidInputError(
                f"window needs order >= 2*margin + 2, got order={self.order}, margin={self.margin}"
            )

    @property
    def stride(self) -> int:
        return self.order - 2 * self.margin - 1


@dataclass(frozen=True)
class NodeGrid:
    """Equally spaced nodes ``lo + j*h`` for ``0 <= j < count``."""

    lo: float
    h: float
    count: int

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h) and math.isfinite(self.lo)):
            raise InvalidInputError(f"grid spacing must be positive and finite, got h={self.h}")
        if self.count < 2:
            raise InvalidInputError(f"grid needs at least 2 nodes, got {self.count}")

    def node(self, j):
        if np.ndim(j):
            return self.lo + np.asarray(j) * self.h
        return self.lo + j * self.h

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + np.arange(self.count) * self.h

    def served_range(self, window: WindowSpec) -> tuple[float, float]:
        return self.node(window.margin), self.node(self.count - 1 - window.margin)

    @classmethod
    def covering(cls, samples, h: float, window: WindowSpec = WindowSpec()) -> "NodeGrid":
        """Smallest grid of spacing ``h`` whose served range contains all samples.

        The lowest sample sits half a spacing above the first served node, so it
        never lands on a window boundary.
        """
        samples = np.asarray(samples, dtype=float)
        if samples.size == 0:
            raise InvalidInputError("cannot build a grid for an empty sample")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("samples must be finite")
        if not h > 0:
            raise InvalidInputError(f"grid spacing must be positive, got h={h}")
        lo = float(samples.min()) - (window.margin + 0.5) * h
        span = math.ceil((float(samples.max()) - lo) / h)
        count = max(span + 1 + window.margin, window.order)
        grid = cls(lo, h, count)
        # guard the ceil against rounding in (max - lo) / h
        while grid.served_range(window)[1] < samples.max():
            grid = cls(lo, h, grid.count + 1)
        return grid


@dataclass(frozen=True)
class AggregatedWeights:
    grid: NodeGrid
    window: WindowSpec
    totals: np.ndarray
    n_samples: int
    stratum: Optional[object] = None

    def nonzero(self) -> np.ndarray:
        return np.flatnonzero(self.totals)


@dataclass(frozen=True)
class ErrorProbeReport:
    max_abs_error: float
    mean_abs_error: float
    n_probes: int
    worst_x: float


def lagrange_weights(nodes, x: float) -> np.ndarray:
    """Weights ``l_i(x)`` of the interpolating polynomial through ``nodes``.

    Uses the product formula directly; numerators are built from prefix and
    suffix products so that ``x`` equal to a node gives an exact unit vector.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size < 2:
        raise InvalidInputError("need at least two nodes")
    if not np.all(np.diff(nodes) > 0):
        raise InvalidInputError("nodes must be strictly increasing")
    d = x - nodes
    n = nodes.size
    prefix = np.ones(n)
    suffix = np.ones(n)
    prefix[1:] = np.cumprod(d[:-1])
    suffix[:-1] = np.cumprod(d[::-1][:-1])[::-1]
    numer = prefix * suffix
    diffs = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diffs, 1.0)
    return numer / np.prod(diffs, axis=1)


def _equispaced_denominators(order: int) -> np.ndarray:
    k = np.arange(order)
    fact = np.array([math.factorial(i) for i in range(order)], dtype=float)
    sign = np.where((order - 1 - k) % 2 == 0, 1.0, -1.0)
    return sign * fact * fact[::-1]


def local_weights(t, order: int) -> np.ndarray:
    """Lagrange weights on nodes ``0, 1, ..., order-1`` at local positions ``t``.

    ``t`` may be a scalar or 1-D array; the result has shape ``(len(t), order)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d = t[:, None] - np.arange(order)
    prefix = np.ones_like(d)
    suffix = np.ones_like(d)
    np.cumprod(d[:, :-1], axis=1, out=prefix[:, 1:])
    np.cumprod(d[:, :0:-1], axis=1, out=suffix[:, -2::-1])
    return prefix * suffix / _equispaced_denominators(order)


def _locate(grid: NodeGrid, window: WindowSpec, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Window start index and local coordinate (in node units) for each point."""
    u = (xs - grid.lo) / grid.h
    r = np.round(u)
    u = np.where(np.abs(u - r) <= _SNAP, r, u)
    m = window.margin
    top = grid.count - 1 - m
    bad = ~((u >= m) & (u <= top))
    if np.any(bad):
        x_bad = float(np.asarray(xs)[bad][0])
        lo, hi = grid.served_range(window)
        raise CoverageError(f"x={x_bad!r} lies outside the served range [{lo!r}, {hi!r}]")
    k = np.maximum(np.ceil((u - m) / window.stride) - 1, 0)
    start = np.minimum(k * window.stride, grid.count - window.order).astype(np.int64)
    return start, u - start


def window_for(grid: NodeGrid, window: WindowSpec, x: float) -> int:
    """Index of the first node of the window serving ``x``.

    Points on a boundary shared by two windows go to the lower window.
    """
    start, _ = _locate(grid, window, np.array([float(x)]))
    return int(start[0])


def _check_grid(grid: NodeGrid, window: WindowSpec):
    if grid.count < window.order:
        raise InvalidInputError(f"grid has {grid.count} nodes, fewer than window order {window.order}")


def accumulate_weights(
    grid: NodeGrid, window: WindowSpec, samples, stratum=None
) -> AggregatedWeights:
    """Total interpolation weight placed on each node by ``samples``."""
    _check_grid(grid, window)
    samples = np.asarray(samples, dtype=float).ravel()
    totals = np.zeros(grid.count)
    offsets = np.arange(window.order)
    for i in range(0, samples.size, _CHUNK):
        chunk = samples[i : i + _CHUNK]
        start, t = _locate(grid, window, chunk)
        w = local_weights(t, window.order)
        idx = start[:, None] + offsets
        totals += np.bincount(idx.ravel(), weights=w.ravel(), minlength=grid.count)
    return AggregatedWeights(grid, window, totals, int(samples.size), stratum)


def weighted_sum(aggw: AggregatedWeights, g: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sum_j W_j g(node_j)`` over nodes carrying nonzero weight.

    ``g`` is called once with the array of active node positions and must
    return an array of the same shape.
    """
    active = aggw.nonzero()
    if active.size == 0:
        return 0.0
    xs = aggw.grid.node(active)
    vals = np.asarray(g(xs), dtype=float)
    if vals.shape != xs.shape:
        raise InvalidInputError(f"evaluator returned shape {vals.shape}, expected {xs.shape}")
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise EvaluationError(f"evaluator returned {vals[bad][0]} at node x={xs[bad][0]!r}")
    return float(aggw.totals[active] @ vals)


def interpolate_at(grid: NodeGrid, window: WindowSpec, g_values, x):
    """Piecewise Lagrange value at ``x`` (scalar or array) from values at all nodes."""
    _check_grid(grid, window)
    g_values = np.asarray(g_values, dtype=float)
    if g_values.shape != (grid.count,):
        raise InvalidInputError(f"expected {grid.count} node values, got shape {g_values.shape}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    start, t = _locate(grid, window, xs)
    w = local_weights(t, window.order)
    vals = np.einsum("ij,ij->i", w, g_values[start[:, None] + np.arange(window.order)])
    return float(vals[0]) if np.ndim(x) == 0 else vals


def estimate_error(grid: NodeGrid, window: WindowSpec, g, probe_xs) -> ErrorProbeReport:
    """Probe the interpolation error of ``g`` (vectorized callable) at ``probe_xs``."""
    probe_xs = np.atleast_1d(np.asarray(probe_xs, dtype=float))
    node_vals = np.asarray(g(grid.nodes), dtype=float)
    exact = np.asarray(g(probe_xs), dtype=float)
    for where, vals in (("node", node_vals), ("probe", exact)):
        if not np.all(np.isfinite(vals)):
            raise EvaluationError(f"g is not finite at some {where}")
    err = np.abs(interpolate_at(grid, window, node_vals, probe_xs) - exact)
    worst = int(np.argmax(err))
    return ErrorProbeReport(float(err[worst]), float(err.mean()), int(err.size), float(probe_xs[worst]))


def calibrate_spacing(h1: float, eps1: float, eps2: float, order: int) -> float:
    """Spacing expected to reach error ``eps2`` given error ``eps1`` at spacing ``h1``.

    Interpolation error with ``order`` nodes scales roughly like ``h**order``.
    """
    if not (h1 > 0 and eps1 > 0 and eps2 > 0 and order > 0):
        raise InvalidInputError(
            f"calibrate_spacing needs positive inputs, got h1={h1}, eps1={eps1}, eps2={eps2}, order={order}"
        )
    return h1 * (eps2 / eps1) ** (1.0 / order)


def abs_weight_sum(t, order: int) -> np.ndarray:
    return np.abs(local_weights(t, order)).sum(axis=1)


def margin_region(window: WindowSpec) -> tuple[float, float]:
    """Local positions with at least ``margin`` nodes strictly on each side.

    Includes the open gaps next to the served interior; the tiling itself
    only uses ``[margin, order - 1 - margin]``.
    """
    m = window.margin
    return float(max(m - 1, 0)), float(min(window.order - m, window.order - 1))


def _golden_max(f, a: float, b: float, tol: float = 1e-12) -> tuple[float, float]:
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def max_abs_weight_sum(window: WindowSpec, n_scan: int = 10_000, return_argmax: bool = False):
    """Largest sum of absolute Lagrange weights over the margin region of one window."""
    a, b = margin_region(window)
    ts = np.linspace(a, b, n_scan)
    vals = abs_weight_sum(ts, window.order)
    i = int(np.argmax(vals))
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, n_scan - 1)]
    x, v = _golden_max(lambda t: float(abs_weight_sum(t, window.order)[0]), lo, hi)
    if vals[i] > v:
        x, v = float(ts[i]), float(vals[i])
    # the sum is symmetric about the window centre; report the lower of the two maxima
    x = min(x, window.order - 1 - x)
    return (float(v), float(x)) if return_argmax else float(v)


def chebyshev_nodes(order: int, lo: float, hi: float) -> np.ndarray:
    """Zeros of the degree-``order`` Chebyshev polynomial mapped to ``[lo, hi]``, ascending."""
    if order < 1:
        raise InvalidInputError(f"order must be >= 1, got {order}")
    if not lo < hi:
        raise InvalidInputError(f"need lo < hi, got [{lo}, {hi}]")
    k = np.arange(1, order + 1)
    x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k - 1) * np.pi / (2 * order))
    return np.sort(x)
