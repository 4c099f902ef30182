"""Replicated simulation studies of a two-stage design.

Each simulation draws a cohort, fits the seven-parameter model and records a
Wald test of the logistic scale parameter. Simulation ``i`` uses seed
``base_seed + i`` and nothing else, so records do not depend on execution
order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .epi_model import PARAM_NAMES, TRUTH, EpiDesign, EpiParams, fit_epi, simulate_cohort
from .optimize import OptimizerConfig

log = logging.getLogger(__name__)

SCALE_INDEX = PARAM_NAMES.index("scale")

RECORD_COLUMNS = (
    ["index", "seed"]
    + [f"est_{n}" for n in PARAM_NAMES]
    + [f"se_{n}" for n in PARAM_NAMES]
    + ["loglik", "hessian_pd", "converged", "wald_scale", "wald_slope", "significant"]
)
TIMING_COLUMNS = ["index", "wall_time_ms"]


@dataclass(frozen=True)
class StudyConfig:
    n_sims: int = 1000
    design: EpiDesign = EpiDesign()
    truth: EpiParams = TRUTH
    base_seed: int = 2007
    grid_h: Optional[float] = None
    optimizer: OptimizerConfig = OptimizerConfig()
    wald_critical: float = 1.96
    use_interpolation: bool = True

    def __post_init__(self):
        if self.n_sims < 1:
            raise ValueError(f"n_sims must be >= 1, got {self.n_sims}")
        if not self.wald_critical > 0:
            raise ValueError(f"wald_critical must be positive, got {self.wald_critical}")


@dataclass
class SimRecord:
    sim_index: int
    seed: int
    estimates: np.ndarray
    se: Optional[np.ndarray]
    loglik: float
    hessian_pd: bool
    converged: bool
    wald_scale: Optional[float]
    significant: bool
    wall_time_ms: float = field(default=0.0, compare=False)


@dataclass
class PowerReport:
    n_sims: int
    n_non_pd: int
    n_non_converged: int
    n_significant: int
    power: float
    estimate_summary: dict
    total_wall_time_s: float


def starting_point(truth: EpiParams, seed: int) -> EpiParams:
    """Truth with each positive parameter scaled by an independent factor in [0.9, 1.1]."""
    rng = np.random.default_rng([seed, 1])
    v = truth.as_array()
    factors = rng.uniform(0.9, 1.1, v.size)
    v = np.where(v > 0, v * factors, v)
    v[PARAM_NAMES.index("rho")] = min(v[PARAM_NAMES.index("rho")], 0.99)
    return EpiParams.from_array(v)


def wald_significant(record: SimRecord, critical: float = 1.96) -> bool:
    if not record.hessian_pd or record.se is None:
        return False
    return bool(record.estimates[SCALE_INDEX] / record.se[SCALE_INDEX] > critical)


def slope_wald(record: SimRecord) -> Optional[float]:
    """Wald ratio for the logistic slope ``1/scale``, using the delta-method SE ``se(scale)/scale**2``.

    Reported for reference only; significance is judged on the scale parameter.
    """
    if not record.hessian_pd or record.se is None:
        return None
    b = float(record.estimates[SCALE_INDEX])
    return (1.0 / b) / (float(record.se[SCALE_INDEX]) / b**2)


def run_sim(config: StudyConfig, sim_index: int) -> SimRecord:
    seed = config.base_seed + sim_index
    t0 = time.perf_counter()
    cohort = simulate_cohort(config.design, config.truth, seed)
    try:
        fit = fit_epi(
            cohort,
            starting_point(config.truth, seed),
            config.optimizer,
            use_interpolation=config.use_interpolation,
            h=config.grid_h,
            hermite_order=config.design.hermite_order,
        )
    except Exception as exc:  # a failed fit is a study outcome, not a crash
        log.warning("simulation %d (seed %d) failed: %s", sim_index, seed, exc)
        return SimRecord(
            sim_index, seed, np.full(len(PARAM_NAMES), np.nan), None, math.nan, False, False, None, False,
            1e3 * (time.perf_counter() - t0),
        )
    wald = float(fit.estimates[SCALE_INDEX] / fit.se[SCALE_INDEX]) if fit.hessian_pd else None
    rec = SimRecord(
        sim_index, seed, fit.estimates, fit.se, fit.loglik, fit.hessian_pd, fit.converged, wald, False
    )
    rec.significant = wald_significant(rec, config.wald_critical)
    rec.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    return rec


def _run_one(args):
    return run_sim(*args)


def _summary(records: list[SimRecord]) -> dict:
    est = np.array([r.estimates for r in records])
    se = np.array([r.se if r.se is not None else np.full(len(PARAM_NAMES), np.nan) for r in records])
    out = {}
    for k, name in enumerate(PARAM_NAMES):
        e = est[:, k][np.isfinite(est[:, k])]
        s = se[:, k][np.isfinite(se[:, k])]
        out[name] = {
            "est_mean": float(np.mean(e)) if e.size else math.nan,
            "est_median": float(np.median(e)) if e.size else math.nan,
            "est_sd": float(np.std(e, ddof=1)) if e.size > 1 else math.nan,
            "se_mean": float(np.mean(s)) if s.size else math.nan,
            "se_median": float(np.median(s)) if s.size else math.nan,
            "se_sd": float(np.std(s, ddof=1)) if s.size > 1 else math.nan,
        }
    return out


def summarize(records: list[SimRecord], total_wall_time_s: float = math.nan) -> PowerReport:
    n = len(records)
    n_sig = sum(r.significant for r in records)
    return PowerReport(
        n_sims=n,
        n_non_pd=sum(not r.hessian_pd for r in records),
        n_non_converged=sum(not r.converged for r in records),
        n_significant=n_sig,
        power=n_sig / n,
        estimate_summary=_summary(records),
        total_wall_time_s=total_wall_time_s,
    )


def run_power_study(config: StudyConfig, workers: int = 1, progress=None) -> tuple[PowerReport, list[SimRecord]]:
    """Run every simulation and summarize; ``progress(i, record)`` is called as records arrive."""
    t0 = time.perf_counter()
    jobs = [(config, i) for i in range(config.n_sims)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            it = pool.map(_run_one, jobs, chunksize=max(1, config.n_sims // (8 * workers)))
            records = []
            for rec in it:
                records.append(rec)
                if progress:
                    progress(rec.sim_index, rec)
    else:
        records = []
        for job in jobs:
            rec = _run_one(job)
            records.append(rec)
            if progress:
                progress(rec.sim_index, rec)
    return summarize(records, time.perf_counter() - t0), records


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def records_csv(records: list[SimRecord]) -> str:
    """Per-simulation results; deterministic for a fixed configuration (no timings)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    k = len(PARAM_NAMES)
    for r in records:
        se = r.se if r.se is not None else [None] * k
        w.writerow(
            [_fmt(r.sim_index), _fmt(r.seed)]
            + [_fmt(x) for x in r.estimates]
            + [_fmt(x) for x in se]
            + [_fmt(r.loglik), _fmt(r.hessian_pd), _fmt(r.converged), _fmt(r.wald_scale), _fmt(slope_wald(r)), _fmt(r.significant)]
        )
    return buf.getvalue()


def timings_csv(records: list[SimRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for r in records:
        w.writerow([r.sim_index, f"{r.wall_time_ms:.3f}"])
    return buf.getvalue()


def report_text(report: PowerReport, config: Optional[StudyConfig] = None) -> str:
    """``key: value`` lines in a fixed order."""
    lines = []
    if config is not None:
        lines += [
            f"n_stage1: {config.design.n_stage1}",
            f"n_stage2: {config.design.n_stage2}",
            f"hermite_order: {config.design.hermite_order}",
            f"base_seed: {config.base_seed}",
            f"grid_h: {'auto' if config.grid_h is None else repr(config.grid_h)}",
            f"use_interpolation: {int(config.use_interpolation)}",
            f"wald_critical: {config.wald_critical!r}",
        ]
    lines += [
        f"n_sims: {report.n_sims}",
        f"n_non_pd: {report.n_non_pd}",
        f"n_non_converged: {report.n_non_converged}",
        f"n_significant: {report.n_significant}",
        f"power: {report.power!r}",
    ]
    for name, stats in report.estimate_summary.items():
        for key, val in stats.items():
            lines.append(f"{name}.{key}: {val!r}")
    lines.append(f"total_wall_time_s: {report.total_wall_time_s:.3f}")
    return "\n".join(lines) + "\n"


def parse_records_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
