"""Command-line entry point: ``interplik <command> [options]``.

Commands
--------
power-study      replicated two-stage design simulations; writes records.csv,
                 timings.csv and report.txt under --out
fit-mixture      two-component normal mixture fit (direct and/or interpolated)
validate-interp  interpolation checks: published weights, Runge error,
                 absolute-weight bound, Chebyshev comparison
calibrate        measure interpolation error at one spacing and recommend another
bench            direct vs interpolated timings

records.csv columns, in order: index, seed, est_<p> for the seven model
parameters (mu_z, sigma_z, mu_a, sigma_a, rho, location, scale), se_<p> for the
same parameters (empty when the Hessian is not positive definite), loglik,
hessian_pd, converged, wald_scale, wald_slope, significant. wald_slope is the
Wald ratio of the logistic slope 1/scale (delta-method SE); it is reported for
reference and does not enter the power calculation. Floats are written with
``repr``; flags are 0/1. Wall-clock times go to timings.csv (index,
wall_time_ms) so that records.csv is byte-identical across repeated runs.

report.txt and mixture_report.txt hold ``key: value`` lines.

Exit status: 0 success, 1 a check failed, 2 bad configuration or input,
3 output could not be written.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import epi_model, interp_core, mixture_model
from .errors import InvalidInputError
from .interp_core import NodeGrid, WindowSpec
from .optimize import OptimizerConfig
from .quadrature import gauss_hermite
from .study_harness import StudyConfig, records_csv, report_text, run_power_study, timings_csv

log = logging.getLogger("interplik")

PUBLISHED_WEIGHTS_AT_4_5 = (
    "0.00001019143", "-0.0002489622", "0.003136923", "-0.0296265", "0.355518",
    "1.066554", "-0.8295419", "0.9243467", "-0.9903715", "0.9414643",
    "-0.770289", "0.533277", "-0.3081156", "0.1463898", "-0.05613442",
    "0.01692943", "-0.003864326", "0.0006273847", "-0.00006454575", "0.000003162859",
)
MARGIN_BOUND = (72.0, 72.8)
RUNGE_TOL = 1e-8
RUNGE_H = 0.02

MIXTURE_FIT_CONFIG = OptimizerConfig(function_tolerance=1e-15, parameter_tolerance=1e-9, restarts=4)


class CommandError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


# ---------------------------------------------------------------- helpers


def runge(x):
    return 1.0 / (1.0 + 25.0 * np.asarray(x) ** 2)


def tiled_grid(a: float, b: float, h: float, window: WindowSpec) -> NodeGrid:
    """Whole windows, the first serving from ``a``, enough to serve up to ``b``."""
    n_windows = max(1, math.ceil((b - a) / (window.stride * h) - 1e-9))
    return NodeGrid(a - window.margin * h, h, n_windows * window.stride + window.order - window.stride)


def printed_decimals(text: str) -> int:
    return len(text.split(".")[1]) if "." in text else 0


def weights_match_published() -> tuple[bool, float]:
    """Compare computed weights to each published value at its printed precision."""
    w = interp_core.lagrange_weights(np.arange(20.0), 4.5)
    worst = 0.0
    ok = True
    for val, txt in zip(w, PUBLISHED_WEIGHTS_AT_4_5):
        half_ulp = 0.5 * 10.0 ** -printed_decimals(txt)
        err = abs(val - float(txt))
        worst = max(worst, err / half_ulp)
        ok &= err <= half_ulp * (1 + 1e-9)
    return ok, worst


def runge_error(h: float = RUNGE_H, window: WindowSpec = WindowSpec(), n_probes: int = 1000):
    grid = tiled_grid(-1.0, 1.0, h, window)
    return grid, interp_core.estimate_error(grid, window, runge, np.linspace(-1.0, 1.0, n_probes))


def chebyshev_comparison(order: int = 20, lo: float = -1.0, hi: float = 1.0, margin: int = 3):
    """Mean absolute errors for sin(5x - 0.4) at equal node density.

    Returns ``(piecewise equally spaced, single Chebyshev window, one
    equally spaced window over the whole range plus margins)``.
    """
    f = lambda x: np.sin(5.0 * np.asarray(x) - 0.4)  # noqa: E731
    h = (hi - lo) / order
    trial = np.linspace(lo + 0.001 * h, hi - 0.001 * h, 1000)
    cheb = interp_core.chebyshev_nodes(order, lo, hi)
    cheb_vals = np.array([interp_core.lagrange_weights(cheb, x) @ f(cheb) for x in trial])
    cheb_err = float(np.mean(np.abs(cheb_vals - f(trial))))
    window = WindowSpec(order, margin)
    grid = tiled_grid(lo, hi, h, window)
    piece = interp_core.estimate_error(grid, window, f, trial).mean_abs_error
    wide = np.arange(round((hi - lo) / h) + 2 * margin + 1) * h + lo - margin * h
    wide_vals = np.array([interp_core.lagrange_weights(wide, x) @ f(wide) for x in trial])
    wide_err = float(np.mean(np.abs(wide_vals - f(trial))))
    return piece, cheb_err, wide_err


def dense_scan_bound(window: WindowSpec, n: int = 100_000) -> float:
    a, b = interp_core.margin_region(window)
    return float(interp_core.abs_weight_sum(np.linspace(a, b, n), window.order).max())


def _probe(name: str):
    """Vectorized probe function and the domain it is checked on."""
    if name == "runge":
        return runge, (-1.0, 1.0)
    if name == "mixture-logdensity":
        return (lambda x: mixture_model.mixture_logdensity(mixture_model.TRUTH, x)), (-6.0, 6.0)
    if name == "epi-stage1":
        rule = gauss_hermite(8)
        return (lambda x: epi_model.stage1_term(1, x, epi_model.TRUTH, rule)), (-15.0, 15.0)
    raise CommandError(f"unknown probe function {name!r}", 2)


def measure_error(name: str, h: float, order: int = 20, n_probes: int = 997) -> float:
    g, (a, b) = _probe(name)
    window = WindowSpec(order, min(3, (order - 2) // 2))
    grid = tiled_grid(a, b, h, window)
    return interp_core.estimate_error(grid, window, g, np.linspace(a, b, n_probes)).max_abs_error


def agreement_digits(a, b) -> float:
    """Significant figures to which ``a`` and ``b`` agree, relative to ``max(|a|, |b|, 1)``."""
    a, b = np.atleast_1d(a).astype(float), np.atleast_1d(b).astype(float)
    rel = np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0))
    return math.inf if rel == 0 else float(-math.log10(rel))


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise CommandError(f"cannot write {path}: {exc}", 3) from None


def _kv(lines) -> str:
    return "".join(f"{k}: {v}\n" for k, v in lines)


# ---------------------------------------------------------------- commands


def cmd_power_study(args) -> int:
    common, cfg = cfgmod.load(args.config, "power-study")
    cfgmod.apply_overrides(common, {"seed": args.seed, "workers": args.workers, "out": args.out})
    cfgmod.apply_overrides(
        cfg,
        {
            "sims": args.sims,
            "n_stage1": args.n_stage1,
            "n_stage2": args.n_stage2,
            "hermite_order": args.hermite_order,
            "h": args.h,
            "interp": False if args.no_interp else None,
        },
    )
    try:
        study = StudyConfig(
            n_sims=cfg.sims,
            design=epi_model.EpiDesign(cfg.n_stage1, cfg.n_stage2, cfg.hermite_order),
            base_seed=common.seed,
            grid_h=cfg.h,
            optimizer=OptimizerConfig(max_evaluations=cfg.max_evaluations, restarts=cfg.restarts),
            wald_critical=cfg.wald_critical,
            use_interpolation=cfg.interp,
        )
    except (ValueError, InvalidInputError) as exc:
        raise CommandError(f"invalid power-study configuration: {exc}", 2) from None

    def progress(i, rec):
        if (i + 1) % 50 == 0:
            log.info("%d/%d simulations done", i + 1, study.n_sims)

    report, records = run_power_study(study, workers=max(1, common.workers), progress=progress)
    out = cfgmod.out_dir(common)
    _write(out / "records.csv", records_csv(records))
    _write(out / "timings.csv", timings_csv(records))
    _write(out / "report.txt", report_text(report, study))
    print(f"power: {report.power:.4f} ({report.n_significant}/{report.n_sims})")
    print(f"non-positive-definite hessians: {report.n_non_pd}")
    print(f"non-converged fits: {report.n_non_converged}")
    print(f"wall time: {report.total_wall_time_s:.1f} s")
    print(f"wrote {out / 'records.csv'}, {out / 'timings.csv'}, {out / 'report.txt'}")
    return 0


def cmd_fit_mixture(args) -> int:
    common, cfg = cfgmod.load(args.config, "fit-mixture")
    cfgmod.apply_overrides(common, {"seed": args.seed, "out": args.out})
    cfgmod.apply_overrides(
        cfg, {"data": args.data, "simulate": args.simulate, "h": args.h, "check": True if args.check else None}
    )
    if cfg.data:
        try:
            data = np.loadtxt(cfg.data, dtype=float, ndmin=1)
        except (OSError, ValueError) as exc:
            raise CommandError(f"cannot read data {cfg.data}: {exc}", 2) from None
    elif cfg.simulate:
        data = mixture_model.simulate_mixture(cfg.simulate, mixture_model.TRUTH, common.seed)
    else:
        raise CommandError("fit-mixture needs --data PATH or --simulate N", 2)
    if data.size < 10 or not np.all(np.isfinite(data)):
        raise CommandError("fit-mixture needs at least 10 finite observations", 2)

    t0 = time.perf_counter()
    context = mixture_model.build_context(data, cfg.h)
    t_agg = time.perf_counter() - t0
    t0 = time.perf_counter()
    fit = mixture_model.fit_mixture(data, MIXTURE_FIT_CONFIG, cfg.h, context=context)
    t_fit = time.perf_counter() - t0

    lines = [("n", data.size), ("h", repr(cfg.h)), ("grid_nodes", context.grid.count)]
    for i, name in enumerate(mixture_model.PARAM_NAMES):
        lines.append((name, repr(float(fit.estimates[i]))))
        lines.append((f"se_{name}", repr(float(fit.se[i])) if fit.se is not None else ""))
    lines += [
        ("loglik", repr(fit.loglik)),
        ("hessian_pd", int(fit.hessian_pd)),
        ("converged", int(fit.converged)),
        ("time_aggregate_s", f"{t_agg:.4f}"),
        ("time_fit_s", f"{t_fit:.4f}"),
    ]
    if cfg.check:
        best = mixture_model.MixtureParams.from_array(fit.estimates)
        ll_d = mixture_model.loglik_direct(best, data)
        ll_i = mixture_model.loglik_interp(best, context)
        t0 = time.perf_counter()
        direct = mixture_model.fit_mixture(data, MIXTURE_FIT_CONFIG, use_interpolation=False)
        t_direct = time.perf_counter() - t0
        lines += [
            ("loglik_direct_at_estimate", repr(ll_d)),
            ("loglik_interp_at_estimate", repr(ll_i)),
            ("loglik_agreement_digits", f"{agreement_digits(ll_d, ll_i):.2f}"),
            ("estimate_agreement_digits", f"{agreement_digits(fit.estimates, direct.estimates):.2f}"),
            ("time_direct_fit_s", f"{t_direct:.4f}"),
            ("speedup", f"{t_direct / (t_agg + t_fit):.1f}"),
        ]
    text = _kv(lines)
    sys.stdout.write(text)
    _write(cfgmod.out_dir(common) / "mixture_report.txt", text)
    return 0


def cmd_validate_interp(args) -> int:
    _, cfg = cfgmod.load(args.config, "validate-interp")
    cfgmod.apply_overrides(cfg, {"order": args.order, "margin": args.margin, "runge_h": args.runge_h})
    margin = cfg.margin if cfg.margin is not None else min(3, (cfg.order - 2) // 2)
    try:
        window = WindowSpec(cfg.order, margin)
    except InvalidInputError as exc:
        raise CommandError(str(exc), 2) from None
    results = []

    ok, worst = weights_match_published()
    results.append(("published-weights", ok, f"worst error {worst:.3f} half-units of the last printed digit"))

    _, rep = runge_error(cfg.runge_h)
    if math.isclose(cfg.runge_h, RUNGE_H):
        results.append(("runge-bound", rep.max_abs_error < RUNGE_TOL, f"max error {rep.max_abs_error:.3e} (< {RUNGE_TOL:g})"))
    else:
        results.append(("runge-bound", True, f"informational at h={cfg.runge_h}: max error {rep.max_abs_error:.3e}"))

    bound, arg = interp_core.max_abs_weight_sum(window, return_argmax=True)
    if (window.order, window.margin) == (20, 3):
        ok = MARGIN_BOUND[0] <= bound <= MARGIN_BOUND[1]
        detail = f"max sum |l_i| = {bound:.5f} at x = {arg:.4f}, expected in {list(MARGIN_BOUND)}"
    else:
        scan = dense_scan_bound(window)
        ok = abs(bound - scan) <= 1e-6
        detail = f"max sum |l_i| = {bound:.8f}, dense scan {scan:.8f}"
    results.append(("margin-bound", ok, detail))

    piece, cheb, wide = chebyshev_comparison()
    results.append(
        (
            "chebyshev-comparison",
            piece < cheb,
            f"mean abs error: piecewise {piece:.3e}, chebyshev {cheb:.3e}, 27-node single window {wide:.3e}",
        )
    )
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_calibrate(args) -> int:
    _, cfg = cfgmod.load(args.config, "calibrate")
    cfgmod.apply_overrides(cfg, {"probe": args.probe, "h1": args.h1, "target": args.target, "order": args.order})
    if not (cfg.h1 > 0 and cfg.target > 0):
        raise CommandError("h1 and target must be positive", 2)
    eps1 = measure_error(cfg.probe, cfg.h1, cfg.order)
    print(f"probe: {cfg.probe}")
    print(f"h1: {cfg.h1!r}  measured max error: {eps1:.3e}")
    if eps1 == 0:
        print(f"recommended h: {cfg.h1!r} (interpolation exact at h1)")
        return 0
    h2 = interp_core.calibrate_spacing(cfg.h1, eps1, cfg.target, cfg.order)
    eps2 = measure_error(cfg.probe, h2, cfg.order)
    ok = eps2 <= 10 * cfg.target
    print(f"recommended h: {h2!r}  (target {cfg.target:.3e})")
    print(f"{'PASS' if ok else 'FAIL'} verification at recommended h: max error {eps2:.3e}")
    return 0 if ok else 1


def _time(fn, min_time: float = 0.2) -> float:
    n, t0 = 0, time.perf_counter()
    while True:
        fn()
        n += 1
        el = time.perf_counter() - t0
        if el >= min_time:
            return el / n


def cmd_bench(args) -> int:
    common, cfg = cfgmod.load(args.config, "bench")
    cfgmod.apply_overrides(common, {"seed": args.seed})
    cfgmod.apply_overrides(
        cfg,
        {"n_stage1": args.n_stage1, "n_stage2": args.n_stage2, "mixture_n": args.mixture_n,
         "fits": False if args.no_fits else None},
    )
    rows = []
    rule = gauss_hermite(8)
    cohort = epi_model.simulate_cohort(
        epi_model.EpiDesign(cfg.n_stage1, cfg.n_stage2), epi_model.TRUTH, common.seed
    )
    t0 = time.perf_counter()
    ctx = epi_model.build_context(cohort)
    t_ctx = time.perf_counter() - t0
    td = _time(lambda: epi_model.loglik_direct(epi_model.TRUTH, cohort, rule))
    ti = _time(lambda: epi_model.loglik_interp(epi_model.TRUTH, ctx, rule))
    rows.append(("epi loglik eval", td, ti))
    if cfg.fits:
        t0 = time.perf_counter()
        epi_model.fit_epi(cohort, epi_model.TRUTH, use_interpolation=False)
        td = time.perf_counter() - t0
        t0 = time.perf_counter()
        epi_model.fit_epi(cohort, epi_model.TRUTH)
        ti = time.perf_counter() - t0
        rows.append(("epi fit (incl. weights)", td, ti))
    data = mixture_model.simulate_mixture(cfg.mixture_n, mixture_model.TRUTH, common.seed)
    mctx = mixture_model.build_context(data)
    td = _time(lambda: mixture_model.loglik_direct(mixture_model.TRUTH, data))
    ti = _time(lambda: mixture_model.loglik_interp(mixture_model.TRUTH, mctx))
    rows.append(("mixture loglik eval", td, ti))
    if cfg.fits:
        t0 = time.perf_counter()
        mixture_model.fit_mixture(data, MIXTURE_FIT_CONFIG, use_interpolation=False)
        td = time.perf_counter() - t0
        t0 = time.perf_counter()
        mixture_model.fit_mixture(data, MIXTURE_FIT_CONFIG)
        ti = time.perf_counter() - t0
        rows.append(("mixture fit (incl. weights)", td, ti))
    print(f"epi cohort {cfg.n_stage1}/{cfg.n_stage2}, weight aggregation {t_ctx * 1e3:.1f} ms; mixture n={cfg.mixture_n}")
    print(f"{'case':<30}{'direct s':>12}{'interp s':>12}{'speedup':>10}")
    for name, td, ti in rows:
        print(f"{name:<30}{td:>12.5f}{ti:>12.5f}{td / ti:>10.1f}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with [common] and per-command sections")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--workers", type=int, help="worker processes (power-study)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="interplik", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("power-study", parents=[common], help="simulated power of a two-stage design")
    s.add_argument("--sims", type=int)
    s.add_argument("--n-stage1", type=int)
    s.add_argument("--n-stage2", type=int)
    s.add_argument("--hermite-order", type=int)
    s.add_argument("--h", type=float, help="grid spacing (default: sd of stage-1 z_a / 8)")
    s.add_argument("--no-interp", action="store_true", help="use the direct likelihood")
    s.set_defaults(func=cmd_power_study)

    s = sub.add_parser("fit-mixture", parents=[common], help="fit a two-component normal mixture")
    s.add_argument("--data", metavar="PATH", help="one number per line")
    s.add_argument("--simulate", type=int, metavar="N", help="simulate N draws from the reference mixture")
    s.add_argument("--h", type=float)
    s.add_argument("--check", action="store_true", help="also fit with the direct likelihood and compare")
    s.set_defaults(func=cmd_fit_mixture)

    s = sub.add_parser("validate-interp", parents=[common], help="interpolation checks")
    s.add_argument("--order", type=int)
    s.add_argument("--margin", type=int)
    s.add_argument("--runge-h", type=float)
    s.set_defaults(func=cmd_validate_interp)

    s = sub.add_parser("calibrate", parents=[common], help="recommend a node spacing")
    s.add_argument("--probe", choices=["runge", "mixture-logdensity", "epi-stage1"])
    s.add_argument("--h1", type=float)
    s.add_argument("--target", type=float)
    s.add_argument("--order", type=int)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("bench", parents=[common], help="direct vs interpolated timings")
    s.add_argument("--n-stage1", type=int)
    s.add_argument("--n-stage2", type=int)
    s.add_argument("--mixture-n", type=int)
    s.add_argument("--no-fits", action="store_true")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
