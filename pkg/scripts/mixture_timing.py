"""Direct vs interpolated fits of the two-component normal mixture.

    python scripts/mixture_timing.py --n 1000000 --spacings 0.2 0.15 0.1

For each spacing: time to aggregate weights, time to fit, the fitted
parameters and their agreement with the direct-likelihood fit.
"""

import argparse
import time

import numpy as np

from interplik.cli import MIXTURE_FIT_CONFIG, agreement_digits
from interplik.mixture_model import (
    PARAM_NAMES,
    TRUTH,
    build_context,
    fit_mixture,
    loglik_direct,
    loglik_interp,
    simulate_mixture,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=2007)
    ap.add_argument("--spacings", type=float, nargs="+", default=[0.2, 0.15, 0.1])
    ap.add_argument("--skip-direct", action="store_true")
    args = ap.parse_args()

    data = simulate_mixture(args.n, TRUTH, args.seed)
    direct = None
    if not args.skip_direct:
        t0 = time.perf_counter()
        direct = fit_mixture(data, MIXTURE_FIT_CONFIG, use_interpolation=False)
        t_direct = time.perf_counter() - t0
        print(f"direct fit: {t_direct:.2f} s, loglik {direct.loglik:.6f}")
        print("  " + "  ".join(f"{n}={v:.6f}" for n, v in zip(PARAM_NAMES, direct.estimates)))
        print("  SE " + "  ".join(f"{v:.5f}" for v in direct.se))

    for h in args.spacings:
        t0 = time.perf_counter()
        ctx = build_context(data, h)
        t_agg = time.perf_counter() - t0
        t0 = time.perf_counter()
        fit = fit_mixture(data, MIXTURE_FIT_CONFIG, h, context=ctx)
        t_fit = time.perf_counter() - t0
        best = type(TRUTH).from_array(fit.estimates)
        ll_d = loglik_direct(best, data)
        ll_i = loglik_interp(best, ctx)
        line = (
            f"h={h:<6g} nodes={ctx.grid.count:<5d} weights {t_agg:.3f} s  fit {t_fit:.3f} s  "
            f"loglik digits {-np.log10(abs(ll_d - ll_i) / abs(ll_d) + 1e-17):.1f}"
        )
        if direct is not None:
            line += (
                f"  estimate digits {agreement_digits(fit.estimates, direct.estimates):.1f}"
                f"  speedup {t_direct / (t_agg + t_fit):.0f}x"
            )
        print(line)
        print("  " + "  ".join(f"{n}={v:.6f}" for n, v in zip(PARAM_NAMES, fit.estimates)))


if __name__ == "__main__":
    main()
