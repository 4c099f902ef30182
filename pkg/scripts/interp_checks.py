"""Interpolation error as a function of node spacing and window order.

    python scripts/interp_checks.py

Prints the maximum error for Runge's function and for the mixture and
stage-1 log-densities over a range of spacings, alongside the largest sum of
absolute weights for several (order, margin) choices. The error is expected
to fall roughly like h**order until rounding takes over.
"""

import argparse

import numpy as np

from interplik import interp_core
from interplik.cli import measure_error
from interplik.interp_core import WindowSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--order", type=int, default=20)
    args = ap.parse_args()

    print(f"max abs interpolation error, {args.order}-node windows")
    probes = ("runge", "mixture-logdensity", "epi-stage1")
    print(f"{'h':>8}" + "".join(f"{p:>22}" for p in probes))
    for h in (0.4, 0.3, 0.2, 0.15, 0.1, 0.05, 0.02):
        row = [measure_error(p, h * (0.1 if p == "runge" else 1.0), args.order) for p in probes]
        print(f"{h:>8g}" + "".join(f"{e:>22.3e}" for e in row))
    print("(runge uses a tenth of the listed spacing)")

    print("\nlargest sum of |weights| inside the margin")
    for order, margin in ((10, 2), (10, 3), (20, 3), (20, 4), (30, 3)):
        bound, arg = interp_core.max_abs_weight_sum(WindowSpec(order, margin), return_argmax=True)
        print(f"  order {order:>2} margin {margin}: {bound:12.4f} at t={arg:.4f}")

    nodes = np.arange(20.0)
    w = interp_core.lagrange_weights(nodes, 4.5)
    print("\nweights at x=4.5 for nodes 0..19:")
    print("  " + " ".join(f"{v:.7g}" for v in w))


if __name__ == "__main__":
    main()
