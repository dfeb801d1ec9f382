"""Mean ABS count against backhaul capacity on a desk-scale grid.

Run with ``python demos/backhaul_sweep.py [trials]``. Uses a 5 x 5 x 3
flight grid and 30 GTs so that a full sweep takes well under a minute. The
GSPA count should fall as backhaul grows and track the lower bound, while
the K-means baseline shows the staircase typical of single-ABS assignment.
"""

import sys

from absplace import harness


def main(trials=5):
    sc = harness.default_scenario()
    sc.flight_dims = (5, 5, 3)
    sc.gt_count = 30
    values = [4e7, 6e7, 1e8, 1.5e8, 2.5e8]
    spec = harness.SweepSpec("backhaul", values, trials=trials)
    means = harness.run_sweep(sc, spec, threads=4).means()
    print("backhaul (Mbps)  lower bound   GSPA   K-means")
    for v in values:
        print("%15.0f  %11.2f  %5.2f  %8.2f" % (
            v / 1e6, means[(v, "lower_bound")], means[(v, "gspa")],
            means.get((v, "kmeans"), float("nan"))))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 5)
