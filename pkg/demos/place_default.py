"""Place ABSs over the bundled urban scenario and compare with the baselines.

Run with ``python demos/place_default.py``. The script

1. loads the bundled scenario (70 GTs over a 500 m x 400 m block with six
   buildings, tomographic channel model),
2. builds the capacity matrix between the sampled GTs and the flight grid,
3. runs GSPA and the K-means baseline, and
4. prints the ABS counts next to the backhaul lower bound.
"""

import time

from absplace import harness
from absplace.baselines import kmeans_placement
from absplace.solver import gspa_solve, lower_bound, verify_feasibility


def main():
    sc = harness.default_scenario()
    inst = harness.build_instance(sc)
    P = inst.problem
    M, G = P.shape
    print(f"{M} GTs, {G} candidate ABS positions")

    t0 = time.perf_counter()
    sol = gspa_solve(P, inst.flight_grid, sc.admm_config())
    t_gspa = time.perf_counter() - t0
    km = kmeans_placement(inst.gts, inst.flight_grid, P.capacity, P.backhaul, P.min_rate, seed=0)

    print(f"lower bound : {lower_bound(M, P.min_rate, P.backhaul)}")
    print(f"GSPA        : {sol.num_abs} ABSs in {t_gspa:.2f} s, "
          f"feasible={verify_feasibility(P, sol).ok}")
    print(f"K-means     : {km.num_abs} ABSs, feasible={verify_feasibility(P, km).ok}")
    for pos in sol.positions:
        print("  ABS at x=%6.1f y=%6.1f z=%6.1f" % tuple(pos))


if __name__ == "__main__":
    main()
