"""Trajectory mixture against the master equation: trace distance versus ensemble size.

    python scripts/ensemble_vs_me.py --kappa 10 --n-traj 400 --t-final 1
"""
import argparse
import math
import time

import numpy as np

from pointer_qbm.me_oracle import DensityMatrix, compare_ensemble, me_evolve
from pointer_qbm.unravel import EnsembleConfig, initial_state, run_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--kappa", type=float, default=10.0)
    ap.add_argument("--n-traj", type=int, default=400)
    ap.add_argument("--t-final", type=float, default=1.0)
    ap.add_argument("--dt", type=float, default=2e-4)
    ap.add_argument("--me-dt", type=float, default=5e-4)
    ap.add_argument("--n-points", type=int, default=128)
    ap.add_argument("--width", type=float, default=5.0)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()

    cfg = EnsembleConfig(kappa=a.kappa, n_traj=a.n_traj, t_final=a.t_final, dt=a.dt,
                         n_points=a.n_points, width=a.width, min_points_per_sigma=3,
                         ordering="symmetric", recenter=False, keep_final_state=True,
                         record_stride=10**9, master_seed=a.seed)
    init = initial_state(cfg)
    t0 = time.perf_counter()
    res = run_ensemble(cfg, init)
    print(f"{a.n_traj} trajectories in {time.perf_counter() - t0:.0f} s, {len(res.failures)} failures")
    rho, _, _ = me_evolve(DensityMatrix.from_state(init), a.kappa, a.t_final, a.me_dt)
    states = [r.final_state for r in res.records]
    ns = [n for n in (25, 50, 100, 200, 400, 800, 1600) if n <= len(states)]
    dist = [compare_ensemble(states[:n], rho) for n in ns]
    for n, d in zip(ns, dist):
        print(f"N = {n:5d}  D = {d:.4f}  D sqrt(N) = {d * math.sqrt(n):.3f}  5/sqrt(N) = {5 / math.sqrt(n):.4f}")
    if len(ns) > 1:
        print(f"log-log slope {np.polyfit(np.log(ns), np.log(dist), 1)[0]:.3f} (statistical limit -0.5)")


if __name__ == "__main__":
    main()
