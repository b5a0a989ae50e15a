"""Survivor statistics of a two-packet superposition: weight process and grid trajectories.

    python scripts/born.py --w0 0.3 --runs 5000 --grid-runs 200
"""
import argparse
import math
import time

import numpy as np

from pointer_qbm.unravel import EnsembleConfig, run_ensemble, superposition_state
from pointer_qbm.weights import PacketEnsemble, born_summary, run_weight_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--kappa", type=float, default=50.0)
    ap.add_argument("--w0", type=float, default=0.3, help="weight of the packet at -x0")
    ap.add_argument("--x0", type=float, default=0.3)
    ap.add_argument("--runs", type=int, default=5000)
    ap.add_argument("--grid-runs", type=int, default=0)
    ap.add_argument("--seed", type=int, default=7)
    a = ap.parse_args()

    k, w = a.kappa, np.array([a.w0, 1 - a.w0])
    ens = PacketEnsemble.pointer_packets(k, w, [(-a.x0, 0.0), (a.x0, 0.0)])
    t0 = time.perf_counter()
    s = born_summary(run_weight_ensemble(ens, k, 1.0, seeds=range(a.runs)), w)
    print(f"weight process: frequencies {s.frequencies.round(4)}  chi2 p = {s.p_value:.3f}  "
          f"unabsorbed {s.n_unabsorbed}  median absorption time {np.median(s.absorption_times):.2e}  "
          f"({time.perf_counter() - t0:.1f} s)")
    if a.grid_runs:
        cfg = EnsembleConfig(kappa=k, n_traj=a.grid_runs, t_final=0.01, dt=2e-6, n_points=1024,
                             width=4 * a.x0 + 0.4, min_points_per_sigma=4, ordering="symmetric",
                             keep_final_state=True, record_stride=10**9, master_seed=a.seed)
        init = superposition_state(cfg.grid(), k, [{"w": w[0], "x": -a.x0}, {"w": w[1], "x": a.x0}],
                                   min_points_per_sigma=4)
        t0 = time.perf_counter()
        res = run_ensemble(cfg, init)
        left = np.array([np.sum(np.abs(r.final_state.psi[r.final_state.grid.x < 0]) ** 2)
                         * r.final_state.grid.dx for r in res.records])
        f = np.mean(left > 0.99)
        sig = math.sqrt(w[0] * w[1] / a.grid_runs)
        print(f"grid: left frequency {f:.3f} +- {sig:.3f}, undecided {np.sum((left > 0.01) & (left < 0.99))}, "
              f"failures {len(res.failures)} ({time.perf_counter() - t0:.0f} s)")


if __name__ == "__main__":
    main()
