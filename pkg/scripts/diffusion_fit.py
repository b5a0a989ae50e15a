"""Fitted diffusion constants from grid ensembles against the analytic jump model.

The default is the N = 200 gate; the long target is N = 8000 at kappa = 50
(about ten hours on one core):

    python scripts/diffusion_fit.py --kappa 10 50 --n-traj 200
    python scripts/diffusion_fit.py --kappa 50 --n-traj 8000 --out-dir runs/
"""
import argparse
import time
from pathlib import Path

import numpy as np

from pointer_qbm.estimators import fit_diffusion, statistics_from_samples
from pointer_qbm.io import write_trajectories
from pointer_qbm.jump_model import analytic_diffusion
from pointer_qbm.unravel import EnsembleConfig, run_ensemble

GRIDS = {10.0: (128, 4.0, 2e-4), 50.0: (256, 1.6, 1e-4)}


def grid_for(k):
    if k in GRIDS:
        return GRIDS[k]
    # scale the kappa = 50 box with the pointer width ~ kappa^-3/4
    return 256, 1.6 * (50.0 / k) ** 0.75, min(2e-4, 5e-3 / k)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--kappa", type=float, nargs="+", default=[10.0, 50.0])
    ap.add_argument("--n-traj", type=int, default=200)
    ap.add_argument("--t-final", type=float, default=5.0)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--weighted", action="store_true")
    ap.add_argument("--out-dir", default=None, help="write trajectories_<kappa>.csv here")
    a = ap.parse_args()

    for k in a.kappa:
        n, width, dt = grid_for(k)
        cfg = EnsembleConfig(kappa=k, n_traj=a.n_traj, t_final=a.t_final, dt=dt, n_points=n,
                             width=width, min_points_per_sigma=4, ordering="symmetric",
                             record_stride=int(round(0.05 / dt)), master_seed=a.seed, threads=a.threads)
        t0 = time.perf_counter()
        res = run_ensemble(cfg)
        x = np.array([r.moments[:, 0] for r in res.records])
        p = np.array([r.moments[:, 1] for r in res.records])
        s = statistics_from_samples(x - x[:, :1], p - p[:, :1], res.records[0].times)
        f = fit_diffusion(s, window=(0.0, min(5.0, a.t_final)), weighted=a.weighted)
        d = analytic_diffusion(k)
        rate = np.mean([len(r.jump_times) for r in res.records]) / a.t_final
        print(f"kappa = {k:g}: N = {len(res.records)}, {len(res.failures)} failures, "
              f"{rate:.2f} jumps per unit time, {time.perf_counter() - t0:.0f} s")
        for name, got, err, ref in (("D_x", f.D_x, f.sigma_Dx, d.D_x), ("D_p", f.D_p, f.sigma_Dp, d.D_p),
                                    ("D_xp", f.D_xp, f.sigma_Dxp, d.D_xp)):
            print(f"  {name:5s} fitted {got:8.4f} +- {err:.4f}   analytic {ref:.4f}")
        if a.out_dir:
            Path(a.out_dir).mkdir(parents=True, exist_ok=True)
            write_trajectories(Path(a.out_dir) / f"trajectories_{k:g}.csv", res.records)


if __name__ == "__main__":
    main()
