"""Command-line entry point: ``qbm <subcommand> [flags]``.

Every subcommand writes its outputs into ``--out`` together with a
``<command>.manifest.json`` holding the resolved configuration, seed,
package version and wall time.  ``--config file.json`` supplies flat
key/value defaults (keys are flag names with dashes or underscores);
explicit flags win.  A manifest can be passed as ``--config`` to replay a run.

Exit codes: 0 ok, 2 usage / invalid input, 3 numerical failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("pointer_qbm")


class UsageError(ValueError):
    pass


def _env_int(name, default):
    v = os.environ.get(name)
    if v is None or v == "":
        return default
    try:
        return int(v)
    except ValueError:
        raise UsageError(f"environment variable {name}={v!r} is not an integer")


def _floats(s):
    return [float(v) for v in str(s).split(",") if v.strip()]


def _sweep(s):
    lo, hi, n = str(s).split(":")
    return float(lo), float(hi), int(n)


# ---------------------------------------------------------------------------
# subcommands


def cmd_fixed_point(a, out):
    from .gaussian import pointer_fixed_point, stability_eigenvalues

    if a.sweep:
        lo, hi, n = _sweep(a.sweep)
        kappas = np.logspace(math.log10(lo), math.log10(hi), n)
    elif a.kappa is not None:
        kappas = [a.kappa]
    else:
        raise UsageError("fixed-point needs --kappa or --sweep lo:hi:n")
    rows = []
    for k in kappas:
        ps = pointer_fixed_point(float(k))
        ev = np.sort(stability_eigenvalues(float(k)).real)
        rows.append((float(k), ps.var_x_ps, ps.var_p_ps, ps.cov_xp_ps, ev[0], ev[1]))
    from .io import write_csv

    path = out / "fixed_point.csv"
    write_csv(path, ["kappa", "vx_ps", "vp_ps", "cxp_ps", "eig_re_1", "eig_re_2"], rows)
    for r in rows[:20]:
        print(",".join(f"{v:.10g}" for v in r))
    return [path]


def _ensemble_config(a, n_traj=1):
    from .unravel import EnsembleConfig

    return EnsembleConfig(
        kappa=a.kappa, n_traj=n_traj, master_seed=a.seed, t_final=a.t_final, dt=a.dt,
        record_stride=a.record_stride, init=a.init, n_points=a.grid_n, width=a.width,
        ordering=a.ordering, threads=a.threads, min_points_per_sigma=a.min_points_per_sigma,
        recenter=not a.no_recenter, asymmetry=getattr(a, "asymmetry", 0.0),
    )


def cmd_evolve(a, out):
    from .grid import evolve
    from .io import write_checkpoint, write_csv
    from .unravel import initial_state

    cfg = _ensemble_config(a)
    init = initial_state(cfg)
    t, m, final = evolve(init, a.kappa, a.t_final, cfg.step, record_stride=a.record_stride,
                         ordering=a.ordering, recenter=not a.no_recenter)
    path = out / "evolve.csv"
    write_csv(path, ["t", "x", "p", "vx", "vp", "cxp"], [(ti, *mi) for ti, mi in zip(t, m)])
    outs = [path]
    if a.checkpoint:
        write_checkpoint(out / a.checkpoint, final)
        outs.append(out / a.checkpoint)
    if "leakage" in final.flags:
        log.warning("edge leakage detected in the final state")
    print(f"t={t[-1]:.6g} x={m[-1, 0]:.10g} p={m[-1, 1]:.10g} vx={m[-1, 2]:.10g} "
          f"vp={m[-1, 3]:.10g} cxp={m[-1, 4]:.10g}")
    return outs


def cmd_unravel(a, out):
    from .io import write_checkpoint, write_jumps, write_trajectories
    from .unravel import run_ensemble

    cfg = _ensemble_config(a, a.runs)
    cfg.jump_scheme = a.jump_scheme
    cfg.batch_size = a.batch_size
    cfg.keep_final_state = bool(a.checkpoints)
    res = run_ensemble(cfg)
    outs = [out / "trajectories.csv", out / "jumps.csv"]
    write_trajectories(outs[0], res.records)
    write_jumps(outs[1], res.records)
    if a.checkpoints:
        d = out / a.checkpoints
        d.mkdir(parents=True, exist_ok=True)
        for r in res.records:
            write_checkpoint(d / f"traj_{r.index:06d}.psi", r.final_state)
    a._extra = {"failures": [list(f) for f in res.failures], "seeds": [r.seed for r in res.records]}
    njump = np.mean([r.n_jumps for r in res.records]) if res.records else float("nan")
    print(f"{len(res.records)} trajectories, {len(res.failures)} failures, mean jumps {njump:.4g}")
    return outs


def cmd_born(a, out):
    from .io import write_csv
    from .unravel import trajectory_seed
    from .weights import PacketEnsemble, born_summary, run_weight_ensemble

    w0 = np.asarray(_floats(a.weights))
    if np.any(w0 < 0) or abs(w0.sum() - 1.0) > 1e-9:
        raise UsageError("--weights must be non-negative and sum to 1")
    sep = _floats(a.sep)
    dx, dp = sep[0], (sep[1] if len(sep) > 1 else 0.0)
    J = len(w0)
    means = [((j - 0.5 * (J - 1)) * dx, (j - 0.5 * (J - 1)) * dp) for j in range(J)]
    ens = PacketEnsemble.pointer_packets(a.kappa, w0, means)
    seeds = [trajectory_seed(a.seed, i) for i in range(a.runs)]
    runs = run_weight_ensemble(ens, a.kappa, a.t_final, a.dt, seeds=seeds)
    s = born_summary(runs, w0)
    path = out / "born.csv"
    write_csv(path, ["packet", "w0", "count", "frequency"],
              [(j, w0[j], s.counts[j], s.frequencies[j]) for j in range(J)])
    a._extra = {"chi2": s.chi2, "p_value": s.p_value, "unabsorbed": s.n_unabsorbed,
                "separation": ens.separation(a.kappa)}
    print("frequencies " + ",".join(f"{v:.4f}" for v in s.frequencies)
          + f"  chi2={s.chi2:.4g} p={s.p_value:.4g} unabsorbed={s.n_unabsorbed}")
    return [path]


def _moment_summary(t, x, p, d):
    from .estimators import statistics_from_samples
    from .ou import ou_moments

    s = statistics_from_samples(x - x[:, :1], p - p[:, :1], t, keep_samples=False)
    m = ou_moments(d, t)
    return [(ti, s.var_x[i], m.var_x[i], s.var_p[i], m.var_p[i], s.cov_xp[i], m.cov_xp[i])
            for i, ti in enumerate(t)]


SUMMARY_HEADER = ["t", "var_x", "var_x_pred", "var_p", "var_p_pred", "cov_xp", "cov_xp_pred"]


def _write_paths(path, t, x, p, stride):
    from .io import write_csv

    idx = np.arange(0, len(t), stride)
    if idx[-1] != len(t) - 1:
        idx = np.append(idx, len(t) - 1)
    rows = [(i, t[k], x[i, k], p[i, k]) for i in range(x.shape[0]) for k in idx]
    write_csv(path, ["traj_id", "t", "x", "p"], rows)
    return idx


def cmd_jump_sde(a, out):
    from .io import write_csv
    from .jump_model import analytic_diffusion, jump_model_params, simulate_jump_sde

    jm = jump_model_params(a.kappa)
    dt = a.dt
    if dt is None:
        dt = a.t_final / math.ceil(a.t_final / min(1e-3, 0.05 / jm.r_ps))
    t, x, p = simulate_jump_sde(jm, 0.0, 0.0, a.t_final, dt, a.seed, n_runs=a.runs)
    idx = _write_paths(out / "jump_sde.csv", t, x, p, a.record_stride)
    rows = _moment_summary(t[idx], x[:, idx], p[:, idx], analytic_diffusion(a.kappa))
    write_csv(out / "jump_sde_summary.csv", SUMMARY_HEADER, rows)
    print(f"j_x={jm.j_x:.6g} j_p={jm.j_p:.6g} r_ps={jm.r_ps:.6g}; at t={rows[-1][0]:g}: "
          f"Var[p]={rows[-1][3]:.4g} (pred {rows[-1][4]:.4g})")
    return [out / "jump_sde.csv", out / "jump_sde_summary.csv"]


def cmd_ou_sim(a, out):
    from .io import write_csv
    from .jump_model import DiffusionConstants
    from .ou import ou_from_diffusion, simulate_ou

    d = DiffusionConstants(a.dx, a.dp, a.dxp)
    params = ou_from_diffusion(d)
    t, x, p = simulate_ou(params, 0.0, 0.0, a.t_final, a.dt if a.dt is not None else 1e-3,
                          a.seed, n_runs=a.runs)
    idx = _write_paths(out / "ou_sim.csv", t, x, p, a.record_stride)
    rows = _moment_summary(t[idx], x[:, idx], p[:, idx], d)
    write_csv(out / "ou_summary.csv", SUMMARY_HEADER, rows)
    print(f"at t={rows[-1][0]:g}: Var[x]={rows[-1][1]:.4g} ({rows[-1][2]:.4g}) "
          f"Var[p]={rows[-1][3]:.4g} ({rows[-1][4]:.4g}) Cov={rows[-1][5]:.4g} ({rows[-1][6]:.4g})")
    return [out / "ou_sim.csv", out / "ou_summary.csv"]


def cmd_fit(a, out):
    from .estimators import fit_diffusion, statistics_from_samples
    from .io import read_trajectories, write_json

    _, t, x, p = read_trajectories(a.input)
    s = statistics_from_samples(x - x[:, :1], p - p[:, :1], t)
    lo, hi = _floats(a.window)
    d = fit_diffusion(s, window=(lo, hi), weighted=a.weighted, n_boot=a.bootstrap, seed=a.seed)
    res = d.extra["residuals"]
    doc = {
        "kappa": a.kappa, "N": int(s.n),
        "D_x": d.D_x, "D_p": d.D_p, "D_xp": d.D_xp,
        "sigma_Dx": d.sigma_Dx, "sigma_Dp": d.sigma_Dp, "sigma_Dxp": d.sigma_Dxp,
        "residuals": {"t": d.extra["t"], "var_x": res["var_x"], "var_p": res["var_p"],
                      "cov_xp": res["cov_xp"]},
    }
    path = Path(a.out_json) if a.out_json else out / "fit.json"
    if not path.is_absolute() and a.out_json:
        path = out / path
    write_json(path, doc)
    print(f"D_x={d.D_x:.6g} D_p={d.D_p:.6g} D_xp={d.D_xp:.6g} (N={s.n})")
    return [path]


def cmd_verify_me(a, out):
    from .gaussian import pointer_fixed_point
    from .io import read_checkpoint, read_trajectories, write_csv
    from .me_oracle import DensityMatrix, compare_ensemble, me_evolve
    from .unravel import EnsembleConfig, initial_state

    if a.n_grid > 256:
        raise UsageError("--n-grid is limited to 256 for the density-matrix oracle")
    width = a.width
    if width is None:
        width = 24.0 * math.sqrt(pointer_fixed_point(a.kappa).var_x_ps)
    cfg = EnsembleConfig(kappa=a.kappa, n_points=a.n_grid, width=width, init=a.init,
                         min_points_per_sigma=a.min_points_per_sigma)
    init = initial_state(cfg)
    dt = a.dt if a.dt is not None else 1e-3
    stride = max(1, int(round(a.record_every / dt)))
    rho, times, obs = me_evolve(DensityMatrix.from_state(init), a.kappa, a.t_final, dt,
                                record_every=stride)
    p0 = obs[0, 1]
    rows = [(t, o[0], o[1], p0 * math.exp(-t), o[2] - o[0] ** 2, o[3] - o[1] ** 2)
            for t, o in zip(times, obs)]
    path = out / "verify_me.csv"
    write_csv(path, ["t", "x", "p", "p_damped", "var_x", "var_p"], rows)
    print("t        <x>          <p>          <p0>e^-t     Var x        Var p")
    for r in rows:
        print("  ".join(f"{v:11.6g}" for v in r))
    extra = {"final_purity": rho.purity(), "min_eigenvalue": rho.min_eigenvalue()}
    if a.against:
        src = Path(a.against)
        if src.is_dir():
            states = [read_checkpoint(f) for f in sorted(src.glob("*.psi"))]
            if not states:
                raise UsageError(f"no .psi checkpoints in {src}")
            d = compare_ensemble(states, rho)
            extra["trace_distance"] = d
            extra["n_trajectories"] = len(states)
            print(f"trace distance (N={len(states)}): {d:.6g}; 5/sqrt(N) = {5 / math.sqrt(len(states)):.4g}")
        else:
            _, t, x, p = read_trajectories(src)
            k = int(np.argmin(np.abs(t - a.t_final)))
            ex = rho.expectations()
            mc = (x[:, k].mean(), p[:, k].mean())
            extra["ensemble_vs_me"] = {"x": [mc[0], ex[0]], "p": [mc[1], ex[1]]}
            print(f"ensemble <x>={mc[0]:.6g} (ME {ex[0]:.6g}), <p>={mc[1]:.6g} (ME {ex[1]:.6g})")
    a._extra = extra
    return [path]


COMMANDS = {
    "fixed-point": cmd_fixed_point,
    "evolve": cmd_evolve,
    "unravel": cmd_unravel,
    "born": cmd_born,
    "jump-sde": cmd_jump_sde,
    "ou-sim": cmd_ou_sim,
    "fit": cmd_fit,
    "verify-me": cmd_verify_me,
}


# ---------------------------------------------------------------------------
# parser


def _common(p, seed_default, threads_default):
    p.add_argument("--config", help="flat JSON file of default flag values (or a manifest)")
    p.add_argument("--out", default="qbm_out", help="output directory (default: qbm_out)")
    p.add_argument("--seed", type=int, default=seed_default, help="master seed (env QBM_SEED)")
    p.add_argument("--threads", type=int, default=threads_default, help="worker threads (env QBM_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")


def _grid_flags(p, t_final=1.0):
    p.add_argument("--kappa", type=float, required=False)
    p.add_argument("--t-final", type=float, default=t_final)
    p.add_argument("--dt", type=float, default=None, help="step (default min(1e-4, 0.1/r_ps))")
    p.add_argument("--grid-n", type=int, default=1024)
    p.add_argument("--width", type=float, default=None, help="grid width (default 24 pointer std devs)")
    p.add_argument("--init", default="pointer", help="pointer[:x,p] | gauss:vx,vp,cxp | superpos:file")
    p.add_argument("--record-stride", type=int, default=10)
    p.add_argument("--ordering", choices=["left", "symmetric"], default="left")
    p.add_argument("--min-points-per-sigma", type=float, default=16.0)
    p.add_argument("--no-recenter", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    seed = _env_int("QBM_SEED", 0)
    threads = _env_int("QBM_THREADS", 1)
    ap = argparse.ArgumentParser(prog="qbm", description="Pointer-state unraveling of quantum Brownian motion.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="<command>")

    p = sub.add_parser("fixed-point", help="pointer-state widths and stability eigenvalues")
    p.add_argument("--kappa", type=float)
    p.add_argument("--sweep", help="log-spaced kappa sweep lo:hi:n")
    _common(p, seed, threads)

    p = sub.add_parser("evolve", help="deterministic NLPSE evolution (moments CSV)")
    _grid_flags(p)
    p.add_argument("--checkpoint", help="file name for the final wavefunction checkpoint")
    _common(p, seed, threads)

    p = sub.add_parser("unravel", help="stochastic pointer-state trajectories")
    _grid_flags(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--jump-scheme", choices=["clock", "bernoulli"], default="clock")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--checkpoints", help="subdirectory for final-state checkpoints")
    p.add_argument("--asymmetry", type=float, default=1e-3,
                   help="seeded symmetry-breaking admixture of the initial state (0 disables)")
    _common(p, seed, threads)

    p = sub.add_parser("born", help="reduced weight process and survivor statistics")
    p.add_argument("--weights", required=False, help="w1,w2,...")
    p.add_argument("--sep", default="4", help="packet spacing dx[,dp]")
    p.add_argument("--kappa", type=float)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--t-final", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=None)
    _common(p, seed, threads)

    p = sub.add_parser("jump-sde", help="analytic two-sided Poisson jump model")
    p.add_argument("--kappa", type=float)
    p.add_argument("--t-final", type=float, default=5.0)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--record-stride", type=int, default=100)
    _common(p, seed, threads)

    p = sub.add_parser("ou-sim", help="phase-space Ornstein-Uhlenbeck ensembles")
    p.add_argument("--dx", type=float, default=0.0)
    p.add_argument("--dp", type=float, default=2.0)
    p.add_argument("--dxp", type=float, default=0.0)
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--t-final", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--record-stride", type=int, default=100)
    _common(p, seed, threads)

    p = sub.add_parser("fit", help="fit D_p, D_xp, D_x to a trajectory file")
    p.add_argument("--input", required=False, help="trajectory CSV (traj_id,t,x,p,...)")
    p.add_argument("--out-json", help="output JSON path (default <out>/fit.json)")
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--window", default="0,5", help="fit window lo,hi")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--bootstrap", type=int, default=200)
    _common(p, seed, threads)

    p = sub.add_parser("verify-me", help="direct master-equation integration on a coarse grid")
    p.add_argument("--kappa", type=float)
    p.add_argument("--n-grid", type=int, default=128)
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--t-final", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--record-every", type=float, default=0.1)
    p.add_argument("--init", default="pointer")
    p.add_argument("--min-points-per-sigma", type=float, default=2.0)
    p.add_argument("--against", help="checkpoint directory or trajectory CSV")
    _common(p, seed, threads)
    return ap


REQUIRED = {
    "fixed-point": [], "evolve": ["kappa"], "unravel": ["kappa"], "born": ["kappa", "weights"],
    "jump-sde": ["kappa"], "ou-sim": [], "fit": ["input"], "verify-me": ["kappa"],
}


def _load_config(path, command, subparser):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e}")
    if isinstance(doc, dict) and "config" in doc and "command" in doc:
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a flat JSON object")
    known = {a.dest for a in subparser._actions}
    out = {}
    for k, v in doc.items():
        key = k.replace("-", "_")
        if key in ("config", "help", "command"):
            continue
        if key not in known:
            raise UsageError(f"unknown config key {k!r} for {command}")
        if isinstance(v, (dict, list)):
            raise UsageError(f"config key {k!r} must be a scalar (flat config)")
        out[key] = v
    return out


def parse_args(argv):
    ap = build_parser()
    a = ap.parse_args(argv)
    if a.command is None:
        return ap, None
    if a.config:
        subparser = ap._subparsers._group_actions[0].choices[a.command]
        defaults = _load_config(a.config, a.command, subparser)
        subparser.set_defaults(**defaults)
        a = ap.parse_args(argv)
    for key in REQUIRED[a.command]:
        if getattr(a, key, None) is None:
            raise UsageError(f"{a.command}: --{key.replace('_', '-')} is required")
    return ap, a


def _resolved(a):
    return {k: v for k, v in sorted(vars(a).items()) if not k.startswith("_") and k not in ("config",)}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ap, a = parse_args(argv)
    except SystemExit as e:                       # argparse usage errors / --help
        return int(e.code or 0)
    except UsageError as e:
        print(f"qbm: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"qbm: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    if a is None:
        ap.print_help()
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .model import DomainError

    out = Path(a.out)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[a.command](a, out)
        from .io import write_manifest

        write_manifest(out, a.command, _resolved(a), a.seed, time.perf_counter() - t0, outputs,
                       results=getattr(a, "_extra", None))
    except (UsageError, DomainError, ValueError) as e:
        print(f"qbm {a.command}: invalid input: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as e:
        print(f"qbm {a.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"qbm {a.command}: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
