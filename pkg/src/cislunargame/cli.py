"""Command-line interface: propagation, orbit analysis, game solving,
engagement simulation, the LQ benchmark, and figure-data export.

Every subcommand prints a machine-readable JSON summary on stdout and
human-readable progress on stderr.  Exit codes: 0 success, 2
configuration problems, 3 numerical failures, 4 I/O failures.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dynamics, mpc
from .ddp import SaddleSolver
from .errors import ConfigError, NumericalError
from .game import EngagementProblem
from .integrate import propagate
from .lqgame import SwitchedLqPursuer
from .manifold import build_manifold
from .mpc import SCHEMA_VERSION
from .orbit import differential_correct, load_orbit
from .params import SystemParams

_F = lambda v: repr(float(v))


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_F(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON: {err}") from err


def _system_from_json(path) -> SystemParams:
    data = _load_json(path)
    sys_d = data.get("system", {})
    return SystemParams(
        mu=float(sys_d.get("mu", SystemParams().mu)),
        lu_km=float(sys_d.get("lu_km", SystemParams().lu_km)),
        tu_s=float(sys_d.get("tu_s", SystemParams().tu_s)),
    )


def _parse_state(spec: str, params: SystemParams) -> np.ndarray:
    name = spec.strip().upper()
    if name in ("L1", "L2", "L3", "L4", "L5"):
        pts = dynamics.lagrange_points(params)
        pos = pts[int(name[1]) - 1]
        return np.concatenate([pos, np.zeros(3)])
    parts = spec.split(",")
    if len(parts) != 6:
        raise ConfigError(
            f"state must be L1..L5 or six comma-separated numbers, got {spec!r}"
        )
    try:
        return np.array([float(p) for p in parts])
    except ValueError as err:
        raise ConfigError(f"bad state component: {err}") from err


# -- subcommands --------------------------------------------------------


def cmd_propagate(args) -> dict:
    params = _system_from_json(args.config)
    state0 = _parse_state(args.state, params)
    if args.tf == 0.0:
        raise ConfigError("--tf must be nonzero")
    _log(f"propagating {args.tf} ND from {args.state}")
    traj = propagate(state0, (0.0, args.tf), params, rtol=args.rtol, atol=args.atol)
    ts = np.linspace(0.0, args.tf, args.samples)
    c0 = dynamics.jacobi_constant(state0, params)
    drift = 0.0
    rows = []
    for t in ts:
        y = traj.at(t)
        drift = max(drift, abs(dynamics.jacobi_constant(y, params) - c0))
        rows.append([t, *y, dynamics.jacobi_constant(y, params)])
    out = Path(args.out)
    _write_csv(out, ["t", "x", "y", "z", "vx", "vy", "vz", "jacobi"], rows)
    _log(f"Jacobi drift {drift:.3e} over {args.tf} ND; wrote {out}")
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "propagate",
        "tf_nd": args.tf,
        "jacobi_constant": c0,
        "jacobi_drift": drift,
        "rows": len(rows),
        "out": str(out),
    }


def cmd_orbit(args) -> dict:
    cfg = mpc.load_config(args.config)
    params = cfg.params
    state, period = cfg.orbit_state, cfg.orbit_period
    if args.correct:
        _log("running differential correction from the config seed")
        state, period = differential_correct(state, period, params)
    orbit = load_orbit(state, period, params, tol=cfg.orbit_closure_tol)
    _log(f"orbit verified: period {period:.6f} ND, closure {orbit.periodicity_residual:.2e}")
    mani = build_manifold(orbit)
    mono = mani.monodromy_matrix
    det_err = abs(float(np.linalg.det(mono)) - 1.0)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "orbit",
        "corrected": bool(args.correct),
        "initial_state_nd": [float(v) for v in state],
        "period_nd": float(period),
        "period_days": float(period * params.period_to_days),
        "closure_residual": orbit.periodicity_residual,
        "unstable_multiplier": mani.unstable_multiplier,
        "stable_multiplier": mani.stable_multiplier,
        "monodromy_det_error": det_err,
    }
    _log(
        f"unstable multiplier {mani.unstable_multiplier:.6f}, "
        f"|det Phi - 1| = {det_err:.2e}"
    )
    if args.export:
        ts = np.linspace(0.0, period, args.samples)
        rows = []
        for t in ts:
            eu = mani.direction(t, "unstable")
            es = mani.direction(t, "stable")
            rows.append([t, *orbit.sample(t), *eu, *es])
        header = (
            ["t", "x", "y", "z", "vx", "vy", "vz"]
            + [f"eu{i}" for i in range(1, 7)]
            + [f"es{i}" for i in range(1, 7)]
        )
        _write_csv(Path(args.export), header, rows)
        summary["export"] = args.export
        _log(f"wrote manifold directions to {args.export}")
    return summary


def _first_replan_problem(cfg: mpc.ScenarioConfig):
    """Orbit, problem, and start state exactly as run_mpc's first replan."""
    orbit = load_orbit(cfg.orbit_state, cfg.orbit_period, cfg.params, tol=cfg.orbit_closure_tol)
    manifold = build_manifold(orbit) if cfg.shaping_enabled else None
    x0 = cfg.initial_engagement_state(orbit)
    sep0 = float(np.linalg.norm(x0[0:3] - x0[6:9]))
    a = mpc.update_aggressiveness([0.0], [sep0], 0.0, orbit.period, cfg.weights.d0)
    if cfg.shaping_enabled:
        alpha_e = mpc._map_alpha(a, cfg.alpha_mapping)
        alpha_p = cfg.alpha_p
    else:
        alpha_e = alpha_p = 1.0
    prob = EngagementProblem(
        orbit, cfg.weights.with_alphas(alpha_e, alpha_p),
        cfg.mass_e_kg, cfg.mass_p_kg, manifold=manifold,
        phasing=cfg.phasing_enabled,
    )
    return orbit, prob, x0, a, alpha_e, alpha_p


def cmd_solve_game(args) -> dict:
    cfg = mpc.load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    orbit, prob, x0, a, alpha_e, alpha_p = _first_replan_problem(cfg)
    _log(
        f"solving one game over {cfg.prediction_horizon:.4f} ND "
        f"(a = {a:.3f}, alpha_e = {alpha_e:.3f})"
    )
    res = SaddleSolver(prob, cfg.solver).solve(
        x0, (0.0, cfg.prediction_horizon), lambda0=cfg.lambda_initial
    )
    rep = res.report
    _log(
        f"{'converged' if rep.converged else 'stopped'} after {rep.iterations} "
        f"iterations, cost {res.cost:.6e}, {rep.wall_time_s:.1f} s"
    )
    sol = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve-game",
        "aggressiveness": a,
        "alpha_e": alpha_e,
        "alpha_p": alpha_p,
        "cost": res.cost,
        "report": {
            "iterations": rep.iterations,
            "converged": rep.converged,
            "update_norms": [float(v) for v in rep.update_norms],
            "costs": [float(v) for v in rep.costs],
            "lambdas": [float(v) for v in rep.lambdas],
            "gammas": [float(v) for v in rep.gammas],
            "sweep_retries": rep.sweep_retries,
            "wall_time_s": rep.wall_time_s,
            "message": rep.message,
        },
        "grid": [float(v) for v in res.grid],
        "controls_e": res.controls_e.tolist(),
        "controls_p": res.controls_p.tolist(),
        "feedforward_e": res.ff_e.tolist(),
        "feedforward_p": res.ff_p.tolist(),
        "feedback_e": res.fb_e.tolist(),
        "feedback_p": res.fb_p.tolist(),
    }
    with open(out / "solution.json", "w", encoding="utf-8") as fh:
        json.dump(sol, fh)
        fh.write("\n")
    rows = [[t, *res.nominal.at(t)] for t in res.grid]
    header = ["t"] + [
        f"{n}{s}" for s in ("e", "p") for n in ("x", "y", "z", "vx", "vy", "vz")
    ] + ["ce", "cp"]
    _write_csv(out / "trajectory.csv", header, rows)
    _log(f"wrote {out / 'solution.json'} and {out / 'trajectory.csv'}")
    return {k: sol[k] for k in (
        "schema_version", "command", "aggressiveness", "alpha_e", "alpha_p", "cost", "report",
    )} | {"out": str(out)}


def _simulate_one(config_path: str, out_dir: str, opponent: str | None, ablate: str | None) -> dict:
    cfg = mpc.load_config(config_path)
    if opponent is not None:
        cfg = mpc.replace(cfg, opponent=opponent)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if ablate is not None:
        log = mpc.run_ablation(cfg, ablate)
    else:
        log = mpc.run_mpc(cfg)
    mpc.export_log(log, "csv", out / "log.csv")
    mpc.export_log(log, "json", out / "log.json")
    final_sep = float(log.sep_km[-1])
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "config": str(config_path),
        "opponent": cfg.opponent,
        "ablation": ablate,
        "aborted": log.aborted,
        "message": log.message,
        "replans": len(log.replans),
        "replans_converged": sum(1 for r in log.replans if r.converged),
        "rows": int(log.times.size),
        "duration_nd": float(log.times[-1]),
        "min_separation_km": float(log.sep_km.min()),
        "final_separation_km": final_sep,
        "out": str(out),
    }


def cmd_simulate(args) -> dict:
    configs = args.config
    if len(configs) == 1:
        summary = _simulate_one(configs[0], args.out, args.opponent, args.ablate)
        _log(
            f"simulated {summary['replans']} replans "
            f"({summary['replans_converged']} converged); "
            f"final separation {summary['final_separation_km']:.1f} km"
        )
        return summary
    # Batch mode: independent scenarios fan out over processes.
    runs = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futs = {}
        for path in configs:
            sub = str(Path(args.out) / Path(path).stem)
            futs[pool.submit(_simulate_one, path, sub, args.opponent, args.ablate)] = path
        for fut in concurrent.futures.as_completed(futs):
            runs.append(fut.result())
            _log(f"finished {futs[fut]}")
    runs.sort(key=lambda r: r["config"])
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "batch": True,
        "runs": runs,
    }


def cmd_baseline(args) -> dict:
    cfg = mpc.load_config(args.config)
    orbit = load_orbit(cfg.orbit_state, cfg.orbit_period, cfg.params, tol=cfg.orbit_closure_tol)
    x0 = cfg.initial_engagement_state(orbit)
    w = cfg.weights
    _log(
        f"solving LQ benchmark over {cfg.prediction_horizon:.4f} ND "
        f"(pursuit weight {cfg.lq_pursuit_weight})"
    )
    pursuer = SwitchedLqPursuer(
        orbit, cfg.phase_p0, (0.0, cfg.prediction_horizon), x0[0:6], x0[6:12],
        w.q_e0, w.q_p0, w.f_e0, w.f_p0,
        cfg.lq_pursuit_weight * np.eye(3), w.r_e, w.r_p,
        cfg.mass_e_kg, cfg.mass_p_kg, cfg.lq_switch,
    )
    sol = pursuer.solution
    ts = np.linspace(0.0, cfg.prediction_horizon, args.samples)
    sym_err = 0.0
    gains_e, gains_p = [], []
    for t in ts:
        s = sol.riccati.at(t)
        sym_err = max(sym_err, float(np.max(np.abs(s - s.T))))
        gains_e.append(np.linalg.solve(sol.r_e, sol.b_e.T @ s).tolist())
        gains_p.append(np.linalg.solve(sol.r_p, sol.b_p.T @ s).tolist())
    s0 = sol.riccati.at(0.0)
    scale = max(float(np.max(np.abs(s0))), 1.0)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "baseline",
        "mode": pursuer.mode,
        "pursuit_weight_used": float(pursuer.pursuit_weight_used[0, 0]),
        "switch_km": cfg.lq_switch * cfg.params.lu_km,
        "s0_eigenvalues": [float(v) for v in np.sort(np.linalg.eigvalsh(s0))],
        "symmetry_error": sym_err,
        "symmetric": sym_err <= 1e-9 * scale,
        "horizon_nd": cfg.prediction_horizon,
    }
    _log(
        f"mode {pursuer.mode}; S symmetry error {sym_err:.2e} "
        f"({'passed' if summary['symmetric'] else 'FAILED'})"
    )
    if args.out:
        report = summary | {
            "s0": s0.tolist(),
            "gain_times_nd": [float(t) for t in ts],
            "gains_e": gains_e,
            "gains_p": gains_p,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh)
            fh.write("\n")
        summary["out"] = args.out
        _log(f"wrote {args.out}")
    return summary


def _load_run(dirname) -> dict[str, np.ndarray]:
    path = Path(dirname) / "log.csv"
    if not path.exists():
        raise ConfigError(f"no log.csv under {dirname} (run `simulate` first)")
    return mpc.read_log_csv(path)


def cmd_plot_data(args) -> dict:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    main = _load_run(args.main)
    t = main["t_nd"]
    td = main["t_days"]
    _write_csv(
        out / "fig3_tracking.csv",
        ["t_nd", "t_days", "err_e_km", "err_p_km"],
        zip(t, td, main["err_e_km"], main["err_p_km"]),
    )
    ue = np.hypot(np.hypot(main["uex_N"], main["uey_N"]), main["uez_N"])
    up = np.hypot(np.hypot(main["upx_N"], main["upy_N"]), main["upz_N"])
    _write_csv(
        out / "fig4_thrust.csv",
        ["t_nd", "t_days", "uex_N", "uey_N", "uez_N", "ue_mag_N",
         "upx_N", "upy_N", "upz_N", "up_mag_N"],
        zip(t, td, main["uex_N"], main["uey_N"], main["uez_N"], ue,
            main["upx_N"], main["upy_N"], main["upz_N"], up),
    )
    _write_csv(
        out / "fig5_tau.csv",
        ["t_nd", "t_days", "tau_e", "tau_p"],
        zip(t, td, main["tau_e"], main["tau_p"]),
    )
    _write_csv(
        out / "fig6_separation.csv",
        ["t_nd", "t_days", "sep_km", "a", "alpha"],
        zip(t, td, main["sep_km"], main["a"], main["alpha"]),
    )
    written += ["fig3_tracking.csv", "fig4_thrust.csv", "fig5_tau.csv", "fig6_separation.csv"]

    ablations = [("full", main)]
    for name, dirname in (
        ("no_shaping", args.no_shaping),
        ("no_phasing", args.no_phasing),
        ("neither", args.neither),
    ):
        if dirname:
            ablations.append((name, _load_run(dirname)))
    if len(ablations) > 1:
        lines = ["variant,t_nd,t_days,sep_km"]
        for name, run in ablations:
            for i in range(run["t_nd"].size):
                lines.append(
                    f"{name},{_F(run['t_nd'][i])},{_F(run['t_days'][i])},{_F(run['sep_km'][i])}"
                )
        (out / "fig7_ablations.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append("fig7_ablations.csv")

    if args.lq:
        lq = _load_run(args.lq)
        lines = ["variant,t_nd,t_days,sep_km"]
        for name, run in (("lq", lq), ("saddle", main)):
            for i in range(run["t_nd"].size):
                lines.append(
                    f"{name},{_F(run['t_nd'][i])},{_F(run['t_days'][i])},{_F(run['sep_km'][i])}"
                )
        (out / "fig8_lq_separation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append("fig8_lq_separation.csv")

    _log(f"wrote {len(written)} figure CSVs to {out}")
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "plot-data",
        "written": written,
        "out": str(out),
    }


# -- parser / dispatch ---------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cislunargame",
        description="Pursuit-evasion games on cislunar periodic orbits.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propagate", help="propagate a state ballistically")
    p.add_argument("--config", required=True, help="JSON config with a `system` section")
    p.add_argument("--state", required=True, help="L1..L5 or x,y,z,vx,vy,vz (ND)")
    p.add_argument("--tf", type=float, required=True, help="final time, ND (nonzero)")
    p.add_argument("--out", default="trajectory.csv", help="output CSV path")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--rtol", type=float, default=1e-12)
    p.add_argument("--atol", type=float, default=1e-12)
    p.set_defaults(handler=cmd_propagate)

    p = sub.add_parser("orbit", help="verify or correct the reference orbit")
    p.add_argument("--config", required=True)
    p.add_argument("--correct", action="store_true", help="differentially correct the seed first")
    p.add_argument("--export", help="write t + state + manifold directions CSV here")
    p.add_argument("--samples", type=int, default=400)
    p.set_defaults(handler=cmd_orbit)

    p = sub.add_parser("solve-game", help="solve one saddle-point game from the initial state")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_solve_game)

    p = sub.add_parser("simulate", help="run the receding-horizon engagement")
    p.add_argument("--config", required=True, action="append",
                   help="scenario JSON (repeat for a batch)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--opponent", choices=mpc.OPPONENTS, help="override the config's opponent")
    p.add_argument("--ablate", choices=mpc.ABLATIONS)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers in batch mode")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("baseline", help="report the LQ benchmark pursuer's Riccati solution")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write the full gain report JSON here")
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("plot-data", help="slice simulation logs into per-figure CSVs")
    p.add_argument("--main", required=True, help="directory of the primary simulate run")
    p.add_argument("--lq", help="directory of the LQ-pursuer run")
    p.add_argument("--no-shaping", dest="no_shaping", help="directory of the no_shaping ablation")
    p.add_argument("--no-phasing", dest="no_phasing", help="directory of the no_phasing ablation")
    p.add_argument("--neither", help="directory of the neither ablation")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = args.handler(args)
    except NumericalError as err:
        _log(f"numerical failure: {err}")
        return 3
    except (ConfigError, ValueError) as err:
        _log(f"configuration error: {err}")
        return 2
    except OSError as err:
        _log(f"I/O error: {err}")
        return 4
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
