"""Receding-horizon engagement simulation.

``run_mpc`` drives the saddle-point solver in closed loop: at each replan
instant it measures aggressiveness from the recent separation history,
reshapes the evader's tracking weights, re-solves the game over the
prediction horizon warm-started from the previous solution shifted by one
control horizon, and then applies the closed-loop policy (nominal +
feedforward + feedback against the realized state) under the true
nonlinear dynamics for one control horizon.  The opponent either plays
its half of the same saddle solution, a switched linear-quadratic
pursuit/tracking policy re-solved per replan, or nothing at all.

Scenario configuration round-trips through JSON with unit-suffixed keys
(km, kg, seconds explicit; everything else nondimensional); logs export
to CSV with a fixed column order and to JSON with the config echoed.
Runs are fully deterministic -- the seed is recorded for downstream
tooling, not consumed here.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .ddp import SaddleSolver, SolverSettings
from .errors import ConfigError, SolverError
from .game import EngagementProblem, GameWeights
from .integrate import integrate_field
from .lqgame import SwitchedLqPursuer
from .manifold import ManifoldData, build_manifold
from .orbit import PeriodicOrbit, load_orbit
from .params import SystemParams

SCHEMA_VERSION = 1

OPPONENTS = ("saddle", "lq", "none")
ALPHA_MAPPINGS = ("one_minus_a", "identity")
ABLATIONS = ("no_shaping", "no_phasing", "neither")

#: Exact export column order of the log CSV.
LOG_COLUMNS = (
    "t_nd", "t_days",
    "xe", "ye", "ze", "vxe", "vye", "vze",
    "xp", "yp", "zp", "vxp", "vyp", "vzp",
    "ce", "cp",
    "uex_N", "uey_N", "uez_N", "tau_e",
    "upx_N", "upy_N", "upz_N", "tau_p",
    "err_e_km", "err_p_km", "sep_km", "a", "alpha",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one engagement run, nondimensional inside.

    ``weights`` carries the base (alpha = 1) cost weights; the blend
    factors are re-derived from aggressiveness at every replan.  The
    prediction horizon sets the game length of each solve, the control
    horizon how much of each solution is executed before replanning.
    """

    params: SystemParams
    orbit_state: np.ndarray
    orbit_period: float
    weights: GameWeights
    phase_e0: float
    phase_p0: float
    prediction_horizon: float
    control_horizon: float
    duration: float
    separation_objective: float
    mass_e_kg: float = 1000.0
    mass_p_kg: float = 1000.0
    state_e0: np.ndarray | None = None
    state_p0: np.ndarray | None = None
    opponent: str = "saddle"
    phasing_enabled: bool = True
    shaping_enabled: bool = True
    alpha_mapping: str = "one_minus_a"
    alpha_p: float = 1.0
    lq_pursuit_weight: float = 100.0
    lq_switch: float | None = None
    solver: SolverSettings = SolverSettings()
    lambda_initial: float = 0.0
    orbit_closure_tol: float = 1e-6
    log_samples_per_period: int = 2000
    seed: int = 0

    def __post_init__(self):
        state = np.asarray(self.orbit_state, dtype=float)
        if state.shape != (6,):
            raise ConfigError(f"orbit_state must have shape (6,), got {state.shape}")
        object.__setattr__(self, "orbit_state", state)
        for name in ("state_e0", "state_p0"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (6,):
                    raise ConfigError(f"{name} must have shape (6,), got {v.shape}")
                object.__setattr__(self, name, v)
        if self.orbit_period <= 0.0:
            raise ConfigError(f"orbit period must be positive, got {self.orbit_period}")
        if self.prediction_horizon <= 0.0 or self.control_horizon <= 0.0:
            raise ConfigError("horizons must be positive")
        if self.control_horizon > self.prediction_horizon + 1e-15:
            raise ConfigError(
                f"control horizon {self.control_horizon} exceeds "
                f"prediction horizon {self.prediction_horizon}"
            )
        if self.duration <= 0.0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.separation_objective <= 0.0:
            raise ConfigError("separation objective must be positive")
        if self.weights.d0 < self.separation_objective:
            raise ConfigError(
                f"proximity distance d0 = {self.weights.d0} is below the "
                f"separation objective {self.separation_objective}"
            )
        if self.opponent not in OPPONENTS:
            raise ConfigError(f"opponent must be one of {OPPONENTS}, got {self.opponent!r}")
        if self.alpha_mapping not in ALPHA_MAPPINGS:
            raise ConfigError(
                f"alpha_mapping must be one of {ALPHA_MAPPINGS}, got {self.alpha_mapping!r}"
            )
        if not 0.0 <= self.alpha_p <= 1.0:
            raise ConfigError(f"alpha_p must lie in [0, 1], got {self.alpha_p}")
        if self.lq_pursuit_weight < 0.0:
            raise ConfigError("lq_pursuit_weight must be nonnegative")
        if self.lq_switch is None:
            object.__setattr__(self, "lq_switch", self.separation_objective)
        elif self.lq_switch <= 0.0:
            raise ConfigError("lq_switch must be positive")
        if self.lambda_initial < 0.0:
            raise ConfigError("lambda_initial must be nonnegative")
        if self.log_samples_per_period < 2:
            raise ConfigError("log_samples_per_period must be at least 2")

    @property
    def replan_count(self) -> int:
        return math.ceil(self.duration / self.control_horizon - 1e-9)

    def initial_engagement_state(self, orbit: PeriodicOrbit) -> np.ndarray:
        """14-dim start: player states (on-orbit at phase unless overridden)."""
        xe = self.state_e0 if self.state_e0 is not None else orbit.sample(self.phase_e0)
        xp = self.state_p0 if self.state_p0 is not None else orbit.sample(self.phase_p0)
        return np.concatenate([xe, xp, [self.phase_e0, self.phase_p0]])


@dataclass(frozen=True)
class ReplanRecord:
    """Summary of one replanning instant."""

    t: float
    aggressiveness: float
    alpha_e: float
    alpha_p: float
    iterations: int
    converged: bool
    update_norm: float
    cost: float
    lambda_final: float
    sweep_retries: int
    wall_time_s: float
    message: str
    lq_mode: str | None = None


@dataclass
class SimulationLog:
    """Uniformly sampled closed-loop history of one run.

    Controls are logged in Newtons (thrust) and nondimensional rate
    (tau); tracking errors and separation in kilometres.  ``a`` and
    ``alpha`` are step functions holding each replan's values.  Efforts
    are running integrals of thrust magnitude (N * TU) on the log grid.
    """

    config: ScenarioConfig
    times: np.ndarray
    states: np.ndarray
    controls_e: np.ndarray
    controls_p: np.ndarray
    err_e_km: np.ndarray
    err_p_km: np.ndarray
    sep_km: np.ndarray
    aggressiveness: np.ndarray
    alpha: np.ndarray
    effort_e: np.ndarray
    effort_p: np.ndarray
    replans: list[ReplanRecord] = field(default_factory=list)
    aborted: bool = False
    message: str = ""

    @property
    def times_days(self) -> np.ndarray:
        return self.times * (self.config.params.tu_s / 86400.0)

    def separation_nd(self) -> np.ndarray:
        return self.sep_km / self.config.params.lu_km


def update_aggressiveness(times, separations, t_now, window, d0) -> float:
    """Aggressiveness from the windowed minimum separation.

    a = max{1 - min sep over [t_now - window, t_now] / d0, 0}, clamped to
    [0, 1].  Samples before the window opened are ignored; callers with
    less than one window of history pass everything they have.
    """
    times = np.asarray(times, dtype=float)
    seps = np.asarray(separations, dtype=float)
    if times.size == 0:
        raise ValueError("separation history is empty")
    if d0 <= 0.0:
        raise ValueError(f"d0 must be positive, got {d0}")
    mask = times >= t_now - window
    if not np.any(mask):
        mask = np.ones_like(times, dtype=bool)
    d_min = float(seps[mask].min())
    return min(max(1.0 - d_min / d0, 0.0), 1.0)


def _map_alpha(a: float, mapping: str) -> float:
    return 1.0 - a if mapping == "one_minus_a" else a


def run_mpc(config: ScenarioConfig) -> SimulationLog:
    """Execute the receding-horizon engagement described by ``config``.

    A solver failure at a replan is retried once with a doubled lambda
    start; a second failure aborts the run and returns the partial log
    with ``aborted`` set.  Unconverged (stall-terminated) solves are not
    failures: their best iterate is applied and recorded.
    """
    params = config.params
    orbit = load_orbit(
        config.orbit_state, config.orbit_period, params, tol=config.orbit_closure_tol
    )
    manifold: ManifoldData | None = (
        build_manifold(orbit) if config.shaping_enabled else None
    )
    st = config.solver
    t_final = config.duration
    horizon = config.prediction_horizon
    d0 = config.weights.d0
    lu = params.lu_km

    # Global logging grid; replan boundaries need not align with it.
    dt_log = orbit.period / config.log_samples_per_period
    n_log = int(math.floor(t_final / dt_log + 1e-9))
    log_times = dt_log * np.arange(n_log + 1)

    x = config.initial_engagement_state(orbit)
    nw = 4 if config.phasing_enabled else 3
    natural = np.array([0.0, 0.0, 0.0, 1.0])[:nw]

    rows_t: list[float] = []
    rows_x: list[np.ndarray] = []
    rows_we: list[np.ndarray] = []
    rows_wp: list[np.ndarray] = []
    rows_a: list[float] = []
    rows_alpha: list[float] = []
    hist_t: list[float] = []
    hist_sep: list[float] = []
    replans: list[ReplanRecord] = []
    aborted = False
    message = ""

    we_init = wp_init = None
    lam_carry = config.lambda_initial
    k_log = 0  # next global log index to emit

    n_replans = config.replan_count
    for i_replan in range(n_replans):
        t_r = i_replan * config.control_horizon
        t_end = min(t_r + config.control_horizon, t_final)

        sep_now = float(np.linalg.norm(x[0:3] - x[6:9]))
        a = update_aggressiveness(
            hist_t + [t_r], hist_sep + [sep_now], t_r, orbit.period, d0
        )
        if config.shaping_enabled:
            alpha_e = _map_alpha(a, config.alpha_mapping)
            alpha_p = config.alpha_p
        else:
            alpha_e = alpha_p = 1.0
        prob = EngagementProblem(
            orbit,
            config.weights.with_alphas(alpha_e, alpha_p),
            config.mass_e_kg,
            config.mass_p_kg,
            manifold=manifold,
            phasing=config.phasing_enabled,
        )

        tic = time.perf_counter()
        try:
            res = SaddleSolver(prob, st).solve(
                x, (t_r, t_r + horizon), we0=we_init, wp0=wp_init, lambda0=lam_carry
            )
        except SolverError:
            retry_lam = 2.0 * max(lam_carry, st.lambda_seed)
            try:
                res = SaddleSolver(prob, st).solve(
                    x, (t_r, t_r + horizon), we0=we_init, wp0=wp_init, lambda0=retry_lam
                )
            except SolverError as err:
                aborted = True
                message = f"solver failed twice at t = {t_r:.6f}: {err}"
                replans.append(ReplanRecord(
                    t=t_r, aggressiveness=a, alpha_e=alpha_e, alpha_p=alpha_p,
                    iterations=0, converged=False, update_norm=math.inf,
                    cost=math.nan, lambda_final=retry_lam, sweep_retries=0,
                    wall_time_s=time.perf_counter() - tic, message=str(err),
                ))
                break
        rep = res.report
        lam_carry = rep.lambdas[-1] if rep.lambdas else 0.0

        # Opponent policy for this segment.
        lq_mode = None
        if config.opponent == "lq":
            eye3 = np.eye(3)
            w = config.weights
            pursuer = SwitchedLqPursuer(
                orbit, float(x[13]), (t_r, t_r + horizon), x[0:6], x[6:12],
                w.q_e0, w.q_p0, w.f_e0, w.f_p0,
                config.lq_pursuit_weight * eye3, w.r_e, w.r_p,
                config.mass_e_kg, config.mass_p_kg, config.lq_switch,
            )
            lq_mode = pursuer.mode

            def applied(t, xx):
                we, _ = res.policy_at(t, xx)
                up = pursuer.thrust(t, xx[0:6], xx[6:12])
                return we, np.concatenate([up, [1.0]])[:nw]
        elif config.opponent == "none":
            def applied(t, xx):
                we, _ = res.policy_at(t, xx)
                return we, natural
        else:
            def applied(t, xx):
                return res.policy_at(t, xx)

        replans.append(ReplanRecord(
            t=t_r, aggressiveness=a, alpha_e=alpha_e, alpha_p=alpha_p,
            iterations=rep.iterations, converged=rep.converged,
            update_norm=rep.update_norms[-1] if rep.update_norms else math.nan,
            cost=res.cost, lambda_final=lam_carry,
            sweep_retries=rep.sweep_retries,
            wall_time_s=time.perf_counter() - tic,
            message=rep.message, lq_mode=lq_mode,
        ))

        def seg_rhs(t, xx):
            we, wp = applied(t, xx)
            return prob.dynamics(t, xx, we, wp)

        seg = integrate_field(
            seg_rhs, x, (t_r, t_end), rtol=st.rollout_rtol, atol=st.rollout_atol
        )

        while k_log <= n_log and log_times[k_log] <= t_end + 1e-12:
            t_k = float(log_times[k_log])
            xx = x if t_k <= t_r else seg.at(min(t_k, seg.tf))
            we, wp = applied(t_k, xx)
            rows_t.append(t_k)
            rows_x.append(np.asarray(xx, dtype=float).copy())
            rows_we.append(np.concatenate([we, [1.0]])[:4].copy())
            rows_wp.append(np.concatenate([wp, [1.0]])[:4].copy())
            rows_a.append(a)
            rows_alpha.append(alpha_e)
            hist_t.append(t_k)
            hist_sep.append(float(np.linalg.norm(xx[0:3] - xx[6:9])))
            k_log += 1

        x = seg.final_state.copy()
        nshift = int(round(st.grid_nodes * (t_end - t_r) / horizon))
        nshift = min(max(nshift, 0), st.grid_nodes)
        we_init = np.vstack([res.controls_e[nshift:], np.tile(natural, (nshift, 1))])
        wp_init = np.vstack([res.controls_p[nshift:], np.tile(natural, (nshift, 1))])

    times = np.asarray(rows_t)
    states = np.asarray(rows_x)
    ctrl_e = np.asarray(rows_we)
    ctrl_p = np.asarray(rows_wp)
    if times.size == 0:
        raise SolverError("no samples logged: " + (message or "empty run"))

    ref_e = np.array([orbit.sample(c) for c in states[:, 12]])
    ref_p = np.array([orbit.sample(c) for c in states[:, 13]])
    err_e = np.linalg.norm(states[:, 0:3] - ref_e[:, 0:3], axis=1) * lu
    err_p = np.linalg.norm(states[:, 6:9] - ref_p[:, 0:3], axis=1) * lu
    sep = np.linalg.norm(states[:, 0:3] - states[:, 6:9], axis=1) * lu
    eff_e = np.concatenate([
        [0.0], cumulative_trapezoid(np.linalg.norm(ctrl_e[:, 0:3], axis=1), times)
    ]) if times.size > 1 else np.zeros_like(times)
    eff_p = np.concatenate([
        [0.0], cumulative_trapezoid(np.linalg.norm(ctrl_p[:, 0:3], axis=1), times)
    ]) if times.size > 1 else np.zeros_like(times)

    return SimulationLog(
        config=config,
        times=times,
        states=states,
        controls_e=ctrl_e,
        controls_p=ctrl_p,
        err_e_km=err_e,
        err_p_km=err_p,
        sep_km=sep,
        aggressiveness=np.asarray(rows_a),
        alpha=np.asarray(rows_alpha),
        effort_e=eff_e,
        effort_p=eff_p,
        replans=replans,
        aborted=aborted,
        message=message,
    )


def run_ablation(config: ScenarioConfig, which: str) -> SimulationLog:
    """Run with shaping disabled, phasing disabled, or both.

    ``no_shaping`` fixes alpha = 1 for both players; ``no_phasing`` drops
    the phase-rate controls (dimension 3, rates pinned to one);
    ``neither`` applies both.
    """
    if which not in ABLATIONS:
        raise ConfigError(f"ablation must be one of {ABLATIONS}, got {which!r}")
    cfg = config
    if which in ("no_shaping", "neither"):
        cfg = replace(cfg, shaping_enabled=False)
    if which in ("no_phasing", "neither"):
        cfg = replace(cfg, phasing_enabled=False)
    return run_mpc(cfg)


# -- configuration files ----------------------------------------------


def _as_matrix(value, n: int, name: str) -> np.ndarray:
    """Scalar -> scaled identity; length-n -> diagonal; n x n -> matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(n)
    if arr.shape == (n,):
        return np.diag(arr)
    if arr.shape == (n, n):
        return arr
    raise ConfigError(
        f"{name} must be a scalar, a length-{n} diagonal, or an {n}x{n} matrix"
    )


def _matrix_out(m: np.ndarray) -> list | float:
    d = np.diag(np.diag(m))
    if np.array_equal(m, d):
        diag = np.diag(m)
        if np.all(diag == diag[0]):
            return float(diag[0])
        return [float(v) for v in diag]
    return [[float(v) for v in row] for row in m]


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """JSON-ready mapping with explicit units in key names."""
    lu = cfg.params.lu_km
    w = cfg.weights
    out = {
        "schema_version": SCHEMA_VERSION,
        "system": {"mu": cfg.params.mu, "lu_km": lu, "tu_s": cfg.params.tu_s},
        "orbit": {
            "state_nd": [float(v) for v in cfg.orbit_state],
            "period_nd": cfg.orbit_period,
            "closure_tol": cfg.orbit_closure_tol,
        },
        "spacecraft": {
            "mass_e_kg": cfg.mass_e_kg,
            "mass_p_kg": cfg.mass_p_kg,
            "phase_e0_nd": cfg.phase_e0,
            "phase_p0_nd": cfg.phase_p0,
            "state_e0_nd": None if cfg.state_e0 is None else [float(v) for v in cfg.state_e0],
            "state_p0_nd": None if cfg.state_p0 is None else [float(v) for v in cfg.state_p0],
        },
        "engagement": {
            "prediction_horizon_nd": cfg.prediction_horizon,
            "control_horizon_nd": cfg.control_horizon,
            "duration_nd": cfg.duration,
            "opponent": cfg.opponent,
            "phasing_enabled": cfg.phasing_enabled,
            "shaping_enabled": cfg.shaping_enabled,
            "alpha_mapping": cfg.alpha_mapping,
            "alpha_p": cfg.alpha_p,
            "separation_objective_km": cfg.separation_objective * lu,
            "log_samples_per_period": cfg.log_samples_per_period,
            "seed": cfg.seed,
        },
        "weights": {
            "q_e0": _matrix_out(w.q_e0),
            "f_e0": _matrix_out(w.f_e0),
            "q_p0": _matrix_out(w.q_p0),
            "f_p0": _matrix_out(w.f_p0),
            "r_e": _matrix_out(w.r_e),
            "r_p": _matrix_out(w.r_p),
            "a_e": w.a_e,
            "a_p": w.a_p,
            "proximity_weight": w.proximity_weight,
            "p_exp": w.p_exp,
            "d0_km": w.d0 * lu,
        },
        "solver": {
            "epsilon": cfg.solver.epsilon,
            "gamma_ladder": list(cfg.solver.gamma_ladder),
            "lambda_seed": cfg.solver.lambda_seed,
            "lambda_factor": cfg.solver.lambda_factor,
            "lambda_max": cfg.solver.lambda_max,
            "lambda_initial": cfg.lambda_initial,
            "grid_nodes": cfg.solver.grid_nodes,
            "max_iterations": cfg.solver.max_iterations,
            "stall_limit": cfg.solver.stall_limit,
        },
        "lq": {
            "pursuit_weight": cfg.lq_pursuit_weight,
            "switch_km": cfg.lq_switch * lu,
        },
    }
    return out


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a scenario from its JSON mapping, validating as it goes."""
    try:
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        sys_d = data.get("system", {})
        params = SystemParams(
            mu=float(sys_d.get("mu", SystemParams().mu)),
            lu_km=float(sys_d.get("lu_km", SystemParams().lu_km)),
            tu_s=float(sys_d.get("tu_s", SystemParams().tu_s)),
        )
        lu = params.lu_km
        orb = data["orbit"]
        sc = data["spacecraft"]
        eng = data["engagement"]
        w_d = data["weights"]
        sol_d = data.get("solver", {})
        lq_d = data.get("lq", {})
        weights = GameWeights(
            q_e0=_as_matrix(w_d["q_e0"], 6, "q_e0"),
            f_e0=_as_matrix(w_d["f_e0"], 6, "f_e0"),
            q_p0=_as_matrix(w_d["q_p0"], 6, "q_p0"),
            f_p0=_as_matrix(w_d["f_p0"], 6, "f_p0"),
            r_e=_as_matrix(w_d["r_e"], 3, "r_e"),
            r_p=_as_matrix(w_d["r_p"], 3, "r_p"),
            a_e=float(w_d["a_e"]),
            a_p=float(w_d["a_p"]),
            proximity_weight=float(w_d["proximity_weight"]),
            p_exp=float(w_d["p_exp"]),
            d0=float(w_d["d0_km"]) / lu,
        )
        defaults = SolverSettings()
        solver = SolverSettings(
            epsilon=float(sol_d.get("epsilon", defaults.epsilon)),
            max_iterations=int(sol_d.get("max_iterations", defaults.max_iterations)),
            gamma_ladder=tuple(sol_d.get("gamma_ladder", defaults.gamma_ladder)),
            lambda_seed=float(sol_d.get("lambda_seed", defaults.lambda_seed)),
            lambda_factor=float(sol_d.get("lambda_factor", defaults.lambda_factor)),
            lambda_max=float(sol_d.get("lambda_max", defaults.lambda_max)),
            grid_nodes=int(sol_d.get("grid_nodes", defaults.grid_nodes)),
            stall_limit=int(sol_d.get("stall_limit", defaults.stall_limit)),
        )
        switch_km = lq_d.get("switch_km")
        return ScenarioConfig(
            params=params,
            orbit_state=np.asarray(orb["state_nd"], dtype=float),
            orbit_period=float(orb["period_nd"]),
            weights=weights,
            phase_e0=float(sc["phase_e0_nd"]),
            phase_p0=float(sc["phase_p0_nd"]),
            prediction_horizon=float(eng["prediction_horizon_nd"]),
            control_horizon=float(eng["control_horizon_nd"]),
            duration=float(eng["duration_nd"]),
            separation_objective=float(eng["separation_objective_km"]) / lu,
            mass_e_kg=float(sc.get("mass_e_kg", 1000.0)),
            mass_p_kg=float(sc.get("mass_p_kg", 1000.0)),
            state_e0=sc.get("state_e0_nd"),
            state_p0=sc.get("state_p0_nd"),
            opponent=str(eng.get("opponent", "saddle")),
            phasing_enabled=bool(eng.get("phasing_enabled", True)),
            shaping_enabled=bool(eng.get("shaping_enabled", True)),
            alpha_mapping=str(eng.get("alpha_mapping", "one_minus_a")),
            alpha_p=float(eng.get("alpha_p", 1.0)),
            lq_pursuit_weight=float(lq_d.get("pursuit_weight", 100.0)),
            lq_switch=None if switch_km is None else float(switch_km) / lu,
            solver=solver,
            lambda_initial=float(sol_d.get("lambda_initial", 0.0)),
            orbit_closure_tol=float(orb.get("closure_tol", 1e-6)),
            log_samples_per_period=int(eng.get("log_samples_per_period", 2000)),
            seed=int(eng.get("seed", 0)),
        )
    except KeyError as err:
        raise ConfigError(f"missing config key: {err}") from err
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {err}") from err


def load_config(path) -> ScenarioConfig:
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError as err:
        # missing config is a usage error, not an I/O failure
        raise ConfigError(f"config file not found: {path}") from err
    with fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: not valid JSON: {err}") from err
    return config_from_dict(data)


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


# -- log export ---------------------------------------------------------


def _log_rows(log: SimulationLog):
    t_days = log.times_days
    for i in range(log.times.size):
        s = log.states[i]
        yield (
            log.times[i], t_days[i],
            s[0], s[1], s[2], s[3], s[4], s[5],
            s[6], s[7], s[8], s[9], s[10], s[11],
            s[12], s[13],
            log.controls_e[i, 0], log.controls_e[i, 1], log.controls_e[i, 2],
            log.controls_e[i, 3],
            log.controls_p[i, 0], log.controls_p[i, 1], log.controls_p[i, 2],
            log.controls_p[i, 3],
            log.err_e_km[i], log.err_p_km[i], log.sep_km[i],
            log.aggressiveness[i], log.alpha[i],
        )


def _replan_dict(r: ReplanRecord) -> dict:
    # Failed replans carry inf/nan; JSON gets null instead.
    fin = lambda v: float(v) if math.isfinite(v) else None
    out = {
        "t_nd": r.t,
        "aggressiveness": r.aggressiveness,
        "alpha_e": r.alpha_e,
        "alpha_p": r.alpha_p,
        "iterations": r.iterations,
        "converged": r.converged,
        "update_norm": fin(r.update_norm),
        "cost": fin(r.cost),
        "lambda_final": r.lambda_final,
        "sweep_retries": r.sweep_retries,
        "wall_time_s": r.wall_time_s,
        "message": r.message,
    }
    if r.lq_mode is not None:
        out["lq_mode"] = r.lq_mode
    return out


def export_log(log: SimulationLog, format: str, path) -> None:
    """Write the run history to ``path`` as CSV or JSON.

    The CSV column order is fixed (``LOG_COLUMNS``) and floats are
    written with shortest round-trip formatting, so identical runs yield
    bit-identical files.  JSON mirrors the table and adds the config
    echo, replan records, effort integrals, and schema version.
    """
    if log.times.size == 0:
        raise ValueError("log is empty")
    path = Path(path)
    if format == "csv":
        lines = [",".join(LOG_COLUMNS)]
        for row in _log_rows(log):
            lines.append(",".join(repr(float(v)) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif format == "json":
        data = {
            "schema_version": SCHEMA_VERSION,
            "seed": log.config.seed,
            "config": config_to_dict(log.config),
            "aborted": log.aborted,
            "message": log.message,
            "replans": [_replan_dict(r) for r in log.replans],
            "effort_e_Ntu": [float(v) for v in log.effort_e],
            "effort_p_Ntu": [float(v) for v in log.effort_p],
            "columns": list(LOG_COLUMNS),
            "rows": [[float(v) for v in row] for row in _log_rows(log)],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh)
            fh.write("\n")
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")


def read_log_csv(path) -> dict[str, np.ndarray]:
    """Load an exported CSV back into named float columns."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: column count mismatch")
    return {name: data[:, i].copy() for i, name in enumerate(header)}
