"""Continuous-time differential dynamic programming for zero-sum games.

Solves min-max control problems of the form

    min_{w_e} max_{w_p}  phi(x(tf)) + int L(x, w_e, w_p) dt
    s.t.  dx/dt = F(x, w_e, w_p)

by iterating: nonlinear rollout of the nominal, a backward sweep of the
value function's quadratic expansion (value, gradient, Hessian as a packed
ODE), saddle-point gains from the control Hessians, a linearised rollout
realising the control update, and a damped refinement step.

The problem object supplies dimensions ``nx, nwe, nwp``, control-affine
dynamics ``dynamics(t, x, we, wp)`` with constant input matrices ``b_e,
b_p``, state Jacobian ``jac_x(t, x)``, separable costs via
``running_cost``, ``running_cost_state_derivs``, ``control_cost_grads``,
constant control Hessians ``hess_we`` (positive definite) and ``hess_wp``
(negative definite), and ``terminal_cost_derivs``.

The backward sweep's control Hessians are regularised by scaling,
``(1 + lambda) hess_we`` and ``(1 + lambda) hess_wp``, which damps every
control channel in proportion to its own curvature and preserves
convexity-concavity; lambda escalates geometrically when the sweep blows
up in finite time and relaxes back toward zero on success.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import IntegrationError, SingularStateError, SolverError
from .integrate import DenseTrajectory, integrate_field

_DEFAULT_EPSILON = 10.0**-4.5


@njit(cache=True)
def _lerp_uniform(t0, h, table, t):
    """Linear interpolation on a uniform grid, clamped at the ends."""
    n = table.shape[0] - 1
    s = (t - t0) / h
    if s <= 0.0:
        return table[0].copy()
    if s >= n:
        return table[n].copy()
    k = int(s)
    th = s - k
    return (1.0 - th) * table[k] + th * table[k + 1]


@njit(cache=True)
def _hermite_nodes_eval(t, ts, vals, ders):
    """Cubic Hermite evaluation between integrator nodes (non-uniform)."""
    n = ts.shape[0]
    if t <= ts[0]:
        return vals[0].copy()
    if t >= ts[n - 1]:
        return vals[n - 1].copy()
    k = np.searchsorted(ts, t) - 1
    h = ts[k + 1] - ts[k]
    th = (t - ts[k]) / h
    t2 = th * th
    t3 = t2 * th
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + th
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    return h00 * vals[k] + h * h10 * ders[k] + h01 * vals[k + 1] + h * h11 * ders[k + 1]


@dataclass(frozen=True)
class SolverSettings:
    """Termination, damping, regularisation and discretisation knobs."""

    epsilon: float = _DEFAULT_EPSILON
    max_iterations: int = 200
    gamma_ladder: tuple = (1.0, 0.5, 0.25, 0.1)
    lambda_seed: float = 1e-3
    lambda_factor: float = 1.5
    lambda_max: float = 1e9
    grid_nodes: int = 1024
    rollout_rtol: float = 1e-8
    rollout_atol: float = 1e-10
    sweep_rtol: float = 1e-8
    sweep_atol: float = 1e-10
    blowup_norm: float = 1e12
    stall_limit: int = 3

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not all(0.0 < g <= 1.0 for g in self.gamma_ladder):
            raise ValueError("gamma ladder entries must lie in (0, 1]")
        if self.lambda_factor <= 1.0:
            raise ValueError("lambda_factor must exceed 1")
        if self.grid_nodes < 2:
            raise ValueError("grid_nodes must be at least 2")


@dataclass
class SolveReport:
    """Per-iteration history of one solve."""

    iterations: int = 0
    converged: bool = False
    update_norms: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    sweep_retries: int = 0
    wall_time_s: float = 0.0
    message: str = ""


@dataclass(frozen=True)
class ValueExpansion:
    """Quadratic value expansion sampled on the control grid."""

    grid: np.ndarray
    v: np.ndarray       # (n,)
    v_x: np.ndarray     # (n, nx)
    v_xx: np.ndarray    # (n, nx, nx)

    def at_start(self):
        return float(self.v[0]), self.v_x[0].copy(), self.v_xx[0].copy()


@dataclass(frozen=True)
class SolveResult:
    """Converged (or best-effort) saddle-point solution of one horizon."""

    t0: float
    tf: float
    grid: np.ndarray
    controls_e: np.ndarray  # (n, nwe) nominal evader schedule
    controls_p: np.ndarray
    ff_e: np.ndarray        # (n, nwe) feedforward gains
    ff_p: np.ndarray
    fb_e: np.ndarray        # (n, nwe, nx) feedback gains
    fb_p: np.ndarray
    nominal: DenseTrajectory
    value: ValueExpansion
    cost: float
    report: SolveReport

    def control_at(self, t: float, which: str = "e") -> np.ndarray:
        table = self.controls_e if which == "e" else self.controls_p
        return _lerp_uniform(self.grid[0], self.grid[1] - self.grid[0], table, float(t))

    def policy_at(self, t: float, x: np.ndarray):
        """Closed-loop controls at (t, x): nominal + feedforward + feedback."""
        t = float(t)
        h = self.grid[1] - self.grid[0]
        dx = np.asarray(x, dtype=float) - self.nominal.at(min(max(t, self.t0), self.tf))
        we = (
            _lerp_uniform(self.grid[0], h, self.controls_e, t)
            + _lerp_uniform(self.grid[0], h, self.ff_e, t)
            + _lerp_uniform(self.grid[0], h, self.fb_e, t) @ dx
        )
        wp = (
            _lerp_uniform(self.grid[0], h, self.controls_p, t)
            + _lerp_uniform(self.grid[0], h, self.ff_p, t)
            + _lerp_uniform(self.grid[0], h, self.fb_p, t) @ dx
        )
        return we, wp


class _NominalTable:
    """Cubic Hermite table of a rollout, cheap to evaluate in sweep loops."""

    def __init__(self, ts: np.ndarray, ys: np.ndarray, fs: np.ndarray):
        self.ts = ts
        self.ys = ys
        self.fs = fs

    def at(self, t: float) -> np.ndarray:
        return _hermite_nodes_eval(float(t), self.ts, self.ys, self.fs)


def rollout(problem, x0, t_span, we_table, wp_table, grid, rtol, atol):
    """Nonlinear rollout under tabulated controls, with cost quadrature.

    Returns (trajectory table, dense node times, J) where J includes the
    terminal cost at the endpoint.
    """
    t0, tf = t_span
    h = grid[1] - grid[0]
    g0 = grid[0]

    def rhs(t, aug):
        we = _lerp_uniform(g0, h, we_table, t)
        wp = _lerp_uniform(g0, h, wp_table, t)
        out = np.empty(problem.nx + 1)
        out[: problem.nx] = problem.dynamics(t, aug[: problem.nx], we, wp)
        out[problem.nx] = problem.running_cost(t, aug[: problem.nx], we, wp)
        return out

    aug0 = np.concatenate([np.asarray(x0, dtype=float), [0.0]])
    traj = integrate_field(rhs, aug0, t_span, rtol=rtol, atol=atol, method="RK45")
    xs = traj.ys[:, : problem.nx]
    fs = np.empty_like(xs)
    for i, t in enumerate(traj.ts):
        we = _lerp_uniform(g0, h, we_table, t)
        wp = _lerp_uniform(g0, h, wp_table, t)
        fs[i] = problem.dynamics(t, xs[i], we, wp)
    table = _NominalTable(traj.ts.copy(), xs.copy(), fs)
    cost = float(traj.ys[-1, problem.nx]) + problem.terminal_cost(tf, xs[-1])
    return table, traj, cost


class SaddleSolver:
    """Game-theoretic DDP solver over a fixed horizon."""

    def __init__(self, problem, settings: SolverSettings | None = None):
        self.problem = problem
        self.settings = settings or SolverSettings()
        nx = problem.nx
        self._iu = np.triu_indices(nx)
        self._nvech = nx * (nx + 1) // 2

    # -- packing ---------------------------------------------------------

    def _pack(self, v, vx, vxx):
        return np.concatenate([[v], vx, vxx[self._iu]])

    def _unpack(self, y):
        nx = self.problem.nx
        v = y[0]
        vx = y[1 : 1 + nx]
        vxx = np.zeros((nx, nx))
        vxx[self._iu] = y[1 + nx :]
        vxx = vxx + vxx.T - np.diag(np.diag(vxx))
        return v, vx, vxx

    # -- backward sweep ----------------------------------------------------

    def _sweep_rhs(self, t, y, nominal, we_table, wp_table, g0, h, inv_he, inv_hp, he, hp):
        prob = self.problem
        nx = prob.nx
        x = nominal.at(t)
        we = _lerp_uniform(g0, h, we_table, t)
        wp = _lerp_uniform(g0, h, wp_table, t)

        vx = y[1 : 1 + nx]
        vxx = np.zeros((nx, nx))
        vxx[self._iu] = y[1 + nx :]
        vxx = vxx + vxx.T - np.diag(np.diag(vxx))

        a = prob.jac_x(t, x)
        lval, lx, lxx = prob.running_cost_with_state_derivs(t, x, we, wp)
        lwe, lwp = prob.control_cost_grads(we, wp)

        qx = lx + a.T @ vx
        qxx = lxx + vxx @ a + a.T @ vxx
        qwe = lwe + prob.b_e.T @ vx
        qwp = lwp + prob.b_p.T @ vx
        qwex = prob.b_e.T @ vxx
        qwpx = prob.b_p.T @ vxx

        le = -inv_he @ qwe
        lp = -inv_hp @ qwp
        ke = -inv_he @ qwex
        kp = -inv_hp @ qwpx

        he_le = he @ le
        hp_lp = hp @ lp
        minus_v = lval + le @ qwe + lp @ qwp + 0.5 * le @ he_le + 0.5 * lp @ hp_lp
        minus_vx = (
            qx + ke.T @ qwe + kp.T @ qwp + qwex.T @ le + qwpx.T @ lp
            + ke.T @ he_le + kp.T @ hp_lp
        )
        minus_vxx = (
            qxx
            + ke.T @ qwex + qwex.T @ ke
            + kp.T @ qwpx + qwpx.T @ kp
            + ke.T @ he @ ke + kp.T @ hp @ kp
        )
        minus_vxx = 0.5 * (minus_vxx + minus_vxx.T)

        out = np.empty(y.shape[0])
        out[0] = -minus_v
        out[1 : 1 + nx] = -minus_vx
        out[1 + nx :] = -minus_vxx[self._iu]
        return out

    def _backward_sweep(self, nominal, we_table, wp_table, grid, lam):
        """Integrate the value expansion from tf to t0 at regularisation lam.

        Returns (dense solution, lambda actually used, retry count).
        """
        prob = self.problem
        st = self.settings
        t0, tf = grid[0], grid[-1]
        h = grid[1] - grid[0]
        phi, phix, phixx = prob.terminal_cost_derivs(tf, nominal.at(tf))
        y_f = self._pack(phi, phix, phixx)
        blow = st.blowup_norm

        def blowup_event(t, y):
            return blow - np.max(np.abs(y[1:]))

        blowup_event.terminal = True

        retries = 0
        while True:
            # Scale both Hessians by (1 + lam): damping proportional to each
            # channel's own curvature, preserving convexity-concavity.
            he = (1.0 + lam) * prob.hess_we
            hp = (1.0 + lam) * prob.hess_wp
            inv_he = np.linalg.inv(he)
            inv_hp = np.linalg.inv(hp)
            try:
                sol = integrate_field(
                    lambda t, y: self._sweep_rhs(
                        t, y, nominal, we_table, wp_table, grid[0], h, inv_he, inv_hp, he, hp
                    ),
                    y_f, (tf, t0),
                    rtol=st.sweep_rtol, atol=st.sweep_atol, method="RK45",
                    events=blowup_event,
                )
                if sol.tf <= t0 + 1e-12 * max(1.0, abs(t0)):
                    return sol, lam, retries
            except IntegrationError:
                pass
            # Finite-time escape: escalate the regularisation and retry.
            retries += 1
            lam = st.lambda_seed if lam == 0.0 else lam * st.lambda_factor
            if lam > st.lambda_max:
                raise SolverError(
                    f"backward sweep failed to stabilise below lambda_max={st.lambda_max:.1e}"
                )

    def _gains_on_grid(self, sweep_sol, we_table, wp_table, grid, inv_he, inv_hp):
        prob = self.problem
        n = grid.shape[0]
        ff_e = np.empty((n, prob.nwe))
        ff_p = np.empty((n, prob.nwp))
        fb_e = np.empty((n, prob.nwe, prob.nx))
        fb_p = np.empty((n, prob.nwp, prob.nx))
        vs = np.empty(n)
        vxs = np.empty((n, prob.nx))
        vxxs = np.empty((n, prob.nx, prob.nx))
        for i, t in enumerate(grid):
            v, vx, vxx = self._unpack(sweep_sol.at(t))
            vs[i] = v
            vxs[i] = vx
            vxxs[i] = vxx
            lwe, lwp = prob.control_cost_grads(we_table[i], wp_table[i])
            ff_e[i] = -inv_he @ (lwe + prob.b_e.T @ vx)
            ff_p[i] = -inv_hp @ (lwp + prob.b_p.T @ vx)
            fb_e[i] = -inv_he @ (prob.b_e.T @ vxx)
            fb_p[i] = -inv_hp @ (prob.b_p.T @ vxx)
        value = ValueExpansion(grid=grid.copy(), v=vs, v_x=vxs, v_xx=vxxs)
        return ff_e, ff_p, fb_e, fb_p, value

    def _linearized_rollout(self, nominal, grid, ff_e, ff_p, fb_e, fb_p):
        """Forward perturbation under the computed gains from zero deviation.

        Returns realised control updates tabulated on the grid and the
        average-power update norm per player.
        """
        prob = self.problem
        t0, tf = grid[0], grid[-1]
        h = grid[1] - grid[0]
        g0 = grid[0]

        def rhs(t, dx):
            a = prob.jac_x(t, nominal.at(t))
            dwe = _lerp_uniform(g0, h, ff_e, t) + _lerp_uniform(g0, h, fb_e, t) @ dx
            dwp = _lerp_uniform(g0, h, ff_p, t) + _lerp_uniform(g0, h, fb_p, t) @ dx
            return a @ dx + prob.b_e @ dwe + prob.b_p @ dwp

        st = self.settings
        sol = integrate_field(
            rhs, np.zeros(prob.nx), (t0, tf),
            rtol=st.rollout_rtol, atol=st.rollout_atol, method="RK45",
        )
        n = grid.shape[0]
        dwe_tab = np.empty((n, prob.nwe))
        dwp_tab = np.empty((n, prob.nwp))
        for i, t in enumerate(grid):
            dx = sol.at(t)
            dwe_tab[i] = ff_e[i] + fb_e[i] @ dx
            dwp_tab[i] = ff_p[i] + fb_p[i] @ dx
        norm_e = float(np.sqrt(np.mean(np.sum(dwe_tab**2, axis=1))))
        norm_p = float(np.sqrt(np.mean(np.sum(dwp_tab**2, axis=1))))
        return dwe_tab, dwp_tab, norm_e, norm_p

    # -- main loop ---------------------------------------------------------

    def solve(self, x0, t_span, we0=None, wp0=None, lambda0=0.0) -> SolveResult:
        """Run the saddle-point iteration from tabulated initial policies.

        ``we0``/``wp0`` may be (n, nw) tables on the solver grid or None
        for the natural initialisation (zero thrust, unit phase rate where
        applicable; the problem supplies it via ``natural_control``).
        ``lambda0`` seeds the regularisation of the first backward sweep;
        receding-horizon callers pass the previous solve's final value to
        skip the escalation ladder on problems known to need damping.
        """
        prob = self.problem
        st = self.settings
        t0, tf = float(t_span[0]), float(t_span[1])
        if tf <= t0:
            raise ValueError("horizon must have tf > t0")
        grid = np.linspace(t0, tf, st.grid_nodes + 1)
        n = grid.shape[0]

        nat = np.asarray(prob.natural_control(), dtype=float)
        we = np.tile(nat[: prob.nwe], (n, 1)) if we0 is None else np.array(we0, dtype=float)
        wp = np.tile(nat[: prob.nwp], (n, 1)) if wp0 is None else np.array(wp0, dtype=float)
        if we.shape != (n, prob.nwe) or wp.shape != (n, prob.nwp):
            raise ValueError("initial control tables do not match the solver grid")

        report = SolveReport()
        tic = time.perf_counter()
        lam = max(0.0, float(lambda0))
        stall = 0

        nominal, _, cost = rollout(
            prob, x0, (t0, tf), we, wp, grid, st.rollout_rtol, st.rollout_atol
        )
        best = None

        for it in range(st.max_iterations):
            report.iterations = it + 1
            sweep_sol, lam_used, retries = self._backward_sweep(nominal, we, wp, grid, lam)
            report.sweep_retries += retries
            report.lambdas.append(lam_used)
            inv_he = np.linalg.inv((1.0 + lam_used) * prob.hess_we)
            inv_hp = np.linalg.inv((1.0 + lam_used) * prob.hess_wp)
            ff_e, ff_p, fb_e, fb_p, value = self._gains_on_grid(
                sweep_sol, we, wp, grid, inv_he, inv_hp
            )
            dwe, dwp, norm_e, norm_p = self._linearized_rollout(
                nominal, grid, ff_e, ff_p, fb_e, fb_p
            )
            update_norm = norm_e + norm_p
            report.update_norms.append(update_norm)
            report.costs.append(cost)

            # Stall fallback keeps the iterate closest to stationarity; cost
            # is not a merit function at a saddle point.
            if best is None or update_norm <= best[0]:
                best = (update_norm, cost, we.copy(), wp.copy(), ff_e, ff_p, fb_e, fb_p, nominal, value)

            if update_norm <= st.epsilon:
                report.converged = True
                report.message = "update norm within tolerance"
                break

            # Relax the regularisation for the next sweep after a success.
            lam = lam_used / st.lambda_factor if lam_used > 0.0 else 0.0
            if 0.0 < lam < st.lambda_seed:
                lam = 0.0

            accepted = False
            for gamma in st.gamma_ladder:
                we_c = we + gamma * dwe
                wp_c = wp + gamma * dwp
                try:
                    nom_c, _, cost_c = rollout(
                        prob, x0, (t0, tf), we_c, wp_c, grid, st.rollout_rtol, st.rollout_atol
                    )
                except (IntegrationError, SingularStateError):
                    continue
                if cost_c < cost:
                    we, wp, nominal, cost = we_c, wp_c, nom_c, cost_c
                    report.gammas.append(gamma)
                    accepted = True
                    stall = 0
                    break
            if not accepted:
                # No step decreased the evader cost: take the smallest step
                # anyway and count the stall.
                gamma = st.gamma_ladder[-1]
                try:
                    we_c = we + gamma * dwe
                    wp_c = wp + gamma * dwp
                    nominal, _, cost = rollout(
                        prob, x0, (t0, tf), we_c, wp_c, grid, st.rollout_rtol, st.rollout_atol
                    )
                    we, wp = we_c, wp_c
                    report.gammas.append(gamma)
                    stall += 1
                except (IntegrationError, SingularStateError):
                    stall = st.stall_limit
                if stall >= st.stall_limit:
                    _, cost, we, wp, ff_e, ff_p, fb_e, fb_p, nominal, value = best
                    report.message = "stalled; returning best iterate"
                    break
        else:
            if best is not None:
                _, cost, we, wp, ff_e, ff_p, fb_e, fb_p, nominal, value = best
            report.message = "iteration cap reached"

        report.wall_time_s = time.perf_counter() - tic
        return SolveResult(
            t0=t0, tf=tf, grid=grid,
            controls_e=we, controls_p=wp,
            ff_e=ff_e, ff_p=ff_p, fb_e=fb_e, fb_p=fb_p,
            nominal=_nominal_to_dense(nominal, t0, tf),
            value=value,
            cost=cost,
            report=report,
        )


def _nominal_to_dense(table: _NominalTable, t0: float, tf: float) -> DenseTrajectory:
    return DenseTrajectory(
        t0=t0, tf=tf, ts=table.ts, ys=table.ys,
        sol=lambda t: _hermite_nodes_eval(float(t), table.ts, table.ys, table.fs),
        nfev=0,
    )


def solve_to_convergence(
    problem,
    settings: SolverSettings,
    x0,
    t_span,
    we0=None,
    wp0=None,
    lambda0: float = 0.0,
    max_restarts: int = 8,
) -> SolveResult:
    """Chain warm restarts of ``SaddleSolver.solve`` until convergence.

    The stall rule terminates a single solve after three consecutive
    line-search failures, which near a saddle point can happen while the
    update norms are still shrinking steadily (the cost hovers at the
    saddle value, so strict decreases become coin flips).  Restarting
    from the returned control tables resets the stall budget; restarts
    use an undamped first sweep so the measured update norm reflects
    true stationarity rather than regularisation-scaled steps.

    Returns the first converged result, or the last attempt if the
    restart budget runs out (``report.converged`` distinguishes them).
    """
    solver = SaddleSolver(problem, settings)
    res = solver.solve(x0, t_span, we0=we0, wp0=wp0, lambda0=lambda0)
    restarts = 0
    while not res.report.converged and restarts < max_restarts:
        restarts += 1
        res = solver.solve(
            x0, t_span, we0=res.controls_e, wp0=res.controls_p, lambda0=0.0
        )
    if restarts:
        res.report.message += f" ({restarts} warm restart{'s' if restarts > 1 else ''})"
    return res
