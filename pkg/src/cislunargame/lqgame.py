"""Linear-quadratic pursuit-evasion game about a reference orbit.

Both spacecraft are linearised about a common reference point moving along
the orbit at unit phase rate.  With joint deviation state
``dx = [x_e - x_d, x_p - x_d]`` (12 components), evader thrust cost R_e,
pursuer thrust cost R_p, tracking weights Q_e, Q_p and a pursuit coupling
weight M on the relative position, the game cost is

    int dx' QQ dx + u_e' R_e u_e - u_p' R_p u_p dt + dx(tf)' QQ_f dx(tf),

where the assembled QQ encodes "evader tracks, pursuer tracks, pursuer
gains by closing the relative position".  The saddle-point value is
dx' S(t) dx with S solving a differential Riccati equation backward from
QQ_f; the feedback policies are linear in dx.

The Riccati flow can escape in finite time when the pursuit coupling is
too strong for the horizon (a conjugate point); this surfaces as a typed
error carrying the escape time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dynamics
from .errors import ConjugatePointError, IntegrationError
from .integrate import integrate_field
from .orbit import PeriodicOrbit


def assemble_lq_matrices(
    q_e: np.ndarray,
    q_p: np.ndarray,
    pursuit_weight: np.ndarray,
    mass_e_kg: float,
    mass_p_kg: float,
    params,
):
    """Joint-state input matrices and stage weight of the 12-dim LQ game.

    Returns (b_e, b_p, qq) where the input matrices map thrust in Newtons
    into the joint deviation dynamics and ``qq`` couples the players
    through the relative-position weight.
    """
    k_e = params.thrust_to_accel(mass_e_kg)
    k_p = params.thrust_to_accel(mass_p_kg)
    b_e = np.zeros((12, 3))
    b_e[3:6] = k_e * np.eye(3)
    b_p = np.zeros((12, 3))
    b_p[9:12] = k_p * np.eye(3)
    qq = assemble_stage_weight(q_e, q_p, pursuit_weight)
    return b_e, b_p, qq


def assemble_stage_weight(q_e: np.ndarray, q_p: np.ndarray, pursuit_weight: np.ndarray) -> np.ndarray:
    """[[Q_e - M6, M6], [M6, -Q_p - M6]] with M6 acting on positions only."""
    m6 = np.zeros((6, 6))
    m6[:3, :3] = pursuit_weight
    qq = np.zeros((12, 12))
    qq[:6, :6] = q_e - m6
    qq[:6, 6:] = m6
    qq[6:, :6] = m6
    qq[6:, 6:] = -q_p - m6
    return qq


@dataclass(frozen=True)
class RiccatiSolution:
    """Dense symmetric solution S(t) of a matrix Riccati equation."""

    t0: float
    tf: float
    n: int
    _sol: Callable = field(repr=False)
    _iu: tuple = field(repr=False)

    def at(self, t: float) -> np.ndarray:
        y = self._sol(float(t))
        s = np.zeros((self.n, self.n))
        s[self._iu] = y
        s = s + s.T - np.diag(np.diag(s))
        return s


def integrate_riccati(
    a_fn: Callable[[float], np.ndarray],
    b_e: np.ndarray,
    b_p: np.ndarray,
    r_e: np.ndarray,
    r_p: np.ndarray,
    q_fn: Callable[[float], np.ndarray],
    q_f: np.ndarray,
    t_span: tuple[float, float],
    rtol: float = 1e-10,
    atol: float = 1e-12,
    blowup: float = 1e12,
) -> RiccatiSolution:
    """Integrate -dS/dt = A'S + SA + Q - S Ge S + S Gp S backward from Qf.

    Ge and Gp are the control-authority Grammians B R^-1 B' of the
    minimising and maximising player.  Escape beyond ``blowup`` raises a
    conjugate-point error with the escape time attached.
    """
    n = q_f.shape[0]
    iu = np.triu_indices(n)
    ge = b_e @ np.linalg.solve(r_e, b_e.T)
    gp = b_p @ np.linalg.solve(r_p, b_p.T)
    t0, tf = float(t_span[0]), float(t_span[1])

    def rhs(t, y):
        s = np.zeros((n, n))
        s[iu] = y
        s = s + s.T - np.diag(np.diag(s))
        a = a_fn(t)
        minus_sdot = a.T @ s + s @ a + q_fn(t) - s @ ge @ s + s @ gp @ s
        minus_sdot = 0.5 * (minus_sdot + minus_sdot.T)
        return -minus_sdot[iu]

    def escape(t, y):
        return blowup - np.max(np.abs(y))

    escape.terminal = True

    try:
        sol = integrate_field(
            rhs, q_f[iu].astype(float), (tf, t0),
            rtol=rtol, atol=atol, method="RK45", events=escape,
        )
    except IntegrationError as err:
        raise ConjugatePointError(
            f"Riccati integration failed at t={err.t_fail}", t_fail=err.t_fail
        ) from err
    if sol.tf > t0 + 1e-12 * max(1.0, abs(t0)):
        raise ConjugatePointError(
            f"Riccati solution escaped at t={sol.tf:.6f} before reaching {t0}",
            t_fail=float(sol.tf),
        )
    return RiccatiSolution(t0=t0, tf=tf, n=n, _sol=lambda t: sol.at(t), _iu=iu)


@dataclass(frozen=True)
class LqGameSolution:
    """Riccati solution plus the data needed to evaluate saddle policies."""

    riccati: RiccatiSolution
    b_e: np.ndarray
    b_p: np.ndarray
    r_e: np.ndarray
    r_p: np.ndarray
    orbit: PeriodicOrbit
    t0: float
    phase0: float

    def reference_phase(self, t: float) -> float:
        return self.phase0 + (t - self.t0)

    def deviation(self, t: float, x_e: np.ndarray, x_p: np.ndarray) -> np.ndarray:
        xd = self.orbit.sample(self.reference_phase(t))
        return np.concatenate([x_e - xd, x_p - xd])

    def evader_thrust(self, t: float, dx: np.ndarray) -> np.ndarray:
        s = self.riccati.at(t)
        return -np.linalg.solve(self.r_e, self.b_e.T @ (s @ dx))

    def pursuer_thrust(self, t: float, dx: np.ndarray) -> np.ndarray:
        s = self.riccati.at(t)
        return np.linalg.solve(self.r_p, self.b_p.T @ (s @ dx))

    def value(self, t: float, dx: np.ndarray) -> float:
        return float(dx @ self.riccati.at(t) @ dx)


def solve_lq_game(
    orbit: PeriodicOrbit,
    phase0: float,
    t_span: tuple[float, float],
    q_e: np.ndarray,
    q_p: np.ndarray,
    f_e: np.ndarray,
    f_p: np.ndarray,
    pursuit_weight: np.ndarray,
    pursuit_weight_f: np.ndarray,
    r_e: np.ndarray,
    r_p: np.ndarray,
    mass_e_kg: float,
    mass_p_kg: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> LqGameSolution:
    """Solve the LQ pursuit-evasion game about an orbit-following reference."""
    params = orbit.params
    b_e, b_p, qq = assemble_lq_matrices(q_e, q_p, pursuit_weight, mass_e_kg, mass_p_kg, params)
    qq_f = assemble_stage_weight(f_e, f_p, pursuit_weight_f)
    t0 = float(t_span[0])

    def a_fn(t):
        a6 = dynamics._jacobian(orbit.sample(phase0 + (t - t0)), params.mu)
        a = np.zeros((12, 12))
        a[:6, :6] = a6
        a[6:, 6:] = a6
        return a

    ric = integrate_riccati(
        a_fn, b_e, b_p, r_e, r_p, lambda t: qq, qq_f, t_span, rtol=rtol, atol=atol
    )
    return LqGameSolution(
        riccati=ric, b_e=b_e, b_p=b_p, r_e=r_e, r_p=r_p,
        orbit=orbit, t0=t0, phase0=float(phase0),
    )


class LqGameProblem:
    """Adapter exposing an LQ game through the saddle-solver interface.

    Useful both for cross-validating the sweep against the Riccati path
    and as a self-contained linear-quadratic solver test bed.
    """

    def __init__(self, a_fn, b_e, b_p, q, q_f, r_e, r_p):
        self.a_fn = a_fn
        self.nx = q.shape[0]
        self.nwe = b_e.shape[1]
        self.nwp = b_p.shape[1]
        self.b_e = np.asarray(b_e, dtype=float)
        self.b_p = np.asarray(b_p, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.q_f = np.asarray(q_f, dtype=float)
        self.r_e = np.asarray(r_e, dtype=float)
        self.r_p = np.asarray(r_p, dtype=float)
        self.hess_we = 2.0 * self.r_e
        self.hess_wp = -2.0 * self.r_p

    def natural_control(self) -> np.ndarray:
        return np.zeros(self.nwe)

    def dynamics(self, t, x, we, wp):
        return self.a_fn(t) @ x + self.b_e @ we + self.b_p @ wp

    def jac_x(self, t, x):
        return self.a_fn(t)

    def running_cost(self, t, x, we, wp):
        return float(x @ self.q @ x + we @ self.r_e @ we - wp @ self.r_p @ wp)

    def running_cost_state_derivs(self, t, x):
        return 2.0 * self.q @ x, 2.0 * self.q

    def running_cost_with_state_derivs(self, t, x, we, wp):
        return self.running_cost(t, x, we, wp), 2.0 * self.q @ x, 2.0 * self.q

    def control_cost_grads(self, we, wp):
        return 2.0 * self.r_e @ we, -2.0 * self.r_p @ wp

    def terminal_cost(self, t, x):
        return float(x @ self.q_f @ x)

    def terminal_cost_derivs(self, t, x):
        return self.terminal_cost(t, x), 2.0 * self.q_f @ x, 2.0 * self.q_f


class SwitchedLqPursuer:
    """Benchmark pursuer: LQ game feedback below a separation threshold,
    plain LQ reference tracking above it.

    The switch is evaluated when the policy is built (once per replanning
    instant).  A conjugate point in the pursuit-mode Riccati triggers one
    retry at half the pursuit weight, then a fallback to tracking mode.
    """

    def __init__(
        self,
        orbit: PeriodicOrbit,
        phase0: float,
        t_span: tuple[float, float],
        x_e0: np.ndarray,
        x_p0: np.ndarray,
        q_e: np.ndarray,
        q_p: np.ndarray,
        f_e: np.ndarray,
        f_p: np.ndarray,
        pursuit_weight: np.ndarray,
        r_e: np.ndarray,
        r_p: np.ndarray,
        mass_e_kg: float,
        mass_p_kg: float,
        switch_distance: float,
        rtol: float = 1e-9,
        atol: float = 1e-11,
    ):
        sep = float(np.linalg.norm(np.asarray(x_e0)[:3] - np.asarray(x_p0)[:3]))
        self.mode = "pursuit" if sep <= switch_distance else "tracking"
        m = pursuit_weight if self.mode == "pursuit" else np.zeros((3, 3))
        attempts = [m]
        if self.mode == "pursuit":
            attempts.append(0.5 * pursuit_weight)
            attempts.append(np.zeros((3, 3)))
        last_err = None
        for m_try in attempts:
            try:
                self.solution = solve_lq_game(
                    orbit, phase0, t_span, q_e, q_p, f_e, f_p,
                    m_try, m_try, r_e, r_p, mass_e_kg, mass_p_kg,
                    rtol=rtol, atol=atol,
                )
                self.pursuit_weight_used = m_try
                if self.mode == "pursuit" and not np.any(m_try):
                    self.mode = "tracking"
                return
            except ConjugatePointError as err:
                last_err = err
        raise last_err

    def thrust(self, t: float, x_e: np.ndarray, x_p: np.ndarray) -> np.ndarray:
        """Pursuer thrust in Newtons at the true player states."""
        dx = self.solution.deviation(t, x_e, x_p)
        return self.solution.pursuer_thrust(t, dx)
