"""Periodic reference orbits: differential correction, loading, sampling.

Orbits of interest here are symmetric about the x-z plane (halo and
near-rectilinear halo families), so correction uses perpendicular-crossing
single shooting on a half period.  A loaded orbit carries a fine uniform
interpolation table (quintic Hermite in position-velocity, built from exact
field derivatives at the nodes), which makes phase sampling cheap enough to
sit inside inner solver loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import dynamics
from .errors import CorrectionError
from .integrate import integrate_field
from .params import SystemParams

_CORR_RTOL = 1e-12
_CORR_ATOL = 1e-12


@njit(cache=True)
def _quintic_eval(c, period, h, ys, fs, gs):
    """Quintic Hermite evaluation of the orbit table at phase c (wraps)."""
    s = c % period
    if s < 0.0:
        s += period
    k = int(s / h)
    n_seg = ys.shape[0] - 1
    if k >= n_seg:
        k = n_seg - 1
    th = (s - k * h) / h
    t2 = th * th
    t3 = t2 * th
    t4 = t3 * th
    t5 = t4 * th
    h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5
    h1 = th - 6.0 * t3 + 8.0 * t4 - 3.0 * t5
    h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5)
    h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5
    h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5
    h5 = 0.5 * (t3 - 2.0 * t4 + t5)
    out = np.empty(6)
    for i in range(6):
        out[i] = (
            h0 * ys[k, i]
            + h * h1 * fs[k, i]
            + h * h * h2 * gs[k, i]
            + h3 * ys[k + 1, i]
            + h * h4 * fs[k + 1, i]
            + h * h * h5 * gs[k + 1, i]
        )
    return out


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic rotating-frame orbit with a fast phase-sampling table."""

    initial_state: np.ndarray
    period: float
    params: SystemParams
    periodicity_residual: float
    table_ys: np.ndarray = field(repr=False)  # (n+1, 6) states at uniform phases
    table_fs: np.ndarray = field(repr=False)  # field values at nodes
    table_gs: np.ndarray = field(repr=False)  # field time-derivatives at nodes

    def __post_init__(self):
        if self.period <= 0.0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.periodicity_residual > 1e-6:
            raise ValueError(
                f"periodicity residual {self.periodicity_residual:.3e} too large for a usable orbit"
            )

    @property
    def table_step(self) -> float:
        return self.period / (self.table_ys.shape[0] - 1)

    def sample(self, phase: float) -> np.ndarray:
        """Orbit state at a phase; periodic in the orbit period."""
        return _quintic_eval(
            float(phase), self.period, self.table_step,
            self.table_ys, self.table_fs, self.table_gs,
        )

    def sample_many(self, phases: np.ndarray) -> np.ndarray:
        return np.stack([self.sample(float(c)) for c in np.asarray(phases, dtype=float)])

    def sample_derivative(self, phase: float) -> np.ndarray:
        """Phase derivative of the reference state, i.e. the field itself."""
        return dynamics._rhs(self.sample(phase), self.params.mu, 0.0, 0.0, 0.0)

    def radius_to_secondary(self, phase: float) -> float:
        return dynamics.primary_distances(self.sample(phase), self.params)[1]


def _half_period_flow(state0: np.ndarray, t_half: float, params: SystemParams):
    """Flow a perpendicular-crossing state for a half period with its STM."""
    aug0 = np.concatenate([state0, np.eye(6).ravel()])
    traj = integrate_field(
        lambda t, y: dynamics._variational_rhs(y, params.mu),
        aug0, (0.0, t_half), rtol=_CORR_RTOL, atol=_CORR_ATOL, method="DOP853",
    )
    yf = traj.final_state
    return yf[:6], yf[6:].reshape(6, 6)


def differential_correct(
    state_guess: np.ndarray,
    period_guess: float,
    params: SystemParams,
    fix: str = "z0",
    target_period: float | None = None,
    tol: float = 1e-11,
    max_iter: int = 50,
) -> tuple[np.ndarray, float]:
    """Correct a symmetric periodic orbit by half-period single shooting.

    The guess must start on a perpendicular x-z plane crossing (y, vx, vz
    are zeroed).  Newton iterations drive the half-period crossing residual
    [y, vx, vz] below ``tol``.

    Parameters
    ----------
    fix : {"z0", "x0"}
        Which coordinate stays pinned while the other, vy0 and the half
        period vary.  Ignored when ``target_period`` is given.
    target_period : float, optional
        If set, the half period is fixed to ``target_period / 2`` and
        x0, z0, vy0 all vary, yielding an orbit of exactly this period.

    Returns
    -------
    (state, period)
        Corrected perpendicular-crossing state and full period.
    """
    state = np.asarray(state_guess, dtype=float).copy()
    if state.shape != (6,):
        raise ValueError(f"state must have shape (6,), got {state.shape}")
    state[1] = 0.0
    state[3] = 0.0
    state[5] = 0.0
    if target_period is not None:
        t_half = 0.5 * float(target_period)
    else:
        t_half = 0.5 * float(period_guess)
    if t_half <= 0.0:
        raise ValueError("period guess must be positive")
    if fix not in ("z0", "x0"):
        raise ValueError(f"fix must be 'z0' or 'x0', got {fix!r}")

    for _ in range(max_iter):
        xf, phi = _half_period_flow(state, t_half, params)
        resid = np.array([xf[1], xf[3], xf[5]])
        if np.max(np.abs(resid)) < tol:
            if np.linalg.norm(dynamics._rhs(state, params.mu, 0.0, 0.0, 0.0)) < 1e-9:
                raise CorrectionError("corrector collapsed onto an equilibrium point")
            period = 2.0 * t_half
            return state, period
        jac = np.empty((3, 3))
        rows = (1, 3, 5)
        if target_period is not None:
            cols = (0, 2, 4)  # x0, z0, vy0
            for i, r in enumerate(rows):
                for j, c in enumerate(cols):
                    jac[i, j] = phi[r, c]
            delta = np.linalg.solve(jac, -resid)
            state[0] += delta[0]
            state[2] += delta[1]
            state[4] += delta[2]
        else:
            f_end = dynamics._rhs(xf, params.mu, 0.0, 0.0, 0.0)
            free = (0, 4) if fix == "z0" else (2, 4)  # (x0 or z0), vy0
            for i, r in enumerate(rows):
                jac[i, 0] = phi[r, free[0]]
                jac[i, 1] = phi[r, free[1]]
                jac[i, 2] = f_end[r]
            delta = np.linalg.solve(jac, -resid)
            state[free[0]] += delta[0]
            state[free[1]] += delta[1]
            t_half += delta[2]
            if t_half <= 0.0:
                raise CorrectionError("corrector drove the half period non-positive")

    raise CorrectionError(
        f"differential correction did not converge in {max_iter} iterations "
        f"(residual {np.max(np.abs(resid)):.3e})"
    )


def load_orbit(
    initial_state: np.ndarray,
    period: float,
    params: SystemParams,
    tol: float = 1e-6,
    n_nodes: int = 16384,
) -> PeriodicOrbit:
    """Verify periodicity of an initial condition and build a sampling table.

    Propagates one full period at tight tolerance, records the closure
    residual (max-abs state mismatch), and fails if it exceeds ``tol``.
    """
    state0 = np.asarray(initial_state, dtype=float)
    if state0.shape != (6,):
        raise ValueError(f"state must have shape (6,), got {state0.shape}")
    if period <= 0.0:
        raise ValueError(f"period must be positive, got {period}")
    traj = integrate_field(
        lambda t, y: dynamics._rhs(y, params.mu, 0.0, 0.0, 0.0),
        state0, (0.0, period), rtol=1e-12, atol=1e-12, method="DOP853",
    )
    residual = float(np.max(np.abs(traj.final_state - state0)))
    if residual > tol:
        raise CorrectionError(
            f"initial condition is not periodic: closure residual {residual:.3e} > {tol:.1e}"
        )
    ts = np.linspace(0.0, period, n_nodes + 1)
    ys = np.empty((n_nodes + 1, 6))
    fs = np.empty((n_nodes + 1, 6))
    gs = np.empty((n_nodes + 1, 6))
    for i, t in enumerate(ts):
        y = traj.at(t)
        ys[i] = y
        fs[i] = dynamics._rhs(y, params.mu, 0.0, 0.0, 0.0)
        gs[i] = dynamics._jacobian(y, params.mu) @ fs[i]
    # Make the table exactly periodic so wrap-around sampling is seamless.
    ys[-1] = ys[0]
    fs[-1] = fs[0]
    gs[-1] = gs[0]
    return PeriodicOrbit(
        initial_state=state0.copy(),
        period=float(period),
        params=params,
        periodicity_residual=residual,
        table_ys=ys,
        table_fs=fs,
        table_gs=gs,
    )
