"""Trajectory propagation with dense output.

Thin wrapper over scipy's embedded Runge-Kutta pairs.  ``RK45`` is the
default workhorse; ``DOP853`` is used where tolerances near 1e-12 are
required (periodic orbit generation, conservation checks).  Both carry
interpolants consistent with their order, which is what the dense
evaluation exposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError, SingularStateError
from .params import SystemParams
from . import dynamics

_EDGE_SLACK = 1e-12


@dataclass(frozen=True)
class DenseTrajectory:
    """Continuous-time trajectory over a span, evaluable at any interior time."""

    t0: float
    tf: float
    ts: np.ndarray
    ys: np.ndarray  # shape (n_nodes, n_states)
    sol: Callable = field(repr=False)
    nfev: int = 0

    def __post_init__(self):
        if self.ts.shape[0] != self.ys.shape[0]:
            raise ValueError("node times and states disagree in length")

    @property
    def span(self) -> tuple[float, float]:
        return self.t0, self.tf

    def at(self, t: float) -> np.ndarray:
        """State at time t; raises outside the propagated span."""
        lo, hi = min(self.t0, self.tf), max(self.t0, self.tf)
        slack = _EDGE_SLACK * max(1.0, abs(hi), abs(lo))
        if t < lo - slack or t > hi + slack:
            raise ValueError(f"time {t} outside propagated span [{lo}, {hi}]")
        return np.asarray(self.sol(min(max(t, lo), hi)), dtype=float)

    def __call__(self, t):
        """Vectorised evaluation; accepts scalars or arrays of times."""
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.at(float(t))
        return np.stack([self.at(float(ti)) for ti in t])

    @property
    def initial_state(self) -> np.ndarray:
        return self.ys[0].copy()

    @property
    def final_state(self) -> np.ndarray:
        return self.ys[-1].copy()


def integrate_field(
    rhs: Callable,
    state0: np.ndarray,
    t_span: tuple[float, float],
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "RK45",
    max_step: float = np.inf,
    events=None,
) -> DenseTrajectory:
    """Integrate an arbitrary vector field and wrap the dense solution.

    Backward spans (tf < t0) are supported.  Integration failures raise
    ``IntegrationError`` carrying the time reached; singularity-guard trips
    inside the field propagate as ``SingularStateError``.
    """
    y0 = np.asarray(state0, dtype=float)
    try:
        res = solve_ivp(
            rhs,
            t_span,
            y0,
            method=method,
            rtol=rtol,
            atol=atol,
            dense_output=True,
            max_step=max_step,
            events=events,
        )
    except SingularStateError:
        raise
    if res.status == -1:
        t_fail = float(res.t[-1]) if res.t.size else float(t_span[0])
        raise IntegrationError(f"integration failed: {res.message}", t_fail=t_fail)
    return DenseTrajectory(
        t0=float(t_span[0]),
        tf=float(res.t[-1]),
        ts=res.t.copy(),
        ys=res.y.T.copy(),
        sol=res.sol,
        nfev=int(res.nfev),
    )


def propagate(
    state0: np.ndarray,
    t_span: tuple[float, float],
    params: SystemParams,
    thrust_fn: Callable[[float, np.ndarray], np.ndarray] | None = None,
    mass_kg: float = 1.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    method: str = "RK45",
) -> DenseTrajectory:
    """Propagate a single spacecraft state through the rotating-frame field.

    Parameters
    ----------
    thrust_fn : callable, optional
        ``thrust_fn(t, state) -> (3,)`` thrust in Newtons.  Omitted means
        ballistic motion.
    mass_kg : float
        Spacecraft mass, only used when a thrust function is given.
    """
    state0 = np.asarray(state0, dtype=float)
    if state0.shape != (6,):
        raise ValueError(f"state must have shape (6,), got {state0.shape}")
    if thrust_fn is None:
        def rhs(t, y):
            return dynamics._rhs(y, params.mu, 0.0, 0.0, 0.0)
    else:
        k = params.thrust_to_accel(mass_kg)
        def rhs(t, y):
            u = thrust_fn(t, y)
            return dynamics._rhs(y, params.mu, k * u[0], k * u[1], k * u[2])
    return integrate_field(rhs, state0, t_span, rtol=rtol, atol=atol, method=method)
