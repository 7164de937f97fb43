"""Monodromy analysis and invariant-manifold directions along an orbit.

The state transition matrix over one period (the monodromy matrix) is
integrated once and analysed for its real unstable/stable multiplier pair.
Directions at interior phases come from pushing the phase-0 eigenvectors
through an STM table stored at the integrator's own accepted steps, which
concentrates nodes where the flow is stiff (perilune).

The unstable multiplier of a near-rectilinear halo can be negative; the
direction field then flips sign across the period wrap, so any quantity
built from these directions should be sign-invariant (the rank-one
projector is).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import dynamics
from .errors import OrbitStabilityError
from .integrate import integrate_field
from .orbit import PeriodicOrbit

_REAL_EIG_TOL = 1e-9
_UNSTABLE_MARGIN = 1e-6
_SIGN_TOL = 1e-8


@njit(cache=True)
def _hermite_matrix_eval(t, ts, vals, ders):
    """Cubic Hermite evaluation of a matrix-valued table on non-uniform nodes."""
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


def monodromy(orbit: PeriodicOrbit, rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    """State transition matrix over one full period from phase zero."""
    aug0 = np.concatenate([orbit.initial_state, np.eye(6).ravel()])
    traj = integrate_field(
        lambda t, y: dynamics._variational_rhs(y, orbit.params.mu),
        aug0, (0.0, orbit.period), rtol=rtol, atol=atol, method="DOP853",
    )
    return traj.final_state[6:].reshape(6, 6)


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    for v in vec:
        if abs(v) > _SIGN_TOL:
            return vec if v > 0.0 else -vec
    return vec


def _select_multipliers(mono: np.ndarray):
    """Pick the real unstable multiplier and its reciprocal stable partner."""
    w, v = np.linalg.eig(mono)
    real = np.abs(w.imag) <= _REAL_EIG_TOL * np.maximum(1.0, np.abs(w))
    unstable = real & (np.abs(w.real) > 1.0 + _UNSTABLE_MARGIN)
    if not np.any(unstable):
        raise OrbitStabilityError(
            "orbit has no real unstable multiplier; manifold shaping is undefined"
        )
    iu = int(np.argmax(np.where(unstable, np.abs(w.real), -np.inf)))
    lam_u = float(w[iu].real)
    # Stable partner: the real multiplier closest to the exact reciprocal.
    recip_err = np.where(real, np.abs(w.real * lam_u - 1.0), np.inf)
    recip_err[iu] = np.inf
    i_s = int(np.argmin(recip_err))
    lam_s = float(w[i_s].real)
    e_u = _fix_sign(np.real(v[:, iu]) / np.linalg.norm(np.real(v[:, iu])))
    e_s = _fix_sign(np.real(v[:, i_s]) / np.linalg.norm(np.real(v[:, i_s])))
    return lam_u, lam_s, e_u, e_s


@dataclass(frozen=True)
class ManifoldData:
    """Monodromy spectrum plus an STM table for directions at any phase."""

    orbit: PeriodicOrbit
    monodromy_matrix: np.ndarray
    unstable_multiplier: float
    stable_multiplier: float
    unstable_direction0: np.ndarray
    stable_direction0: np.ndarray
    node_ts: np.ndarray = field(repr=False)
    node_stms: np.ndarray = field(repr=False)   # (n, 6, 6)
    node_dstms: np.ndarray = field(repr=False)  # time derivatives A(t) @ STM

    def stm(self, phase: float) -> np.ndarray:
        """State transition matrix from phase 0 to a phase within one period."""
        t = float(phase)
        if not 0.0 <= t <= self.orbit.period * (1.0 + 1e-12):
            raise ValueError(f"phase {t} outside [0, period]")
        return _hermite_matrix_eval(t, self.node_ts, self.node_stms, self.node_dstms)

    def direction(self, phase: float, which: str = "unstable") -> np.ndarray:
        """Unit manifold direction at a phase; periodic up to overall sign."""
        if which == "unstable":
            e0 = self.unstable_direction0
        elif which == "stable":
            e0 = self.stable_direction0
        else:
            raise ValueError(f"which must be 'unstable' or 'stable', got {which!r}")
        s = float(phase) % self.orbit.period
        vec = _hermite_matrix_eval(s, self.node_ts, self.node_stms, self.node_dstms) @ e0
        return vec / np.linalg.norm(vec)

    def unstable_projector(self, phase: float) -> np.ndarray:
        """Rank-one orthogonal projector onto the unstable direction."""
        e = self.direction(phase, "unstable")
        return np.outer(e, e)


def build_manifold(orbit: PeriodicOrbit, rtol: float = 1e-11, atol: float = 1e-11) -> ManifoldData:
    """Integrate the STM over one period and analyse its spectrum.

    RK45 is used for the table pass: it takes many more (smaller) steps
    than a high-order method, which is exactly what the Hermite table
    wants.  The monodromy matrix itself is re-integrated at 1e-12 with
    DOP853 for the spectrum.
    """
    mu = orbit.params.mu
    aug0 = np.concatenate([orbit.initial_state, np.eye(6).ravel()])
    traj = integrate_field(
        lambda t, y: dynamics._variational_rhs(y, mu),
        aug0, (0.0, orbit.period), rtol=rtol, atol=atol, method="RK45",
    )
    n = traj.ts.shape[0]
    stms = np.empty((n, 6, 6))
    dstms = np.empty((n, 6, 6))
    for i in range(n):
        stms[i] = traj.ys[i, 6:].reshape(6, 6)
        jac = dynamics._jacobian(traj.ys[i, :6], mu)
        dstms[i] = jac @ stms[i]
    mono = monodromy(orbit)
    lam_u, lam_s, e_u, e_s = _select_multipliers(mono)
    return ManifoldData(
        orbit=orbit,
        monodromy_matrix=mono,
        unstable_multiplier=lam_u,
        stable_multiplier=lam_s,
        unstable_direction0=e_u,
        stable_direction0=e_s,
        node_ts=traj.ts.copy(),
        node_stms=stms,
        node_dstms=dstms,
    )
