"""Two-spacecraft pursuit-evasion game model on a periodic reference orbit.

Engagement state (14 components): evader position-velocity, pursuer
position-velocity, then one reference phase per player,

    x = [x_e (6), x_p (6), c_e, c_p].

Each player's control is thrust (Newtons, rotating frame) plus a phase
rate, ``w_i = [u_i (3), tau_i]``; the reference point each player is
penalised against is the orbit sampled at its own phase, which advances at
the commanded rate.  The running cost is zero-sum: the evader pays for its
tracking error, thrust, phase-rate deviation and proximity to the pursuer,
and collects the pursuer's corresponding terms.

Tracking weights can be shaped toward the orbit's unstable manifold: with
shaping fraction alpha, weight Q0 becomes

    Q(c) = alpha * Q0 + (1 - alpha) * sqrt(Q0) P_u(c) sqrt(Q0),

which keeps deviations along the local unstable direction at full penalty
while discounting the remaining directions to alpha * Q0.  Errors that
would grow exponentially stay expensive; benign ones become cheap to
carry.  Derivatives treat the shaped weights as frozen at the evaluation
phases (quasi-static shaping); the reference point's phase dependence is
differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from numba import njit

from . import dynamics
from .manifold import ManifoldData, _hermite_matrix_eval
from .orbit import PeriodicOrbit, _quintic_eval
from .params import SystemParams

# Engagement vector layout.
EVADER = slice(0, 6)
PURSUER = slice(6, 12)
PHASE_E = 12
PHASE_P = 13
N_STATE = 14


@dataclass(frozen=True)
class EngagementState:
    """Full two-player engagement state."""

    evader: np.ndarray
    pursuer: np.ndarray
    evader_phase: float
    pursuer_phase: float

    def __post_init__(self):
        for name in ("evader", "pursuer"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (6,):
                raise ValueError(f"{name} state must have shape (6,), got {v.shape}")
            object.__setattr__(self, name, v)

    def to_vector(self) -> np.ndarray:
        out = np.empty(N_STATE)
        out[EVADER] = self.evader
        out[PURSUER] = self.pursuer
        out[PHASE_E] = self.evader_phase
        out[PHASE_P] = self.pursuer_phase
        return out

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "EngagementState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (N_STATE,):
            raise ValueError(f"engagement vector must have shape ({N_STATE},), got {vec.shape}")
        return cls(vec[EVADER].copy(), vec[PURSUER].copy(), float(vec[PHASE_E]), float(vec[PHASE_P]))

    def separation(self) -> float:
        return float(np.linalg.norm(self.evader[:3] - self.pursuer[:3]))


def _check_spd(name: str, m: np.ndarray, size: int) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (size, size):
        raise ValueError(f"{name} must have shape ({size}, {size}), got {m.shape}")
    if np.max(np.abs(m - m.T)) > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(m)) <= 0.0:
        raise ValueError(f"{name} must be positive definite")
    return m


def _check_block_diagonal(name: str, m: np.ndarray):
    if np.max(np.abs(m[:3, 3:])) > 1e-12 or np.max(np.abs(m[3:, :3])) > 1e-12:
        raise ValueError(f"{name} must be block diagonal in position/velocity for shaping")


@njit(cache=True)
def proximity_penalty(d: float, weight: float, p_exp: float, d0: float):
    """Smooth proximity penalty and its first two radial derivatives.

    Zero with two continuous derivatives at d = d0 (requires p_exp > 2),
    growing monotonically as the separation d drops below d0.
    """
    if d >= d0 or weight == 0.0:
        return 0.0, 0.0, 0.0
    gap = d0 - d
    s = (weight / p_exp) * gap**p_exp
    ds = -weight * gap ** (p_exp - 1.0)
    dss = weight * (p_exp - 1.0) * gap ** (p_exp - 2.0)
    return s, ds, dss


@njit(cache=True)
def _shaped_weight(q0, sqrt_q0, alpha, direction):
    """alpha * Q0 + (1 - alpha) * (sqrt(Q0) e)(sqrt(Q0) e)^T."""
    b = sqrt_q0 @ direction
    return alpha * q0 + (1.0 - alpha) * np.outer(b, b)


def shaped_weight(q0: np.ndarray, alpha: float, projector: np.ndarray) -> np.ndarray:
    """Manifold-shaped tracking weight from a base weight and a projector.

    ``projector`` is the rank-one unstable projector e e^T; the shaped
    weight is ``alpha Q0 + (1 - alpha) sqrt(Q0) projector sqrt(Q0)`` with
    the principal (blockwise) matrix square root.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    q0 = _check_spd("q0", q0, 6)
    _check_block_diagonal("q0", q0)
    sq = _principal_sqrt(q0)
    return alpha * q0 + (1.0 - alpha) * sq @ projector @ sq


def _principal_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class GameWeights:
    """Cost weights of the engagement game, in nondimensional units.

    Tracking and terminal weights must be symmetric positive definite and
    block diagonal in position/velocity (shaping mixes blocks otherwise).
    ``p_exp > 2`` keeps the proximity penalty twice continuously
    differentiable at the activation distance ``d0``.
    """

    q_e0: np.ndarray
    f_e0: np.ndarray
    q_p0: np.ndarray
    f_p0: np.ndarray
    r_e: np.ndarray
    r_p: np.ndarray
    a_e: float
    a_p: float
    proximity_weight: float
    p_exp: float
    d0: float
    alpha_e: float = 1.0
    alpha_p: float = 1.0

    def __post_init__(self):
        for name in ("q_e0", "f_e0", "q_p0", "f_p0"):
            m = _check_spd(name, getattr(self, name), 6)
            _check_block_diagonal(name, m)
            object.__setattr__(self, name, m)
        for name in ("r_e", "r_p"):
            object.__setattr__(self, name, _check_spd(name, getattr(self, name), 3))
        if self.a_e <= 0.0 or self.a_p <= 0.0:
            raise ValueError("phase-rate weights a_e, a_p must be positive")
        if self.proximity_weight < 0.0:
            raise ValueError("proximity weight must be nonnegative")
        if self.p_exp <= 2.0:
            raise ValueError(f"p_exp must exceed 2 for a C^2 penalty, got {self.p_exp}")
        if self.d0 <= 0.0:
            raise ValueError(f"proximity distance d0 must be positive, got {self.d0}")
        for name in ("alpha_e", "alpha_p"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {a}")

    @cached_property
    def sqrt_q_e0(self) -> np.ndarray:
        return _principal_sqrt(self.q_e0)

    @cached_property
    def sqrt_f_e0(self) -> np.ndarray:
        return _principal_sqrt(self.f_e0)

    @cached_property
    def sqrt_q_p0(self) -> np.ndarray:
        return _principal_sqrt(self.q_p0)

    @cached_property
    def sqrt_f_p0(self) -> np.ndarray:
        return _principal_sqrt(self.f_p0)

    def with_alphas(self, alpha_e: float, alpha_p: float) -> "GameWeights":
        return replace(self, alpha_e=alpha_e, alpha_p=alpha_p)


class EngagementProblem:
    """Dynamics and zero-sum costs of one engagement, ready for the solver.

    Exposes the interface the saddle-point solver consumes: dimensions,
    control-affine dynamics with constant input matrices, separable running
    cost with constant control Hessians, and terminal cost expansions.

    With ``phasing=False`` the phase rates are pinned to one and controls
    reduce to thrust only (3 per player).
    """

    def __init__(
        self,
        orbit: PeriodicOrbit,
        weights: GameWeights,
        mass_e_kg: float,
        mass_p_kg: float,
        manifold: ManifoldData | None = None,
        phasing: bool = True,
    ):
        if (weights.alpha_e < 1.0 or weights.alpha_p < 1.0) and manifold is None:
            raise ValueError("manifold data is required when shaping is active (alpha < 1)")
        self.orbit = orbit
        self.weights = weights
        self.manifold = manifold
        self.params: SystemParams = orbit.params
        self.mass_e_kg = float(mass_e_kg)
        self.mass_p_kg = float(mass_p_kg)
        self.k_e = self.params.thrust_to_accel(mass_e_kg)
        self.k_p = self.params.thrust_to_accel(mass_p_kg)
        self.phasing = bool(phasing)

        self.nx = N_STATE
        self.nw = 4 if self.phasing else 3
        self.nwe = self.nw
        self.nwp = self.nw

        b_e = np.zeros((N_STATE, self.nw))
        b_e[3:6, 0:3] = self.k_e * np.eye(3)
        b_p = np.zeros((N_STATE, self.nw))
        b_p[9:12, 0:3] = self.k_p * np.eye(3)
        if self.phasing:
            b_e[PHASE_E, 3] = 1.0
            b_p[PHASE_P, 3] = 1.0
        self.b_e = b_e
        self.b_p = b_p

        w = self.weights
        if self.phasing:
            self.hess_we = np.block([
                [2.0 * w.r_e, np.zeros((3, 1))],
                [np.zeros((1, 3)), 2.0 * w.a_e * np.ones((1, 1))],
            ])
            self.hess_wp = np.block([
                [-2.0 * w.r_p, np.zeros((3, 1))],
                [np.zeros((1, 3)), -2.0 * w.a_p * np.ones((1, 1))],
            ])
        else:
            self.hess_we = 2.0 * w.r_e
            self.hess_wp = -2.0 * w.r_p

    # -- reference sampling helpers ------------------------------------

    def reference_state(self, phase: float) -> np.ndarray:
        o = self.orbit
        return _quintic_eval(phase, o.period, o.table_step, o.table_ys, o.table_fs, o.table_gs)

    def _unstable_direction(self, phase: float) -> np.ndarray:
        m = self.manifold
        s = float(phase) % self.orbit.period
        vec = _hermite_matrix_eval(s, m.node_ts, m.node_stms, m.node_dstms) @ m.unstable_direction0
        return vec / np.linalg.norm(vec)

    def tracking_weights(self, phase_e: float, phase_p: float, terminal: bool = False):
        """Shaped (Q_e, Q_p) or (F_e, F_p) at the given phases."""
        w = self.weights
        if terminal:
            qe0, sqe, qp0, sqp = w.f_e0, w.sqrt_f_e0, w.f_p0, w.sqrt_f_p0
        else:
            qe0, sqe, qp0, sqp = w.q_e0, w.sqrt_q_e0, w.q_p0, w.sqrt_q_p0
        if w.alpha_e < 1.0:
            qe = _shaped_weight(qe0, sqe, w.alpha_e, self._unstable_direction(phase_e))
        else:
            qe = qe0
        if w.alpha_p < 1.0:
            qp = _shaped_weight(qp0, sqp, w.alpha_p, self._unstable_direction(phase_p))
        else:
            qp = qp0
        return qe, qp

    # -- dynamics -------------------------------------------------------

    def dynamics(self, t: float, x: np.ndarray, we: np.ndarray, wp: np.ndarray) -> np.ndarray:
        mu = self.params.mu
        out = np.empty(N_STATE)
        out[EVADER] = dynamics._rhs(
            x[EVADER], mu, self.k_e * we[0], self.k_e * we[1], self.k_e * we[2]
        )
        out[PURSUER] = dynamics._rhs(
            x[PURSUER], mu, self.k_p * wp[0], self.k_p * wp[1], self.k_p * wp[2]
        )
        if self.phasing:
            out[PHASE_E] = we[3]
            out[PHASE_P] = wp[3]
        else:
            out[PHASE_E] = 1.0
            out[PHASE_P] = 1.0
        return out

    def jac_x(self, t: float, x: np.ndarray) -> np.ndarray:
        mu = self.params.mu
        out = np.zeros((N_STATE, N_STATE))
        out[EVADER, EVADER] = dynamics._jacobian(x[EVADER], mu)
        out[PURSUER, PURSUER] = dynamics._jacobian(x[PURSUER], mu)
        return out

    # -- costs ----------------------------------------------------------

    def _tracking_errors(self, x: np.ndarray):
        dxe = x[EVADER] - self.reference_state(x[PHASE_E])
        dxp = x[PURSUER] - self.reference_state(x[PHASE_P])
        return dxe, dxp

    def running_cost(self, t: float, x: np.ndarray, we: np.ndarray, wp: np.ndarray) -> float:
        w = self.weights
        qe, qp = self.tracking_weights(x[PHASE_E], x[PHASE_P])
        dxe, dxp = self._tracking_errors(x)
        d = float(np.linalg.norm(x[0:3] - x[6:9]))
        s, _, _ = proximity_penalty(d, w.proximity_weight, w.p_exp, w.d0)
        val = float(dxe @ qe @ dxe - dxp @ qp @ dxp + s)
        val += float(we[:3] @ w.r_e @ we[:3] - wp[:3] @ w.r_p @ wp[:3])
        if self.phasing:
            val += w.a_e * (we[3] - 1.0) ** 2 - w.a_p * (wp[3] - 1.0) ** 2
        return val

    def terminal_cost(self, t: float, x: np.ndarray) -> float:
        w = self.weights
        fe, fp = self.tracking_weights(x[PHASE_E], x[PHASE_P], terminal=True)
        dxe, dxp = self._tracking_errors(x)
        d = float(np.linalg.norm(x[0:3] - x[6:9]))
        s, _, _ = proximity_penalty(d, w.proximity_weight, w.p_exp, w.d0)
        return float(dxe @ fe @ dxe - dxp @ fp @ dxp + s)

    def _state_cost_derivs(self, x: np.ndarray, qe: np.ndarray, qp: np.ndarray):
        """Gradient and Hessian of the state-dependent cost terms.

        Shaped weights are frozen at the evaluation phases; the reference
        point x_d(c) is differentiated exactly through its phase, using
        x_d' = f(x_d) and x_d'' = A(x_d) f(x_d).
        """
        mu = self.params.mu
        dxe, dxp = self._tracking_errors(x)
        xde = self.reference_state(x[PHASE_E])
        xdp = self.reference_state(x[PHASE_P])
        fde = dynamics._rhs(xde, mu, 0.0, 0.0, 0.0)
        fdp = dynamics._rhs(xdp, mu, 0.0, 0.0, 0.0)
        gde = dynamics._jacobian(xde, mu) @ fde
        gdp = dynamics._jacobian(xdp, mu) @ fdp

        gx = np.zeros(N_STATE)
        hx = np.zeros((N_STATE, N_STATE))

        qe_dxe = qe @ dxe
        qp_dxp = qp @ dxp
        gx[EVADER] = 2.0 * qe_dxe
        gx[PURSUER] = -2.0 * qp_dxp
        gx[PHASE_E] = -2.0 * (qe_dxe @ fde)
        gx[PHASE_P] = 2.0 * (qp_dxp @ fdp)

        hx[EVADER, EVADER] = 2.0 * qe
        hx[PURSUER, PURSUER] = -2.0 * qp
        qefde = qe @ fde
        qpfdp = qp @ fdp
        hx[0:6, PHASE_E] = -2.0 * qefde
        hx[PHASE_E, 0:6] = -2.0 * qefde
        hx[6:12, PHASE_P] = 2.0 * qpfdp
        hx[PHASE_P, 6:12] = 2.0 * qpfdp
        hx[PHASE_E, PHASE_E] = 2.0 * (fde @ qefde) - 2.0 * (qe_dxe @ gde)
        hx[PHASE_P, PHASE_P] = -2.0 * (fdp @ qpfdp) + 2.0 * (qp_dxp @ gdp)

        # Proximity terms couple the two position blocks.
        w = self.weights
        rel = x[0:3] - x[6:9]
        d = float(np.linalg.norm(rel))
        s, ds, dss = proximity_penalty(d, w.proximity_weight, w.p_exp, w.d0)
        if ds != 0.0 and d > 1e-12:
            n = rel / d
            gx[0:3] += ds * n
            gx[6:9] -= ds * n
            nn = np.outer(n, n)
            hblock = dss * nn + (ds / d) * (np.eye(3) - nn)
            hx[0:3, 0:3] += hblock
            hx[6:9, 6:9] += hblock
            hx[0:3, 6:9] -= hblock
            hx[6:9, 0:3] -= hblock
        return gx, hx

    def running_cost_state_derivs(self, t: float, x: np.ndarray):
        """(L_x, L_xx) at a state; controls enter L separably."""
        qe, qp = self.tracking_weights(x[PHASE_E], x[PHASE_P])
        return self._state_cost_derivs(x, qe, qp)

    def running_cost_with_state_derivs(self, t: float, x: np.ndarray, we: np.ndarray, wp: np.ndarray):
        """(L, L_x, L_xx) sharing one reference/weight evaluation."""
        w = self.weights
        qe, qp = self.tracking_weights(x[PHASE_E], x[PHASE_P])
        gx, hx = self._state_cost_derivs(x, qe, qp)
        dxe, dxp = self._tracking_errors(x)
        d = float(np.linalg.norm(x[0:3] - x[6:9]))
        s, _, _ = proximity_penalty(d, w.proximity_weight, w.p_exp, w.d0)
        val = float(dxe @ qe @ dxe - dxp @ qp @ dxp + s)
        val += float(we[:3] @ w.r_e @ we[:3] - wp[:3] @ w.r_p @ wp[:3])
        if self.phasing:
            val += w.a_e * (we[3] - 1.0) ** 2 - w.a_p * (wp[3] - 1.0) ** 2
        return val, gx, hx

    def natural_control(self) -> np.ndarray:
        """Coasting control: zero thrust, unit phase rate."""
        return np.array([0.0, 0.0, 0.0, 1.0])[: self.nw]

    def control_cost_grads(self, we: np.ndarray, wp: np.ndarray):
        """(L_we, L_wp); the corresponding Hessians are constant attributes."""
        w = self.weights
        ge = np.empty(self.nw)
        gp = np.empty(self.nw)
        ge[:3] = 2.0 * w.r_e @ we[:3]
        gp[:3] = -2.0 * w.r_p @ wp[:3]
        if self.phasing:
            ge[3] = 2.0 * w.a_e * (we[3] - 1.0)
            gp[3] = -2.0 * w.a_p * (wp[3] - 1.0)
        return ge, gp

    def terminal_cost_derivs(self, t: float, x: np.ndarray):
        """(phi, phi_x, phi_xx) at the rollout endpoint."""
        fe, fp = self.tracking_weights(x[PHASE_E], x[PHASE_P], terminal=True)
        gx, hx = self._state_cost_derivs(x, fe, fp)
        return self.terminal_cost(t, x), gx, hx
