"""Rotating-frame circular restricted three-body dynamics.

State convention everywhere: ``[x, y, z, vx, vy, vz]`` in the barycentric
rotating frame, nondimensional units.  The larger primary sits at
``(-mu, 0, 0)``, the smaller at ``(1 - mu, 0, 0)``.

The hot kernels (acceleration, Jacobian, variational equations) are
compiled with numba; public wrappers validate shapes and translate the
singularity guard into package exceptions.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import SingularStateError
from .params import SINGULARITY_GUARD, SystemParams


@njit(cache=True)
def _rhs(state, mu, ax, ay, az):
    """Equations of motion with an extra externally supplied acceleration."""
    x, y, z, vx, vy, vz = state
    dxe = x + mu
    dxm = x - 1.0 + mu
    re2 = dxe * dxe + y * y + z * z
    rm2 = dxm * dxm + y * y + z * z
    re = np.sqrt(re2)
    rm = np.sqrt(rm2)
    if re < SINGULARITY_GUARD or rm < SINGULARITY_GUARD:
        raise SingularStateError("state inside singularity guard radius of a primary")
    re3 = re2 * re
    rm3 = rm2 * rm
    ue = 1.0 - mu
    out = np.empty(6)
    out[0] = vx
    out[1] = vy
    out[2] = vz
    out[3] = 2.0 * vy + x - ue * dxe / re3 - mu * dxm / rm3 + ax
    out[4] = -2.0 * vx + y - ue * y / re3 - mu * y / rm3 + ay
    out[5] = -ue * z / re3 - mu * z / rm3 + az
    return out


@njit(cache=True)
def _jacobian(state, mu):
    """6x6 Jacobian of the natural vector field at a state."""
    x, y, z = state[0], state[1], state[2]
    dxe = x + mu
    dxm = x - 1.0 + mu
    re2 = dxe * dxe + y * y + z * z
    rm2 = dxm * dxm + y * y + z * z
    re = np.sqrt(re2)
    rm = np.sqrt(rm2)
    if re < SINGULARITY_GUARD or rm < SINGULARITY_GUARD:
        raise SingularStateError("state inside singularity guard radius of a primary")
    re3 = re2 * re
    rm3 = rm2 * rm
    re5 = re3 * re2
    rm5 = rm3 * rm2
    ue = 1.0 - mu

    # Hessian of the effective potential (gravity gradient plus centrifugal).
    uxx = 1.0 - ue / re3 + 3.0 * ue * dxe * dxe / re5 - mu / rm3 + 3.0 * mu * dxm * dxm / rm5
    uyy = 1.0 - ue / re3 + 3.0 * ue * y * y / re5 - mu / rm3 + 3.0 * mu * y * y / rm5
    uzz = -ue / re3 + 3.0 * ue * z * z / re5 - mu / rm3 + 3.0 * mu * z * z / rm5
    uxy = 3.0 * ue * dxe * y / re5 + 3.0 * mu * dxm * y / rm5
    uxz = 3.0 * ue * dxe * z / re5 + 3.0 * mu * dxm * z / rm5
    uyz = 3.0 * ue * y * z / re5 + 3.0 * mu * y * z / rm5

    jac = np.zeros((6, 6))
    jac[0, 3] = 1.0
    jac[1, 4] = 1.0
    jac[2, 5] = 1.0
    jac[3, 0] = uxx
    jac[3, 1] = uxy
    jac[3, 2] = uxz
    jac[4, 0] = uxy
    jac[4, 1] = uyy
    jac[4, 2] = uyz
    jac[5, 0] = uxz
    jac[5, 1] = uyz
    jac[5, 2] = uzz
    jac[3, 4] = 2.0
    jac[4, 3] = -2.0
    return jac


@njit(cache=True)
def _variational_rhs(aug, mu):
    """RHS of state + state transition matrix, packed as 6 + 36 rows."""
    out = np.empty(42)
    state = aug[:6]
    out[:6] = _rhs(state, mu, 0.0, 0.0, 0.0)
    jac = _jacobian(state, mu)
    phi = aug[6:].reshape((6, 6))
    out[6:] = (jac @ phi).ravel()
    return out


def cr3bp_vector_field(t: float, state: np.ndarray, params: SystemParams) -> np.ndarray:
    """Natural (thrust-free) equations of motion, solve_ivp signature."""
    return _rhs(np.asarray(state, dtype=float), params.mu, 0.0, 0.0, 0.0)


def controlled_vector_field(
    t: float,
    state: np.ndarray,
    thrust_n: np.ndarray,
    mass_kg: float,
    params: SystemParams,
) -> np.ndarray:
    """Equations of motion with a thrust given in Newtons.

    The thrust vector is expressed in rotating-frame axes and converted to
    nondimensional acceleration through the spacecraft mass and the system
    unit scales.
    """
    k = params.thrust_to_accel(mass_kg)
    u = np.asarray(thrust_n, dtype=float)
    return _rhs(np.asarray(state, dtype=float), params.mu, k * u[0], k * u[1], k * u[2])


def cr3bp_jacobian(state: np.ndarray, params: SystemParams) -> np.ndarray:
    """Analytic Jacobian of the natural vector field.

    The thrust enters the dynamics additively through the velocity rows, so
    this matrix is also the state Jacobian of the controlled field.
    """
    return _jacobian(np.asarray(state, dtype=float), params.mu)


def variational_vector_field(t: float, aug: np.ndarray, params: SystemParams) -> np.ndarray:
    """Natural dynamics together with the state transition matrix.

    ``aug`` holds the 6-state followed by the row-major flattened 6x6 STM.
    """
    return _variational_rhs(np.asarray(aug, dtype=float), params.mu)


def primary_distances(state: np.ndarray, params: SystemParams) -> tuple[float, float]:
    """Distances to the larger and smaller primary."""
    x, y, z = state[0], state[1], state[2]
    re = float(np.sqrt((x + params.mu) ** 2 + y**2 + z**2))
    rm = float(np.sqrt((x - 1.0 + params.mu) ** 2 + y**2 + z**2))
    return re, rm


def jacobi_constant(state: np.ndarray, params: SystemParams) -> float:
    """Jacobi integral of a state; conserved along natural motion."""
    state = np.asarray(state, dtype=float)
    x, y = state[0], state[1]
    re, rm = primary_distances(state, params)
    if re < SINGULARITY_GUARD or rm < SINGULARITY_GUARD:
        raise SingularStateError("state inside singularity guard radius of a primary")
    v2 = float(state[3] ** 2 + state[4] ** 2 + state[5] ** 2)
    return x**2 + y**2 + 2.0 * (1.0 - params.mu) / re + 2.0 * params.mu / rm - v2


def _collinear_residual(x: float, mu: float) -> float:
    # x-axis force balance; sign-correct on either side of both primaries.
    dxe = x + mu
    dxm = x - 1.0 + mu
    return x - (1.0 - mu) * dxe / abs(dxe) ** 3 - mu * dxm / abs(dxm) ** 3


def lagrange_points(params: SystemParams) -> np.ndarray:
    """All five equilibrium points as a (5, 3) array, ordered L1..L5.

    Collinear points are found by bracketed root solving of the x-axis
    force balance to near machine precision; the triangular points are
    closed-form.
    """
    mu = params.mu
    eps = 1e-9
    l1 = brentq(_collinear_residual, -mu + eps, 1.0 - mu - eps, args=(mu,), xtol=1e-15, rtol=8.9e-16)
    l2 = brentq(_collinear_residual, 1.0 - mu + eps, 2.5, args=(mu,), xtol=1e-15, rtol=8.9e-16)
    l3 = brentq(_collinear_residual, -2.5, -mu - eps, args=(mu,), xtol=1e-15, rtol=8.9e-16)
    pts = np.zeros((5, 3))
    pts[0, 0] = l1
    pts[1, 0] = l2
    pts[2, 0] = l3
    pts[3] = [0.5 - mu, np.sqrt(3.0) / 2.0, 0.0]
    pts[4] = [0.5 - mu, -np.sqrt(3.0) / 2.0, 0.0]
    return pts
