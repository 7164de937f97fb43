"""Dynamics-level checks: conservation, analytic Jacobian, equilibria."""

import numpy as np
import pytest

from cislunargame import dynamics
from cislunargame.errors import SingularStateError
from cislunargame.integrate import propagate
from cislunargame.params import EARTH_MOON

from conftest import NRHO_PERIOD, NRHO_STATE


def test_jacobi_drift_over_one_orbit_period():
    traj = propagate(NRHO_STATE, (0.0, NRHO_PERIOD), EARTH_MOON, rtol=1e-12, atol=1e-12)
    c0 = dynamics.jacobi_constant(NRHO_STATE, EARTH_MOON)
    drift = max(
        abs(dynamics.jacobi_constant(traj.at(t), EARTH_MOON) - c0)
        for t in np.linspace(0.0, NRHO_PERIOD, 400)
    )
    assert drift <= 1e-10


def _random_states(n, rng):
    """States spread over cislunar space, clear of both primaries."""
    mu = EARTH_MOON.mu
    states = []
    while len(states) < n:
        pos = rng.uniform(-1.5, 1.5, 3)
        re = np.linalg.norm(pos - [-mu, 0, 0])
        rm = np.linalg.norm(pos - [1 - mu, 0, 0])
        if re < 0.05 or rm < 0.05:
            continue
        vel = rng.uniform(-1.0, 1.0, 3)
        states.append(np.concatenate([pos, vel]))
    return states


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-6
    for state in _random_states(100, rng):
        jac = dynamics.cr3bp_jacobian(state, EARTH_MOON)
        fd = np.empty((6, 6))
        for j in range(6):
            dp = state.copy()
            dm = state.copy()
            dp[j] += h
            dm[j] -= h
            fd[:, j] = (
                dynamics.cr3bp_vector_field(0.0, dp, EARTH_MOON)
                - dynamics.cr3bp_vector_field(0.0, dm, EARTH_MOON)
            ) / (2.0 * h)
        scale = max(1.0, float(np.max(np.abs(jac))))
        assert np.max(np.abs(fd - jac)) / scale <= 1e-6


def test_lagrange_points_are_equilibria():
    pts = dynamics.lagrange_points(EARTH_MOON)
    assert pts.shape == (5, 3)
    for pos in pts:
        state = np.concatenate([pos, np.zeros(3)])
        assert np.max(np.abs(dynamics.cr3bp_vector_field(0.0, state, EARTH_MOON))) <= 1e-12
    mu = EARTH_MOON.mu
    # L1 between the primaries, L2 beyond the secondary, L3 opposite.
    assert -mu < pts[0, 0] < 1.0 - mu
    assert pts[1, 0] > 1.0 - mu
    assert pts[2, 0] < -mu
    assert pts[3, 1] > 0.0 > pts[4, 1]


def test_jacobi_constant_at_triangular_points():
    # Closed form at L4/L5: both primary distances are exactly one.
    mu = EARTH_MOON.mu
    expected = 3.0 - mu + mu * mu
    pts = dynamics.lagrange_points(EARTH_MOON)
    for pos in pts[3:]:
        state = np.concatenate([pos, np.zeros(3)])
        assert dynamics.jacobi_constant(state, EARTH_MOON) == pytest.approx(expected, abs=1e-12)


def test_singularity_guard_trips():
    state = np.array([1.0 - EARTH_MOON.mu, 0.0, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(SingularStateError):
        dynamics.jacobi_constant(state, EARTH_MOON)


def test_thrust_enters_velocity_rows_only():
    state = NRHO_STATE.copy()
    nat = dynamics.cr3bp_vector_field(0.0, state, EARTH_MOON)
    thrust = np.array([0.2, -0.1, 0.05])
    forced = dynamics.controlled_vector_field(0.0, state, thrust, 1000.0, EARTH_MOON)
    k = EARTH_MOON.thrust_to_accel(1000.0)
    assert np.allclose(forced[:3], nat[:3], rtol=0, atol=0)
    assert np.allclose(forced[3:6] - nat[3:6], k * thrust, rtol=1e-14, atol=1e-16)
