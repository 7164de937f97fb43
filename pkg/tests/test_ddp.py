"""Saddle-point DDP solver checks.

The main oracle is exactness on a linear-quadratic game: there the
backward sweep integrates the game Riccati equation, so one outer
iteration reaches the saddle and the value expansion, feedback gains and
saddle cost must match the dedicated Riccati solver to tight tolerance.
The engagement problem is used only to exercise the regularisation
ladder, which never activates on the benign LQ instance.
"""

import numpy as np
import pytest

from cislunargame import (
    EngagementProblem,
    SaddleSolver,
    SolverSettings,
    solve_lq_game,
)
from cislunargame.ddp import solve_to_convergence
from cislunargame.errors import SolverError
from cislunargame.lqgame import (
    LqGameProblem,
    assemble_lq_matrices,
    assemble_stage_weight,
)
from cislunargame import dynamics

from test_game import make_weights

R_E = 0.025 * np.eye(3)
R_P = 0.05 * np.eye(3)
Q6 = 5.0 * np.eye(6)
M3 = 2.0 * np.eye(3)


def lq_problem(orbit):
    """12-state pursuit-evasion LQ game relative to the moving reference."""
    b_e, b_p, qq = assemble_lq_matrices(Q6, Q6, M3, 1000.0, 1000.0, orbit.params)
    qq_f = assemble_stage_weight(Q6, Q6, M3)

    def a_fn(t):
        a6 = dynamics._jacobian(orbit.sample(t), orbit.params.mu)
        a = np.zeros((12, 12))
        a[:6, :6] = a6
        a[6:, 6:] = a6
        return a

    return LqGameProblem(a_fn, b_e, b_p, qq, qq_f, R_E, R_P), b_e, b_p


def lq_initial_state():
    dx0 = np.zeros(12)
    dx0[0:3] = np.array([150.0, -80.0, 40.0]) / 384400.0  # km -> nd
    dx0[3:6] = [2e-4, -1e-4, 5e-5]
    return dx0


@pytest.fixture(scope="module")
def lq_saddle(orbit):
    """DDP and Riccati solutions of the same LQ game over one period."""
    prob, b_e, b_p = lq_problem(orbit)
    settings = SolverSettings(grid_nodes=2048)
    res = SaddleSolver(prob, settings).solve(lq_initial_state(), (0.0, orbit.period))
    lq = solve_lq_game(
        orbit, 0.0, (0.0, orbit.period),
        Q6, Q6, Q6, Q6, M3, M3, R_E, R_P, 1000.0, 1000.0,
    )
    return prob, settings, res, lq, b_e, b_p


def test_lq_game_converges_in_few_iterations(lq_saddle):
    _, _, res, _, _, _ = lq_saddle
    assert res.report.converged
    assert res.report.iterations <= 3
    assert all(lam == 0.0 for lam in res.report.lambdas)  # no damping needed
    assert res.report.sweep_retries == 0


def test_lq_value_expansion_matches_riccati(lq_saddle):
    _, _, res, lq, _, _ = lq_saddle
    dx0 = lq_initial_state()
    s0 = lq.riccati.at(0.0)
    v0, vx0, vxx0 = res.value.at_start()
    assert np.linalg.norm(vxx0 / 2.0 - s0) / np.linalg.norm(s0) <= 1e-6
    assert np.linalg.norm(vx0 - 2.0 * s0 @ dx0) / np.linalg.norm(2.0 * s0 @ dx0) <= 1e-5
    assert v0 == pytest.approx(dx0 @ s0 @ dx0, rel=5e-6)
    assert res.cost == pytest.approx(dx0 @ s0 @ dx0, rel=5e-6)


def test_lq_feedback_gains_match_riccati(lq_saddle):
    _, _, res, lq, b_e, b_p = lq_saddle
    for i in (0, 512, 1024, 1536, 2048):
        t = res.grid[i]
        s = lq.riccati.at(t)
        gain_e = -np.linalg.solve(R_E, b_e.T @ s)
        gain_p = np.linalg.solve(R_P, b_p.T @ s)
        assert np.linalg.norm(res.fb_e[i] - gain_e) <= 1e-6 * np.linalg.norm(gain_e)
        assert np.linalg.norm(res.fb_p[i] - gain_p) <= 1e-6 * np.linalg.norm(gain_p)


def test_terminal_expansion_is_exact(lq_saddle):
    prob, _, res, _, _, _ = lq_saddle
    xf = res.nominal.at(res.tf)
    phi, phix, phixx = prob.terminal_cost_derivs(res.tf, xf)
    assert res.value.v[-1] == pytest.approx(phi, abs=1e-12)
    assert np.allclose(res.value.v_x[-1], phix, atol=1e-10)
    assert np.allclose(res.value.v_xx[-1], phixx, atol=1e-10)


def test_converged_tables_are_stationary(lq_saddle, orbit):
    # re-measuring the converged tables must reproduce convergence at once
    prob, settings, res, _, _, _ = lq_saddle
    again = SaddleSolver(prob, settings).solve(
        lq_initial_state(), (0.0, orbit.period),
        we0=res.controls_e, wp0=res.controls_p,
    )
    assert again.report.iterations == 1
    assert again.report.update_norms[0] <= settings.epsilon


def test_policy_and_control_lookup(lq_saddle):
    _, _, res, _, _, _ = lq_saddle
    i = 700
    assert np.allclose(res.control_at(res.grid[i], "e"), res.controls_e[i])
    assert np.allclose(res.control_at(res.grid[i], "p"), res.controls_p[i])
    we, wp = res.policy_at(res.t0, res.nominal.at(res.t0))
    assert np.allclose(we, res.controls_e[0] + res.ff_e[0], atol=1e-12)
    assert np.allclose(wp, res.controls_p[0] + res.ff_p[0], atol=1e-12)
    # beyond the horizon the lookup clamps instead of extrapolating
    we_end, _ = res.policy_at(res.tf + 1.0, res.nominal.at(res.tf))
    assert np.allclose(we_end, res.controls_e[-1] + res.ff_e[-1], atol=1e-12)


def test_zero_initial_state_is_a_fixed_point(orbit):
    prob, _, _ = lq_problem(orbit)
    res = SaddleSolver(prob, SolverSettings(grid_nodes=256)).solve(
        np.zeros(12), (0.0, 0.5 * orbit.period)
    )
    assert res.report.converged
    assert res.report.iterations == 1
    assert res.report.update_norms[0] == 0.0
    assert res.cost == 0.0


def test_warm_restart_chain_reaches_convergence(orbit):
    # an iteration cap forces a premature stop; restarting from the
    # returned tables must finish the job and say how many rounds it took
    prob, _, _ = lq_problem(orbit)
    settings = SolverSettings(grid_nodes=512, max_iterations=2)
    res = solve_to_convergence(
        prob, settings, lq_initial_state(), (0.0, orbit.period), max_restarts=4
    )
    assert res.report.converged
    assert "warm restart" in res.report.message
    assert all(lam == 0.0 for lam in res.report.lambdas)


def test_regularisation_ladder_on_hard_cold_start(orbit):
    # natural-control nominal with both craft near proximity activation:
    # the undamped sweep escapes in finite time and the solver must walk
    # the geometric ladder until the sweep stabilises
    prob = EngagementProblem(orbit, make_weights(), 1000.0, 1000.0)
    x0 = np.concatenate([orbit.sample(0.001), orbit.sample(0.0), [0.001, 0.0]])
    seed, factor = 300.0, 3.0
    settings = SolverSettings(
        grid_nodes=64, max_iterations=1, lambda_seed=seed, lambda_factor=factor
    )
    res = SaddleSolver(prob, settings).solve(x0, (0.0, orbit.period), lambda0=0.0)
    assert res.report.sweep_retries >= 1
    for lam in res.report.lambdas:
        if lam > 0.0:
            k = np.log(lam / seed) / np.log(factor)
            assert abs(k - round(k)) <= 1e-9  # exact ladder member


def test_unstabilisable_sweep_raises(orbit):
    prob = EngagementProblem(orbit, make_weights(), 1000.0, 1000.0)
    x0 = np.concatenate([orbit.sample(0.001), orbit.sample(0.0), [0.001, 0.0]])
    settings = SolverSettings(grid_nodes=64, max_iterations=1, lambda_max=1e-6)
    with pytest.raises(SolverError, match="lambda_max"):
        SaddleSolver(prob, settings).solve(x0, (0.0, orbit.period), lambda0=0.0)


def test_solve_input_validation(orbit):
    prob, _, _ = lq_problem(orbit)
    solver = SaddleSolver(prob, SolverSettings(grid_nodes=64))
    with pytest.raises(ValueError, match="horizon"):
        solver.solve(np.zeros(12), (1.0, 1.0))
    with pytest.raises(ValueError, match="grid"):
        solver.solve(np.zeros(12), (0.0, 1.0), we0=np.zeros((10, 3)))


def test_settings_validation():
    with pytest.raises(ValueError, match="epsilon"):
        SolverSettings(epsilon=0.0)
    with pytest.raises(ValueError, match="max_iterations"):
        SolverSettings(max_iterations=0)
    with pytest.raises(ValueError, match="gamma"):
        SolverSettings(gamma_ladder=(1.0, 0.0))
    with pytest.raises(ValueError, match="lambda_factor"):
        SolverSettings(lambda_factor=1.0)
    with pytest.raises(ValueError, match="grid_nodes"):
        SolverSettings(grid_nodes=1)
