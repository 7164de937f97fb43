"""End-to-end CLI checks: exit codes, JSON summaries, file artifacts.

Subcommands run in-process through ``main(argv)`` with pytest capturing
stdout; each summary line must parse as JSON.  Simulation configs here
are shrunk (coarse grid, short duration) so the whole module stays fast.
"""

import json

import numpy as np
import pytest

from cislunargame.cli import main as cli_main
from cislunargame.mpc import LOG_COLUMNS

from conftest import CONFIG_DIR


def run_cli(argv, capsys):
    code = cli_main(argv)
    captured = capsys.readouterr()
    lines = [ln for ln in captured.out.strip().splitlines() if ln]
    summary = json.loads(lines[-1]) if code == 0 else None
    return code, summary


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    with open(CONFIG_DIR / "quick_demo.json", encoding="utf-8") as fh:
        base = json.load(fh)
    base["engagement"]["duration_nd"] = 0.0734
    base["solver"]["grid_nodes"] = 100
    base["solver"]["max_iterations"] = 3
    path = tmp_path_factory.mktemp("cli") / "micro.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(base, fh)
    return path


def test_help_and_version_exit_zero(capsys):
    for argv in (["--help"], ["--version"], ["simulate", "--help"]):
        with pytest.raises(SystemExit) as exc:
            cli_main(argv)
        assert exc.value.code == 0
        capsys.readouterr()


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli_main([])
    assert exc.value.code == 2
    capsys.readouterr()


def test_propagate_conserves_jacobi_at_l1(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code, summary = run_cli(
        ["propagate", "--config", str(CONFIG_DIR / "nrho_engagement.json"),
         "--state", "L1", "--tf", "1.0", "--out", str(out), "--samples", "50"],
        capsys,
    )
    assert code == 0
    assert summary["jacobi_drift"] <= 1e-10  # equilibrium: exact conservation
    assert summary["rows"] == 50
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x,y,z,vx,vy,vz,jacobi"
    assert len(lines) == 51


def test_propagate_custom_state(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, summary = run_cli(
        ["propagate", "--config", str(CONFIG_DIR / "quick_demo.json"),
         "--state", "1.05,0,0,0,0.35,0", "--tf", "0.5", "--out", str(out),
         "--samples", "20"],
        capsys,
    )
    assert code == 0
    assert summary["jacobi_drift"] <= 1e-9
    assert out.exists()


def test_propagate_usage_errors(tmp_path, capsys):
    cfg = str(CONFIG_DIR / "quick_demo.json")
    bad = [
        ["propagate", "--config", str(tmp_path / "nope.json"),
         "--state", "L1", "--tf", "1.0", "--out", str(tmp_path / "x.csv")],
        ["propagate", "--config", cfg, "--state", "L1", "--tf", "0.0",
         "--out", str(tmp_path / "x.csv")],
        ["propagate", "--config", cfg, "--state", "1,2,3", "--tf", "1.0",
         "--out", str(tmp_path / "x.csv")],
        ["propagate", "--config", cfg, "--state", "a,b,c,d,e,f", "--tf", "1.0",
         "--out", str(tmp_path / "x.csv")],
    ]
    for argv in bad:
        code, _ = run_cli(argv, capsys)
        assert code == 2, argv


def test_orbit_reports_frozen_spectrum(tmp_path, capsys):
    export = tmp_path / "manifold.csv"
    code, summary = run_cli(
        ["orbit", "--config", str(CONFIG_DIR / "quick_demo.json"),
         "--export", str(export), "--samples", "30"],
        capsys,
    )
    assert code == 0
    assert summary["period_nd"] == pytest.approx(1.466695, abs=1e-12)
    assert summary["period_days"] == pytest.approx(6.369, abs=2e-3)
    assert summary["closure_residual"] <= 1e-9
    assert summary["unstable_multiplier"] == pytest.approx(-1.9335438448, abs=1e-6)
    assert summary["monodromy_det_error"] <= 1e-6
    lines = export.read_text().splitlines()
    assert lines[0].split(",") == (
        ["t", "x", "y", "z", "vx", "vy", "vz"]
        + [f"eu{i}" for i in range(1, 7)]
        + [f"es{i}" for i in range(1, 7)]
    )
    assert len(lines) == 31


def test_orbit_rejects_nonperiodic_seed(tmp_path, capsys):
    with open(CONFIG_DIR / "quick_demo.json", encoding="utf-8") as fh:
        cfg = json.load(fh)
    cfg["orbit"]["state_nd"][4] += 1e-3  # breaks closure beyond tolerance
    path = tmp_path / "broken.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh)
    code, _ = run_cli(["orbit", "--config", str(path)], capsys)
    assert code == 3  # numerical failure, not a usage error


def test_baseline_conjugate_fallback_and_symmetry(tmp_path, capsys):
    out = tmp_path / "gains.json"
    code, summary = run_cli(
        ["baseline", "--config", str(CONFIG_DIR / "quick_demo.json"),
         "--out", str(out), "--samples", "40"],
        capsys,
    )
    assert code == 0
    assert summary["mode"] == "pursuit"
    # full-period pursuit at weight 100 hits a conjugate point; half survives
    assert summary["pursuit_weight_used"] == 50.0
    assert summary["symmetric"] is True
    assert len(summary["s0_eigenvalues"]) == 12
    assert summary["s0_eigenvalues"] == sorted(summary["s0_eigenvalues"])
    with open(out, encoding="utf-8") as fh:
        report = json.load(fh)
    assert len(report["gain_times_nd"]) == 40
    assert np.asarray(report["gains_p"]).shape == (40, 3, 12)
    assert np.asarray(report["s0"]).shape == (12, 12)


@pytest.fixture(scope="module")
def micro_run(micro_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "main"
    code = cli_main(["simulate", "--config", str(micro_config), "--out", str(out)])
    assert code == 0
    return out


def test_simulate_writes_artifacts(micro_run, capsys):
    capsys.readouterr()
    assert (micro_run / "log.csv").exists()
    assert (micro_run / "log.json").exists()
    header = (micro_run / "log.csv").read_text().splitlines()[0]
    assert header.split(",") == list(LOG_COLUMNS)


def test_simulate_summary_fields(micro_config, tmp_path, capsys):
    code, summary = run_cli(
        ["simulate", "--config", str(micro_config), "--out", str(tmp_path / "r"),
         "--opponent", "none"],
        capsys,
    )
    assert code == 0
    assert summary["command"] == "simulate"
    assert summary["opponent"] == "none"
    assert summary["aborted"] is False
    assert summary["replans"] == 1
    assert summary["rows"] >= 2
    assert summary["min_separation_km"] > 0.0


def test_simulate_batch_fans_out(micro_config, tmp_path, capsys):
    other = tmp_path / "other.json"
    other.write_text(micro_config.read_text(), encoding="utf-8")
    code, summary = run_cli(
        ["simulate", "--config", str(micro_config), "--config", str(other),
         "--out", str(tmp_path / "batch"), "--jobs", "1"],
        capsys,
    )
    assert code == 0
    assert summary["batch"] is True
    assert len(summary["runs"]) == 2
    assert (tmp_path / "batch" / "micro" / "log.csv").exists()
    assert (tmp_path / "batch" / "other" / "log.csv").exists()


def test_simulate_usage_errors(micro_config, tmp_path, capsys):
    code, _ = run_cli(
        ["simulate", "--config", str(tmp_path / "missing.json"),
         "--out", str(tmp_path / "x")],
        capsys,
    )
    assert code == 2
    with pytest.raises(SystemExit) as exc:  # argparse rejects unknown choices
        cli_main(["simulate", "--config", str(micro_config),
                  "--out", str(tmp_path / "x"), "--ablate", "bogus"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_solve_game_writes_solution(micro_config, tmp_path, capsys):
    out = tmp_path / "game"
    code, summary = run_cli(
        ["solve-game", "--config", str(micro_config), "--out", str(out)], capsys
    )
    assert code == 0
    assert np.isfinite(summary["cost"])
    assert summary["report"]["iterations"] >= 1
    with open(out / "solution.json", encoding="utf-8") as fh:
        sol = json.load(fh)
    n = len(sol["grid"])
    assert n == 101  # grid_nodes + 1
    assert np.asarray(sol["controls_e"]).shape == (n, 4)
    assert np.asarray(sol["feedback_p"]).shape == (n, 4, 14)
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert len(lines) == n + 1
    assert lines[0].count(",") == 14  # t + 12 states + 2 phases


def test_plot_data_slices_run(micro_run, tmp_path, capsys):
    figs = tmp_path / "figs"
    code, summary = run_cli(
        ["plot-data", "--main", str(micro_run), "--out", str(figs)], capsys
    )
    assert code == 0
    assert summary["written"] == [
        "fig3_tracking.csv", "fig4_thrust.csv", "fig5_tau.csv", "fig6_separation.csv",
    ]
    assert (figs / "fig3_tracking.csv").read_text().splitlines()[0] == \
        "t_nd,t_days,err_e_km,err_p_km"
    assert (figs / "fig4_thrust.csv").read_text().splitlines()[0] == \
        "t_nd,t_days,uex_N,uey_N,uez_N,ue_mag_N,upx_N,upy_N,upz_N,up_mag_N"
    assert (figs / "fig6_separation.csv").read_text().splitlines()[0] == \
        "t_nd,t_days,sep_km,a,alpha"


def test_plot_data_with_comparison_runs(micro_run, tmp_path, capsys):
    figs = tmp_path / "figs2"
    code, summary = run_cli(
        ["plot-data", "--main", str(micro_run), "--lq", str(micro_run),
         "--neither", str(micro_run), "--out", str(figs)],
        capsys,
    )
    assert code == 0
    assert "fig7_ablations.csv" in summary["written"]
    assert "fig8_lq_separation.csv" in summary["written"]
    fig7 = (figs / "fig7_ablations.csv").read_text().splitlines()
    assert fig7[0] == "variant,t_nd,t_days,sep_km"
    variants = {ln.split(",")[0] for ln in fig7[1:]}
    assert variants == {"full", "neither"}
    fig8 = (figs / "fig8_lq_separation.csv").read_text().splitlines()
    assert {ln.split(",")[0] for ln in fig8[1:]} == {"lq", "saddle"}


def test_plot_data_missing_run_dir(tmp_path, capsys):
    code, _ = run_cli(
        ["plot-data", "--main", str(tmp_path / "ghost"), "--out", str(tmp_path / "f")],
        capsys,
    )
    assert code == 2
