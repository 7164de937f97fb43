"""Pursuit-evasion differential games on cislunar periodic orbits."""

from .params import EARTH_MOON, SystemParams
from .orbit import PeriodicOrbit, differential_correct, load_orbit
from .manifold import ManifoldData, build_manifold, monodromy
from .game import EngagementProblem, GameWeights
from .ddp import SaddleSolver, SolveResult, SolverSettings
from .lqgame import SwitchedLqPursuer, solve_lq_game
from .mpc import (
    ScenarioConfig,
    SimulationLog,
    export_log,
    load_config,
    run_ablation,
    run_mpc,
    save_config,
    update_aggressiveness,
)

__version__ = "0.1.0"

__all__ = [
    "EARTH_MOON",
    "SystemParams",
    "PeriodicOrbit",
    "differential_correct",
    "load_orbit",
    "ManifoldData",
    "build_manifold",
    "monodromy",
    "EngagementProblem",
    "GameWeights",
    "SaddleSolver",
    "SolveResult",
    "SolverSettings",
    "SwitchedLqPursuer",
    "solve_lq_game",
    "ScenarioConfig",
    "SimulationLog",
    "export_log",
    "load_config",
    "run_ablation",
    "run_mpc",
    "save_config",
    "update_aggressiveness",
    "__version__",
]
