"""Hybrid MPC via generalized Benders decomposition with a persistent
cut store, plus the cart-pole-with-moving-walls benchmark harness."""

from ._kernels import KERNEL_BACKEND
from ._version import __version__
from .bench import (AllInfeasible, BenchmarkReport, BruteResult, EpisodeConfig,
                    baseline_bnb_miqp, brute_force_solve, run_benchmark,
                    simulate_episode)
from .cuts import CutStore, FeasibilityCut, OptimalityCut, ShiftProducedZero
from .gbd import GbdConfig, GbdResult, SolveStats, mip_gap, solve_cold, solve_continual
from .linprog import (FarkasCertificate, Feasible, Infeasible, LpProblem,
                      NumericalFailure, Optimal, Unbounded, solve_feasibility,
                      solve_lp, verify_alternatives)
from .master import IterationCapExceeded, MasterInfeasible, MasterSolution, solve_master
from .mld import (CartPoleParams, CondensedProblem, MldSystem, cartpole_condensed,
                  cartpole_mld, condense, riccati_terminal)
from .plant import WallConfig, WallState, plant_step, wall_motion
from .quadprog import (MaxIterations, QpProblem, QpSolution, dual_objective,
                       solve_qp, unconstrained_minimizer)

__all__ = [
    "KERNEL_BACKEND", "__version__",
    "AllInfeasible", "BenchmarkReport", "BruteResult", "EpisodeConfig",
    "baseline_bnb_miqp", "brute_force_solve", "run_benchmark", "simulate_episode",
    "CutStore", "FeasibilityCut", "OptimalityCut", "ShiftProducedZero",
    "GbdConfig", "GbdResult", "SolveStats", "mip_gap", "solve_cold", "solve_continual",
    "FarkasCertificate", "Feasible", "Infeasible", "LpProblem", "NumericalFailure",
    "Optimal", "Unbounded", "solve_feasibility", "solve_lp", "verify_alternatives",
    "IterationCapExceeded", "MasterInfeasible", "MasterSolution", "solve_master",
    "CartPoleParams", "CondensedProblem", "MldSystem", "cartpole_condensed",
    "cartpole_mld", "condense", "riccati_terminal",
    "WallConfig", "WallState", "plant_step", "wall_motion",
    "MaxIterations", "QpProblem", "QpSolution", "dual_objective",
    "solve_qp", "unconstrained_minimizer",
]
