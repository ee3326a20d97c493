"""Benders loop: master/subproblem iteration with bound bookkeeping.

One iteration = solve master (lower bound), screen the proposed binary
sequence with the feasibility LP (dual simplex role), then either add
a Farkas feasibility cut (plus its stage-shifted variants) or solve
the QP and add an optimality cut. Terminates on the relative MIP gap
|UB - LB| / |UB|.

Two entry points:

* solve_cold      -- fresh store per call; optimality cuts are added
                     unconditionally and the upper bound updates
                     whenever the subproblem improves it.
* solve_continual -- persistent store, re-parameterized to the new
                     (x_ini, theta) before the loop. New optimality
                     cuts are admitted only when their dual point
                     leaves the epsilon-ball of every stored one; by
                     default the upper-bound update is nested inside
                     that admission test (set ub_update_outside_dedup
                     to lift it out; see GbdConfig).
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cuts import CutStore, ShiftProducedZero
from .linprog import Infeasible, LpProblem, solve_feasibility
from .master import IterationCapExceeded, MasterInfeasible, solve_master
from .mld import CondensedProblem
from .quadprog import QpProblem, QpSolution, solve_qp

GAP_ZERO = 1e-12


@dataclass
class GbdConfig:
    gap_tol: float = 0.1                    # relative MIP gap threshold
    eps: float = 1e-3                       # optimality-cut dedup ball radius
    max_iter: int = 100
    enable_shifted_cuts: bool = True
    enable_continual: bool = True
    # The continual-learning loop as written skips the UB update when a
    # duplicate dual point suppresses the cut; True applies the update
    # regardless (the cold-start loop's behavior).
    ub_update_outside_dedup: bool = False
    master_node_cap: int = 1_000_000

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise ValueError("gap_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveStats:
    iterations: int = 0
    lb_trace: List[float] = field(default_factory=list)
    ub_trace: List[float] = field(default_factory=list)
    cuts_added_feas: int = 0
    cuts_added_opt: int = 0
    cuts_deduped: int = 0
    subproblem_lp_count: int = 0
    subproblem_qp_count: int = 0
    master_nodes: int = 0
    stalls: int = 0
    wall_times: dict = field(default_factory=lambda: {
        "master": 0.0, "subproblem_lp": 0.0, "subproblem_qp": 0.0, "cuts": 0.0})


@dataclass
class GbdResult:
    status: str                    # "converged" | "proven_infeasible" | "iter_cap"
    u_star: Optional[np.ndarray]   # first-stage input u_0
    delta_star: Optional[np.ndarray]
    cost: float                    # UB at termination
    stats: SolveStats


def mip_gap(z_p, z_d):
    """Relative gap |z_P - z_D| / |z_P| with degenerate-zero handling.

    Infinite bounds give +inf (not converged); |z_P| below 1e-12 gives
    0 when the bounds coincide to the same tolerance, else +inf.
    """
    if not np.isfinite(z_p) or not np.isfinite(z_d):
        return np.inf
    diff = abs(z_p - z_d)
    if abs(z_p) < GAP_ZERO:
        return 0.0 if diff < GAP_ZERO else np.inf
    return diff / abs(z_p)


def _subproblem(problem: CondensedProblem, b, d):
    return QpProblem(Q=problem.Q, A_eq=problem.A, b_eq=b,
                     C_in=problem.C, d_in=d)


def _gbd_loop(store: CutStore, problem: CondensedProblem, x_ini, theta,
              cfg: GbdConfig, ball_dedup: bool) -> GbdResult:
    stats = SolveStats()
    times = stats.wall_times
    counters0 = dict(store.counters)
    lb, ub = -np.inf, np.inf
    u_star = None
    delta_star = None
    proposed = set()
    status = None

    while mip_gap(ub, lb) >= cfg.gap_tol:
        if stats.iterations >= cfg.max_iter:
            status = "iter_cap"
            break

        t0 = time.perf_counter()
        warm = (delta_star,) if delta_star is not None else ()
        master = solve_master(store, warm_deltas=warm,
                              node_cap=cfg.master_node_cap)
        times["master"] += time.perf_counter() - t0
        if isinstance(master, MasterInfeasible):
            stats.master_nodes += master.nodes
            status = "proven_infeasible"
            break
        stats.master_nodes += master.nodes
        lb = master.z0
        delta = master.delta.astype(float)

        key = delta.tobytes()
        if key in proposed:
            # the cuts no longer separate this point; nothing new can happen
            stats.stalls += 1
            status = "converged" if mip_gap(ub, lb) < cfg.gap_tol else "iter_cap"
            stats.lb_trace.append(lb)
            stats.ub_trace.append(ub)
            stats.iterations += 1
            break
        proposed.add(key)

        b = problem.b(x_ini, delta)
        d = problem.d(theta, delta)
        t0 = time.perf_counter()
        screen = solve_feasibility(LpProblem(
            c=np.zeros(problem.n_var), A_eq=problem.A, b_eq=b,
            C_in=problem.C, d_in=d))
        times["subproblem_lp"] += time.perf_counter() - t0
        stats.subproblem_lp_count += 1

        if isinstance(screen, Infeasible):
            t0 = time.perf_counter()
            cut = store.make_feasibility_cut(screen.cert)
            store.try_add_feasibility(cut)
            if cfg.enable_shifted_cuts:
                for m in range(1, problem.N):
                    try:
                        shifted = store.shift_certificate(cut, m)
                    except ShiftProducedZero:
                        continue
                    store.try_add_feasibility(shifted)
            times["cuts"] += time.perf_counter() - t0
        else:
            t0 = time.perf_counter()
            qp = solve_qp(_subproblem(problem, b, d), x0=screen.x)
            times["subproblem_qp"] += time.perf_counter() - t0
            stats.subproblem_qp_count += 1
            f_star = qp.f_star

            t0 = time.perf_counter()
            cut = store.make_optimality_cut(qp, delta, b, d)
            added = store.try_add_optimality(cut, cfg.eps)
            times["cuts"] += time.perf_counter() - t0
            if (added or not ball_dedup or cfg.ub_update_outside_dedup) \
                    and f_star < ub:
                ub = f_star
                u_star = problem.first_input(qp.x_star).copy()
                delta_star = delta.copy()

        stats.lb_trace.append(lb)
        stats.ub_trace.append(ub)
        stats.iterations += 1

    if status is None:
        status = "converged"
    stats.cuts_added_feas = store.counters["added_feasibility"] - counters0["added_feasibility"]
    stats.cuts_added_opt = store.counters["added_optimality"] - counters0["added_optimality"]
    stats.cuts_deduped = (store.counters["deduped_feasibility"]
                          + store.counters["deduped_optimality"]
                          - counters0["deduped_feasibility"]
                          - counters0["deduped_optimality"])
    return GbdResult(status=status, u_star=u_star, delta_star=delta_star,
                     cost=ub, stats=stats)


def solve_cold(problem: CondensedProblem, x_ini, theta, cfg: GbdConfig) -> GbdResult:
    """Benders loop from an empty store (no continual learning)."""
    store = CutStore(problem, x_ini, theta)
    return _gbd_loop(store, problem, x_ini, theta, cfg, ball_dedup=False)


def solve_continual(store: CutStore, problem: CondensedProblem, x_ini, theta,
                    cfg: GbdConfig) -> GbdResult:
    """Benders loop with the persistent store re-parameterized first.

    With enable_continual=False the store argument is ignored and each
    call behaves exactly like solve_cold.
    """
    if not cfg.enable_continual:
        return solve_cold(problem, x_ini, theta, cfg)
    store.reparameterize(x_ini, theta)
    return _gbd_loop(store, problem, x_ini, theta, cfg, ball_dedup=True)
