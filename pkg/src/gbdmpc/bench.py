"""Benchmark harness: episodes, oracle solvers, report emission.

Drives the cart-pole plant in closed loop with one of four solvers
(warm GBD, cold GBD, a plain branch-and-bound MIQP baseline, or the
exhaustive oracle), collects per-step records, and writes
machine-readable reports.

Report determinism: everything derived from seeded computation goes
into records.jsonl / summary.json / histogram.csv / aggregate.json,
which are byte-identical across reruns with the same seeds. Measured
wall times are inherently run-dependent and live in the sidecar files
timings.jsonl / timing_summary.json / speed_timeseries.csv, which are
excluded from that guarantee.
"""

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from ._kernels import KERNEL_BACKEND
from ._version import __version__
from .cuts import CutStore
from .gbd import GbdConfig, solve_cold, solve_continual
from .linprog import Infeasible, LpProblem, solve_feasibility
from .master import IterationCapExceeded
from .mld import CartPoleParams, cartpole_condensed, cartpole_mld
from .plant import WallConfig, WallState, plant_step, wall_motion
from .quadprog import QpProblem, solve_qp

SOLVERS = ("gbd_warm", "gbd_cold", "bnb", "brute")
BRUTE_GUARD_BITS = 16
RIDGE = 1e-4   # binary-block regularization inside the bnb relaxation


class GuardExceeded(ValueError):
    pass


@dataclass
class EpisodeConfig:
    seed: int = 0
    steps: int = 60
    params: CartPoleParams = field(default_factory=CartPoleParams)
    disturbance_sigma: float = 8.0          # torque std [N*m]
    wall: WallConfig = field(default_factory=WallConfig)
    x0: tuple = (0.0, 0.17453292519943295, 0.0, 0.0)   # 10 degree tilt
    solver: str = "gbd_warm"
    gbd: GbdConfig = field(default_factory=GbdConfig)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.disturbance_sigma < 0:
            raise ValueError("disturbance_sigma must be nonnegative")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.params.d_max <= 2 * 0.05:
            raise ValueError("d_max leaves no reachable wall band")


@dataclass
class StepRecord:
    step: int
    t: float
    state: list
    wall: list                 # (d1, d2) shown to the controller
    input: float               # applied first-stage force
    delta: Optional[list]
    iterations: int
    lp_count: int
    qp_count: int
    lb: float
    ub: float
    cuts_in_store: int
    contact_involved: bool
    status: str
    solver_failed: bool


@dataclass
class BenchmarkReport:
    config: dict
    records: List[StepRecord]
    wall_times: List[float]
    iteration_histogram: dict          # iterations -> count, contact-involved only
    contact_steps: int
    infeasible_steps: int
    failed_steps: int
    cuts_final: int
    total_lp: int
    total_qp: int
    version: str = __version__
    kernel: str = KERNEL_BACKEND


@dataclass
class BruteResult:
    cost: float
    delta: np.ndarray
    u0: np.ndarray
    qp_count: int
    lp_count: int


@dataclass
class AllInfeasible:
    lp_count: int


def brute_force_solve(problem, x_ini, theta):
    """Exact optimum by enumerating every binary sequence (oracle).

    LP-screens each sequence, QP-solves the survivors; guarded to 16
    binaries.
    """
    n_bin = problem.n_bin
    if n_bin > BRUTE_GUARD_BITS:
        raise GuardExceeded(f"brute force refuses n_bin={n_bin} > {BRUTE_GUARD_BITS}")
    best = np.inf
    best_delta = None
    best_u0 = None
    lp_count = qp_count = 0
    for code in range(1 << n_bin):
        delta = np.array([(code >> i) & 1 for i in range(n_bin)], dtype=float)
        b = problem.b(x_ini, delta)
        d = problem.d(theta, delta)
        screen = solve_feasibility(LpProblem(c=np.zeros(problem.n_var),
                                             A_eq=problem.A, b_eq=b,
                                             C_in=problem.C, d_in=d))
        lp_count += 1
        if isinstance(screen, Infeasible):
            continue
        sol = solve_qp(QpProblem(Q=problem.Q, A_eq=problem.A, b_eq=b,
                                 C_in=problem.C, d_in=d), x0=screen.x)
        qp_count += 1
        if sol.f_star < best:
            best = sol.f_star
            best_delta = delta
            best_u0 = problem.first_input(sol.x_star).copy()
    if best_delta is None:
        return AllInfeasible(lp_count=lp_count)
    return BruteResult(cost=best, delta=best_delta, u0=best_u0,
                       qp_count=qp_count, lp_count=lp_count)


@dataclass
class BnbResult:
    status: str              # "converged" | "proven_infeasible" | "node_cap"
    cost: float
    lower_bound: float
    delta: Optional[np.ndarray]
    u0: Optional[np.ndarray]
    nodes: int
    qp_count: int
    lp_count: int


def shift_warm_delta(delta, n_delta):
    """Receding-horizon seed: stages advanced by one, last duplicated."""
    d = np.asarray(delta, dtype=float).reshape(-1, n_delta)
    return np.vstack([d[1:], d[-1:]]).ravel()


def baseline_bnb_miqp(problem, x_ini, theta, warm_delta=None, gap_tol=0.1,
                      node_cap=100_000):
    """Plain branch-and-bound on the full MIQP (comparison baseline).

    Nodes relax the unfixed binaries to [0,1] and solve a joint QP in
    (x, delta); a tiny ridge on the binary block keeps the relaxation
    strictly convex, and node bounds subtract its worst-case
    contribution so pruning stays valid. Terminates at relative gap
    ``gap_tol``, bound-certified.
    """
    import heapq

    n, n_bin = problem.n_var, problem.n_bin
    x_ini = np.asarray(x_ini, dtype=float)
    theta = np.asarray(theta, dtype=float)
    b_base = problem.B_x @ x_ini
    d_base = problem.d_base + problem.D_theta @ theta
    lp_count = qp_count = 0

    def leaf_value(delta):
        """Exact subproblem solve at a fixed binary point."""
        nonlocal lp_count, qp_count
        b = problem.b(x_ini, delta)
        d = problem.d(theta, delta)
        screen = solve_feasibility(LpProblem(c=np.zeros(n), A_eq=problem.A,
                                             b_eq=b, C_in=problem.C, d_in=d))
        lp_count += 1
        if isinstance(screen, Infeasible):
            return None
        sol = solve_qp(QpProblem(Q=problem.Q, A_eq=problem.A, b_eq=b,
                                 C_in=problem.C, d_in=d), x0=screen.x)
        qp_count += 1
        return sol

    def relax(lo, hi):
        """QP relaxation over (x, free binaries); fixed binaries are
        substituted into the right-hand sides. Returns (value, delta)
        or None when infeasible."""
        nonlocal lp_count, qp_count
        free = np.flatnonzero(lo < hi)
        fixed_delta = lo.copy()   # lo == hi on fixed entries
        if free.size == 0:
            sol = leaf_value(fixed_delta)
            if sol is None:
                return None
            return sol.f_star, fixed_delta
        nf = free.size
        fixed_mask = np.ones(n_bin, dtype=bool)
        fixed_mask[free] = False
        b = b_base + problem.B_d[:, fixed_mask] @ fixed_delta[fixed_mask]
        d = d_base + problem.D_delta[:, fixed_mask] @ fixed_delta[fixed_mask]
        A_j = np.hstack([problem.A, -problem.B_d[:, free]])
        bound_rows = np.zeros((2 * nf, n + nf))
        bound_rhs = np.zeros(2 * nf)
        for i in range(nf):
            bound_rows[2 * i, n + i] = -1.0
            bound_rows[2 * i + 1, n + i] = 1.0
            bound_rhs[2 * i + 1] = 1.0
        C_j = np.vstack([np.hstack([problem.C, -problem.D_delta[:, free]]), bound_rows])
        d_j = np.concatenate([d, bound_rhs])
        Q_j = np.zeros((n + nf, n + nf))
        Q_j[:n, :n] = problem.Q
        Q_j[n:, n:] = RIDGE * np.eye(nf)
        screen = solve_feasibility(LpProblem(c=np.zeros(n + nf), A_eq=A_j,
                                             b_eq=b, C_in=C_j, d_in=d_j))
        lp_count += 1
        if isinstance(screen, Infeasible):
            return None
        sol = solve_qp(QpProblem(Q=Q_j, A_eq=A_j, b_eq=b, C_in=C_j, d_in=d_j),
                       x0=screen.x)
        qp_count += 1
        delta = fixed_delta.copy()
        delta[free] = sol.x_star[n:]
        return sol.f_star - RIDGE * nf, delta

    inc_val = np.inf
    inc_delta = None
    inc_u0 = None
    if warm_delta is not None:
        sol = leaf_value(np.asarray(warm_delta, dtype=float))
        if sol is not None:
            inc_val = sol.f_star
            inc_delta = np.asarray(warm_delta, dtype=float)
            inc_u0 = problem.first_input(sol.x_star).copy()

    def gap(ub, lb):
        if not np.isfinite(ub):
            return np.inf
        if abs(ub) < 1e-12:
            return 0.0 if abs(ub - lb) < 1e-12 else np.inf
        return abs(ub - lb) / abs(ub)

    heap = [(0.0, 0, 0, np.zeros(n_bin), np.ones(n_bin))]
    seq = 0
    nodes = 0
    # proven dual bound: min over bounds at which subtrees were discarded
    pruned_min = np.inf
    frontier = 0.0
    open_nodes_remain = False
    status = "converged"
    while heap:
        bound, negdepth, _, lo, hi = heapq.heappop(heap)
        frontier = bound   # best-first: remaining open nodes are >= this
        if gap(inc_val, bound) <= gap_tol:
            open_nodes_remain = True
            break
        nodes += 1
        if nodes > node_cap:
            status = "node_cap"
            open_nodes_remain = True
            break
        out = relax(lo, hi)
        if out is None:
            continue
        relax_val, delta = out
        node_bound = max(bound, relax_val)
        if gap(inc_val, node_bound) <= gap_tol:
            pruned_min = min(pruned_min, node_bound)
            continue
        frac = np.abs(delta - np.rint(delta))
        if frac.max() <= 1e-9:
            leaf = leaf_value(np.rint(delta))
            if leaf is not None and leaf.f_star < inc_val:
                inc_val = leaf.f_star
                inc_delta = np.rint(delta)
                inc_u0 = problem.first_input(leaf.x_star).copy()
            continue
        j = int(np.argmin(np.where(frac > 1e-9, np.abs(delta - 0.5), np.inf)))
        depth = -negdepth + 1
        for v in (0.0, 1.0):
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[j] = hi2[j] = v
            seq += 1
            heapq.heappush(heap, (node_bound, -depth, seq, lo2, hi2))
    lower = min(pruned_min, inc_val)
    if open_nodes_remain:
        lower = min(lower, frontier)
    if inc_delta is None:
        return BnbResult(status="proven_infeasible", cost=np.inf,
                         lower_bound=float(lower), delta=None,
                         u0=None, nodes=nodes, qp_count=qp_count, lp_count=lp_count)
    return BnbResult(status=status, cost=float(inc_val), lower_bound=float(lower),
                     delta=inc_delta, u0=inc_u0, nodes=nodes,
                     qp_count=qp_count, lp_count=lp_count)


def simulate_episode(cfg: EpisodeConfig, warm_store: Optional[CutStore] = None,
                     problem=None) -> BenchmarkReport:
    """Closed-loop episode; applies only the first-stage force each step.

    The warm store persists across steps, and across episodes when the
    caller passes one in. Steps where the solver yields no usable
    input run with zero force and are flagged.
    """
    params = cfg.params
    sysm = cartpole_mld(params)
    if problem is None:
        problem = cartpole_condensed(params)
    seed_dist, seed_wall = np.random.SeedSequence(cfg.seed).spawn(2)
    rng_dist = np.random.default_rng(seed_dist)
    walk = WallState(np.random.default_rng(seed_wall))

    store = warm_store
    if store is None and cfg.solver == "gbd_warm":
        store = CutStore(problem, np.asarray(cfg.x0, dtype=float),
                         np.array([cfg.wall.d_off_1, cfg.wall.d_off_2]))

    x = np.asarray(cfg.x0, dtype=float).copy()
    records = []
    wall_times = []
    histogram = {}
    contact_steps = infeasible_steps = failed_steps = 0
    total_lp = total_qp = 0
    prev_delta = None

    for k in range(cfg.steps):
        t = k * params.dt
        d1, d2 = wall_motion(t, walk, cfg.wall, params)
        theta = np.array([d1, d2])

        t0 = time.perf_counter()
        delta = None
        u0 = None
        lb = ub = np.inf
        iterations = lp_n = qp_n = 0
        cuts_in_store = 0
        if cfg.solver in ("gbd_warm", "gbd_cold"):
            if cfg.solver == "gbd_warm":
                res = solve_continual(store, problem, x, theta, cfg.gbd)
                cuts_in_store = (len(store.feasibility_cuts)
                                 + len(store.optimality_cuts))
            else:
                res = solve_cold(problem, x, theta, cfg.gbd)
                cuts_in_store = res.stats.cuts_added_feas + res.stats.cuts_added_opt
            status = res.status
            delta = res.delta_star
            u0 = res.u_star
            lb = res.stats.lb_trace[-1] if res.stats.lb_trace else -np.inf
            ub = res.cost
            iterations = res.stats.iterations
            lp_n = res.stats.subproblem_lp_count
            qp_n = res.stats.subproblem_qp_count
        elif cfg.solver == "bnb":
            warm = shift_warm_delta(prev_delta, problem.n_delta) \
                if prev_delta is not None else None
            res = baseline_bnb_miqp(problem, x, theta, warm_delta=warm,
                                    gap_tol=cfg.gbd.gap_tol)
            status = res.status
            delta = res.delta
            u0 = res.u0
            lb, ub = res.lower_bound, res.cost
            iterations = res.nodes
            lp_n, qp_n = res.lp_count, res.qp_count
        else:   # brute
            res = brute_force_solve(problem, x, theta)
            if isinstance(res, AllInfeasible):
                status = "proven_infeasible"
                lp_n = res.lp_count
            else:
                status = "converged"
                delta = res.delta
                u0 = res.u0
                lb = ub = res.cost
                lp_n, qp_n = res.lp_count, res.qp_count
                iterations = 1
        wall_t = time.perf_counter() - t0

        failed = u0 is None
        u_force = float(u0[0]) if u0 is not None else 0.0
        contact = delta is not None and bool(np.any(np.asarray(delta) != 0))
        if contact:
            contact_steps += 1
            histogram[iterations] = histogram.get(iterations, 0) + 1
        if status == "proven_infeasible":
            infeasible_steps += 1
        if failed:
            failed_steps += 1
        total_lp += lp_n
        total_qp += qp_n

        records.append(StepRecord(
            step=k, t=float(t), state=[float(v) for v in x],
            wall=[float(d1), float(d2)], input=u_force,
            delta=None if delta is None else [int(v) for v in np.rint(delta)],
            iterations=int(iterations), lp_count=int(lp_n), qp_count=int(qp_n),
            lb=float(lb), ub=float(ub), cuts_in_store=int(cuts_in_store),
            contact_involved=contact, status=status, solver_failed=failed))
        wall_times.append(wall_t)

        n_torque = rng_dist.normal(0.0, cfg.disturbance_sigma)
        x = plant_step(x, u_force, d1, d2, n_torque, params, sysm)
        if delta is not None:
            prev_delta = np.asarray(delta, dtype=float)

    cuts_final = 0
    if store is not None:
        cuts_final = len(store.feasibility_cuts) + len(store.optimality_cuts)
    return BenchmarkReport(
        config=_config_dict(cfg), records=records, wall_times=wall_times,
        iteration_histogram=dict(sorted(histogram.items())),
        contact_steps=contact_steps, infeasible_steps=infeasible_steps,
        failed_steps=failed_steps, cuts_final=cuts_final,
        total_lp=total_lp, total_qp=total_qp)


# -- configuration ----------------------------------------------------

def _config_dict(cfg: EpisodeConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["x0"] = [float(v) for v in cfg.x0]
    return out


def load_suite(path):
    """Parse a suite YAML into (EpisodeConfig template, suite options)."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    params = CartPoleParams.from_dict(raw.get("cartpole", {}))
    wall = WallConfig(**raw.get("wall", {}))
    gbd = GbdConfig(**raw.get("gbd", {}))
    ep = raw.get("episode", {})
    cfg = EpisodeConfig(
        seed=int(ep.get("seed", 0)),
        steps=int(ep.get("steps", 60)),
        params=params,
        disturbance_sigma=float(ep.get("disturbance_sigma", 8.0)),
        wall=wall,
        x0=tuple(float(v) for v in ep.get("x0", (0.0, 0.17453292519943295, 0.0, 0.0))),
        solver=str(ep.get("solver", "gbd_warm")),
        gbd=gbd,
    )
    suite = raw.get("suite", {})
    options = {
        "episodes": int(suite.get("episodes", 1)),
        "solvers": list(suite.get("solvers", [cfg.solver])),
        "failure_budget": int(suite.get("failure_budget", 0)),
    }
    return cfg, options


# -- report files -----------------------------------------------------

def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_report(report: BenchmarkReport, run_dir: Path):
    """One run's file set; see module docstring for the determinism split."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    with open(run_dir / "records.jsonl", "w") as fh:
        for rec in report.records:
            fh.write(json.dumps(dataclasses.asdict(rec), sort_keys=True) + "\n")

    summary = {
        "config": report.config,
        "version": report.version,
        "kernel": report.kernel,
        "steps": len(report.records),
        "contact_steps": report.contact_steps,
        "infeasible_steps": report.infeasible_steps,
        "failed_steps": report.failed_steps,
        "cuts_final": report.cuts_final,
        "total_lp": report.total_lp,
        "total_qp": report.total_qp,
        "iteration_histogram": {str(k): v for k, v in report.iteration_histogram.items()},
        "mean_iterations_contact": (
            sum(k * v for k, v in report.iteration_histogram.items())
            / report.contact_steps if report.contact_steps else None),
    }
    _dump_json(summary, run_dir / "summary.json")

    with open(run_dir / "histogram.csv", "w") as fh:
        fh.write("bin_low,bin_high,count\n")
        for k, v in report.iteration_histogram.items():
            fh.write(f"{k},{k + 1},{v}\n")

    # volatile sidecars (timings are not reproducible run-to-run)
    with open(run_dir / "timings.jsonl", "w") as fh:
        for rec, w in zip(report.records, report.wall_times):
            fh.write(json.dumps({"step": rec.step, "wall_time_s": w}) + "\n")
    _dump_json({
        "total_wall_s": sum(report.wall_times),
        "mean_hz": (len(report.wall_times) / sum(report.wall_times)
                    if sum(report.wall_times) else None),
    }, run_dir / "timing_summary.json")
    with open(run_dir / "speed_timeseries.csv", "w") as fh:
        fh.write("t,hz,cuts\n")
        for rec, w in zip(report.records, report.wall_times):
            hz = 1.0 / w if w > 0 else float("inf")
            fh.write(f"{rec.t},{hz},{rec.cuts_in_store}\n")


def run_benchmark(config_path, out_dir, seed=None, solver=None, episodes=None,
                  steps=None, save_store=None, load_store=None):
    """Run the configured episode x solver matrix; returns the exit code.

    Writes one run directory per (solver, episode) pair plus an
    aggregate.json. Episodes containing a proven-infeasible step are
    excluded from the aggregate statistics (counts still reported).
    Nonzero exit when any run's failed-step count exceeds the
    configured failure budget.
    """
    base, options = load_suite(config_path)
    if seed is not None:
        base.seed = int(seed)
    if steps is not None:
        base.steps = int(steps)
    if episodes is not None:
        options["episodes"] = int(episodes)
    solvers = [solver] if solver else options["solvers"]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = cartpole_condensed(base.params)

    aggregate = {"runs": {}, "excluded_runs": [], "failure_budget": options["failure_budget"]}
    exit_code = 0
    for sv in solvers:
        if sv not in SOLVERS:
            raise ValueError(f"unknown solver {sv!r}")
        warm = None
        if sv == "gbd_warm" and load_store:
            warm = CutStore.load(load_store, problem)
        for e in range(options["episodes"]):
            cfg = dataclasses.replace(base, solver=sv, seed=base.seed + e)
            if sv == "gbd_warm" and warm is None:
                warm = CutStore(problem, np.asarray(cfg.x0, dtype=float),
                                np.array([cfg.wall.d_off_1, cfg.wall.d_off_2]))
            report = simulate_episode(cfg, warm_store=warm if sv == "gbd_warm" else None,
                                      problem=problem)
            run_name = f"{sv}_ep{e}"
            write_report(report, out / run_name)
            entry = {
                "solver": sv,
                "seed": cfg.seed,
                "contact_steps": report.contact_steps,
                "infeasible_steps": report.infeasible_steps,
                "failed_steps": report.failed_steps,
                "cuts_final": report.cuts_final,
                "total_lp": report.total_lp,
                "total_qp": report.total_qp,
                "iteration_histogram": {str(k): v for k, v in report.iteration_histogram.items()},
                "mean_iterations_contact": (
                    sum(k * v for k, v in report.iteration_histogram.items())
                    / report.contact_steps if report.contact_steps else None),
            }
            if report.infeasible_steps:
                aggregate["excluded_runs"].append(run_name)
            aggregate["runs"][run_name] = entry
            if report.failed_steps > options["failure_budget"]:
                exit_code = 1
        if sv == "gbd_warm" and save_store and warm is not None:
            warm.save(save_store)

    included = {k: v for k, v in aggregate["runs"].items()
                if k not in aggregate["excluded_runs"]}
    by_solver = {}
    for entry in included.values():
        s = by_solver.setdefault(entry["solver"], {"contact_steps": 0, "iter_sum": 0,
                                                   "total_lp": 0, "total_qp": 0})
        s["contact_steps"] += entry["contact_steps"]
        s["iter_sum"] += sum(int(k) * v for k, v in entry["iteration_histogram"].items())
        s["total_lp"] += entry["total_lp"]
        s["total_qp"] += entry["total_qp"]
    for s in by_solver.values():
        s["mean_iterations_contact"] = (s["iter_sum"] / s["contact_steps"]
                                        if s["contact_steps"] else None)
    aggregate["by_solver"] = by_solver
    _dump_json(aggregate, out / "aggregate.json")
    return exit_code
