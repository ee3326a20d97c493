"""Benders master problem: a small MIP over the binary sequence.

    minimize    z0
    subject to  every feasibility cut:  lin_p . delta + off_p >= 0
                every optimality cut:   z0 >= off_q + lin_q . delta
                z0 >= 0                 (valid: the subproblem cost is
                                         a positive-definite quadratic)
                delta in {0,1}^n_bin

Solved to certified global optimality (absolute bound gap 1e-9) by
best-first branch and bound on LP-relaxation bounds. Node LPs activate
stored cuts lazily: each relaxation starts from the rows its parent
needed and pulls in violated ones until none remain, which keeps the
dense LP small even with thousands of stored cuts.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from .cuts import CutStore
from .linprog import Infeasible, LpProblem, Optimal, Unbounded, solve_lp
from .linprog import NumericalFailure

FEAS_CUT_TOL = 1e-7    # allowed violation of a feasibility cut at a solution
LAZY_TOL = 1e-9        # violation that forces a row into the node LP
GAP_ABS = 1e-9         # bound-closure certificate
INT_TOL = 1e-9


@dataclass
class MasterSolution:
    delta: np.ndarray      # 0/1 ints
    z0: float
    nodes: int = 0


@dataclass
class MasterInfeasible:
    """The feasibility cuts exclude every binary point."""

    nodes: int = 0


class IterationCapExceeded(RuntimeError):
    pass


class _Evaluator:
    """Direct (LP-free) evaluation of binary points against the store."""

    def __init__(self, store: CutStore):
        self.F_lin, self.F_off = store.feasibility_arrays()
        self.O_lin, self.O_off = store.optimality_arrays()

    def feasible(self, delta):
        if self.F_lin.shape[0] == 0:
            return True
        return bool((self.F_lin @ delta + self.F_off).min() >= -FEAS_CUT_TOL)

    def value(self, delta):
        if self.O_lin.shape[0] == 0:
            return 0.0
        return max(0.0, float((self.O_off + self.O_lin @ delta).max()))


def solve_master(store: CutStore, n_bin=None, warm_deltas=(), node_cap=1_000_000):
    """Globally minimize z0 over the cut store; see module docstring.

    ``warm_deltas`` seeds the incumbent with candidate binary points
    (e.g. the previous iteration's incumbent). Returns MasterSolution
    or MasterInfeasible; raises IterationCapExceeded past ``node_cap``
    nodes.
    """
    n = store.problem.n_bin if n_bin is None else int(n_bin)
    ev = _Evaluator(store)
    F_lin, F_off = ev.F_lin, ev.F_off
    O_lin, O_off = ev.O_lin, ev.O_off
    n_f, n_o = F_lin.shape[0], O_lin.shape[0]

    inc_val = np.inf
    inc_delta = None
    for cand in warm_deltas:
        cand = np.asarray(cand, dtype=float)
        if cand.shape != (n,):
            continue
        if ev.feasible(cand):
            val = ev.value(cand)
            if val < inc_val:
                inc_val, inc_delta = val, np.rint(cand).astype(int)

    def node_relax(lo, hi, rows_f, rows_o):
        """Lazy LP relaxation; returns (z, delta, rows_f, rows_o) or None."""
        rows_f = list(rows_f)
        rows_o = list(rows_o)
        while True:
            m_rows = len(rows_f) + len(rows_o)
            C = np.zeros((m_rows, n + 1))
            d = np.zeros(m_rows)
            for i, p_ in enumerate(rows_f):
                C[i, :n] = -F_lin[p_]
                d[i] = F_off[p_]
            for i, q_ in enumerate(rows_o):
                r = len(rows_f) + i
                C[r, :n] = O_lin[q_]
                C[r, n] = -1.0
                d[r] = -O_off[q_]
            lp = LpProblem(
                c=np.concatenate([np.zeros(n), [1.0]]),
                C_in=C, d_in=d,
                lo=np.concatenate([lo, [0.0]]),
                hi=np.concatenate([hi, [np.inf]]),
            )
            res = solve_lp(lp)
            if isinstance(res, Infeasible):
                return None
            if isinstance(res, Unbounded):   # z0 is bounded below by 0
                raise NumericalFailure("master relaxation reported unbounded")
            delta = res.x[:n]
            z = res.x[n]
            new_rows = False
            if n_f:
                viol = F_lin @ delta + F_off
                for p_ in np.flatnonzero(viol < -LAZY_TOL):
                    if p_ not in rows_f:
                        rows_f.append(int(p_))
                        new_rows = True
            if n_o:
                viol = O_off + O_lin @ delta - z
                for q_ in np.flatnonzero(viol > LAZY_TOL):
                    if q_ not in rows_o:
                        rows_o.append(int(q_))
                        new_rows = True
            if not new_rows:
                return res.obj, delta, rows_f, rows_o

    heap = []
    seq = 0
    heapq.heappush(heap, (0.0, 0, seq, np.zeros(n), np.ones(n), (), ()))
    nodes = 0

    while heap:
        bound, negdepth, _, lo, hi, rows_f, rows_o = heapq.heappop(heap)
        if bound >= inc_val - GAP_ABS:
            break   # best-first: every remaining node is at least as bad
        nodes += 1
        if nodes > node_cap:
            raise IterationCapExceeded(f"master B&B exceeded {node_cap} nodes")
        out = node_relax(lo, hi, rows_f, rows_o)
        if out is None:
            continue
        z_rel, delta, rows_f, rows_o = out
        if z_rel >= inc_val - GAP_ABS:
            continue
        frac = np.abs(delta - np.rint(delta))
        rounded = np.rint(delta)
        # rounding heuristic: cheap incumbent candidate at every node
        if ev.feasible(rounded):
            val = ev.value(rounded)
            if val < inc_val - 1e-12:
                inc_val, inc_delta = val, rounded.astype(int)
        if frac.max() <= INT_TOL:
            continue   # node solved by its own relaxation (rounded == delta)
        j = int(np.argmin(np.where(frac > INT_TOL, np.abs(delta - 0.5), np.inf)))
        depth = -negdepth + 1
        for v in (0.0, 1.0):
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[j] = hi2[j] = v
            seq += 1
            heapq.heappush(heap, (z_rel, -depth, seq, lo2, hi2,
                                  tuple(rows_f), tuple(rows_o)))

    if inc_delta is None:
        return MasterInfeasible(nodes=nodes)
    return MasterSolution(delta=inc_delta, z0=float(inc_val), nodes=nodes)
