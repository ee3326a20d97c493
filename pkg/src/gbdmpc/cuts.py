"""Feasibility/optimality cut construction, storage, shifting, dedup.

Cuts live in the dual space of the horizon subproblem, which does not
change when the initial state x_ini or the environment parameters
theta move. Each cut therefore caches its value as an affine function
of the binary sequence delta:

    feasibility cut:  lin . delta + offset >= 0
    optimality cut:   z0 >= offset + lin . delta

where only the offset depends on (x_ini, theta); re-parameterizing a
store for a new instance is a cheap offset refresh.

Dedup rules: feasibility cuts are dual rays, equivalent when one is a
positive multiple of the other, so they are stored normalized
(inf-norm 1) and compared by inf-distance; optimality cuts are
deduplicated by a Euclidean epsilon-ball on the concatenated dual
point (nu*, lambda*).
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .linprog import FarkasCertificate, NumericalFailure
from .mld import CondensedProblem
from .quadprog import QpSolution

RAY_DEDUP_TOL = 1e-6      # inf-distance between normalized rays
CONE_TOL = 1e-7           # ||A'nu + C'lam||_inf membership test
LAMBDA_TOL = 1e-9

STORE_FORMAT_VERSION = 1


class ShiftProducedZero(ValueError):
    """Every retained stage block of the shifted certificate was zero."""


@dataclass
class FeasibilityCut:
    nu: np.ndarray               # (N+1) * n_x, normalized with lam to inf-norm 1
    lam: np.ndarray              # N * n_c
    origin: str                  # "direct" or "shifted"
    shift_m: int = 0             # 0 for direct cuts
    lin: np.ndarray = None       # coefficient of delta (invariant under reparam)
    offset: float = 0.0          # refreshed per (x_ini, theta)

    def value(self, delta):
        return float(self.lin @ np.asarray(delta, dtype=float) + self.offset)


@dataclass
class OptimalityCut:
    f_star: float
    nu: np.ndarray
    lam: np.ndarray
    delta_q: np.ndarray
    b_q: np.ndarray              # b(x_ini, delta_q) frozen at generation
    d_q: np.ndarray              # d(theta, delta_q) frozen at generation
    lin: np.ndarray = None
    offset: float = 0.0

    def value(self, delta):
        return float(self.offset + self.lin @ np.asarray(delta, dtype=float))

    def value_from_duals(self, problem, x_ini, theta, delta):
        """Direct (uncached) evaluation of the cut formula."""
        b = problem.b(x_ini, delta)
        d = problem.d(theta, delta)
        return float(self.f_star + self.nu @ (self.b_q - b) + self.lam @ (self.d_q - d))


def _normalize_ray(nu, lam):
    norm = max(np.abs(nu).max(initial=0.0), np.abs(lam).max(initial=0.0))
    if norm <= 0.0:
        raise ShiftProducedZero("zero dual ray")
    return nu / norm, np.maximum(lam / norm, 0.0)


class CutStore:
    """Single-writer store of cuts for one condensed problem.

    Holds the current (x_ini, theta) the cached offsets refer to.
    Counters: added_feasibility, added_optimality, added_shifted,
    deduped_feasibility, deduped_optimality.
    """

    def __init__(self, problem: CondensedProblem, x_ini, theta):
        self.problem = problem
        self.x_ini = np.asarray(x_ini, dtype=float).copy()
        self.theta = np.asarray(theta, dtype=float).copy()
        self.feasibility_cuts: List[FeasibilityCut] = []
        self.optimality_cuts: List[OptimalityCut] = []
        self.counters = {
            "added_feasibility": 0,
            "added_optimality": 0,
            "added_shifted": 0,
            "deduped_feasibility": 0,
            "deduped_optimality": 0,
        }
        # dedup prefilter state
        self._ray_rows: List[np.ndarray] = []
        self._ray_sums: List[float] = []
        self._dual_rows: List[np.ndarray] = []
        self._dual_norms2: List[float] = []

    # -- construction ------------------------------------------------

    def _feas_coeff(self, nu, lam):
        p = self.problem
        lin = p.B_d.T @ nu + p.D_delta.T @ lam
        offset = float((p.B_x @ self.x_ini) @ nu
                       + (p.d_base + p.D_theta @ self.theta) @ lam)
        return lin, offset

    def make_feasibility_cut(self, cert: FarkasCertificate) -> FeasibilityCut:
        """Build the master constraint that defeats this Farkas proof."""
        nu, lam = _normalize_ray(np.asarray(cert.nu, dtype=float),
                                 np.asarray(cert.lam, dtype=float))
        lin, offset = self._feas_coeff(nu, lam)
        return FeasibilityCut(nu=nu, lam=lam, origin="direct", shift_m=0,
                              lin=lin, offset=offset)

    def shift_certificate(self, cut: FeasibilityCut, m: int) -> FeasibilityCut:
        """Advance the stage blocks of a direct cut by m, zero-padding.

        nu blocks k <- k+m for k+m <= N, lam blocks k <- k+m for
        k+m <= N-1; the result stays in the dual cone. Raises
        ShiftProducedZero when nothing survives.
        """
        p = self.problem
        N, n_x, n_c = p.N, p.n_x, p.n_c
        if not (1 <= m <= N - 1):
            raise ValueError("shift requires 1 <= m <= N-1")
        if cut.origin != "direct":
            raise ValueError("only direct cuts are shifted")
        nu_b = cut.nu.reshape(N + 1, n_x)
        lam_b = cut.lam.reshape(N, n_c)
        nu_s = np.zeros_like(nu_b)
        lam_s = np.zeros_like(lam_b)
        nu_s[:N + 1 - m] = nu_b[m:]
        lam_s[:N - m] = lam_b[m:]
        nu, lam = _normalize_ray(nu_s.ravel(), lam_s.ravel())
        cone = p.A.T @ nu + p.C.T @ lam
        if np.abs(cone).max() > CONE_TOL or lam.min(initial=0.0) < -LAMBDA_TOL:
            raise NumericalFailure("shifted certificate left the dual cone")
        lin, offset = self._feas_coeff(nu, lam)
        return FeasibilityCut(nu=nu, lam=lam, origin="shifted", shift_m=m,
                              lin=lin, offset=offset)

    def make_optimality_cut(self, sol: QpSolution, delta_q, b_q, d_q) -> OptimalityCut:
        """Lower-bound cut from a solved subproblem's duals (simple form)."""
        cut = OptimalityCut(
            f_star=float(sol.f_star),
            nu=np.asarray(sol.nu_star, dtype=float).copy(),
            lam=np.asarray(sol.lambda_star, dtype=float).copy(),
            delta_q=np.asarray(delta_q, dtype=float).copy(),
            b_q=np.asarray(b_q, dtype=float).copy(),
            d_q=np.asarray(d_q, dtype=float).copy(),
        )
        self._opt_coeff(cut)
        return cut

    def _opt_coeff(self, cut: OptimalityCut):
        p = self.problem
        cut.lin = -(p.B_d.T @ cut.nu + p.D_delta.T @ cut.lam)
        const_q = cut.f_star + cut.nu @ cut.b_q + cut.lam @ cut.d_q
        cut.offset = float(const_q - (p.B_x @ self.x_ini) @ cut.nu
                           - (p.d_base + p.D_theta @ self.theta) @ cut.lam)

    # -- continual learning -------------------------------------------

    def reparameterize(self, x_ini_new, theta_new):
        """Refresh every cached offset for a new (x_ini, theta)."""
        self.x_ini = np.asarray(x_ini_new, dtype=float).copy()
        self.theta = np.asarray(theta_new, dtype=float).copy()
        for cut in self.feasibility_cuts:
            cut.lin, cut.offset = self._feas_coeff(cut.nu, cut.lam)
        for cut in self.optimality_cuts:
            self._opt_coeff(cut)

    # -- dedup + insertion --------------------------------------------

    def try_add_feasibility(self, cut: FeasibilityCut) -> bool:
        """Append unless an equivalent ray (positive multiple) is stored.

        Returns True when added. Equivalence: inf-distance <= 1e-6
        between normalized rays; a coarse sum prefilter keeps the scan
        cheap.
        """
        v = np.concatenate([cut.nu, cut.lam])
        s = float(v.sum())
        dim = v.size
        for idx, s2 in enumerate(self._ray_sums):
            if abs(s2 - s) > dim * RAY_DEDUP_TOL:
                continue
            if np.abs(self._ray_rows[idx] - v).max() <= RAY_DEDUP_TOL:
                self.counters["deduped_feasibility"] += 1
                return False
        self.feasibility_cuts.append(cut)
        self._ray_rows.append(v)
        self._ray_sums.append(s)
        self.counters["added_feasibility"] += 1
        if cut.origin == "shifted":
            self.counters["added_shifted"] += 1
        return True

    def try_add_optimality(self, cut: OptimalityCut, eps: float) -> bool:
        """Append unless the dual point lies in an eps-ball of a stored one."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        v = np.concatenate([cut.nu, cut.lam])
        if self._dual_rows:
            M = np.asarray(self._dual_rows)
            d2 = np.asarray(self._dual_norms2) - 2.0 * (M @ v) + float(v @ v)
            if d2.min() < eps * eps:
                self.counters["deduped_optimality"] += 1
                return False
        self.optimality_cuts.append(cut)
        self._dual_rows.append(v)
        self._dual_norms2.append(float(v @ v))
        self.counters["added_optimality"] += 1
        return True

    def is_duplicate_optimality(self, nu, lam, eps: float) -> bool:
        """Ball test alone (no insertion)."""
        v = np.concatenate([np.asarray(nu, dtype=float), np.asarray(lam, dtype=float)])
        if not self._dual_rows:
            return False
        M = np.asarray(self._dual_rows)
        d2 = np.asarray(self._dual_norms2) - 2.0 * (M @ v) + float(v @ v)
        return bool(d2.min() < eps * eps)

    # -- master-facing arrays -----------------------------------------

    def feasibility_arrays(self):
        """(lin, off) stacked; cut values are lin @ delta + off."""
        if not self.feasibility_cuts:
            n = self.problem.n_bin
            return np.zeros((0, n)), np.zeros(0)
        lin = np.asarray([c.lin for c in self.feasibility_cuts])
        off = np.asarray([c.offset for c in self.feasibility_cuts])
        return lin, off

    def optimality_arrays(self):
        if not self.optimality_cuts:
            n = self.problem.n_bin
            return np.zeros((0, n)), np.zeros(0)
        lin = np.asarray([c.lin for c in self.optimality_cuts])
        off = np.asarray([c.offset for c in self.optimality_cuts])
        return lin, off

    # -- lifecycle ------------------------------------------------------

    def clone(self):
        """Deep copy sharing the (immutable) problem."""
        other = CutStore(self.problem, self.x_ini, self.theta)
        import copy

        other.feasibility_cuts = copy.deepcopy(self.feasibility_cuts)
        other.optimality_cuts = copy.deepcopy(self.optimality_cuts)
        other.counters = dict(self.counters)
        other._ray_rows = [r.copy() for r in self._ray_rows]
        other._ray_sums = list(self._ray_sums)
        other._dual_rows = [r.copy() for r in self._dual_rows]
        other._dual_norms2 = list(self._dual_norms2)
        return other

    def save(self, path):
        """Versioned binary snapshot, lossless at full double precision."""
        f = self.feasibility_cuts
        o = self.optimality_cuts
        np.savez(
            path,
            format_version=np.int64(STORE_FORMAT_VERSION),
            x_ini=self.x_ini,
            theta=self.theta,
            counters_keys=np.array(sorted(self.counters), dtype=object),
            counters_vals=np.array([self.counters[k] for k in sorted(self.counters)],
                                   dtype=np.int64),
            feas_nu=np.asarray([c.nu for c in f]) if f else np.zeros((0, 0)),
            feas_lam=np.asarray([c.lam for c in f]) if f else np.zeros((0, 0)),
            feas_shift=np.asarray([c.shift_m if c.origin == "shifted" else -1
                                   for c in f], dtype=np.int64),
            opt_f=np.asarray([c.f_star for c in o]),
            opt_nu=np.asarray([c.nu for c in o]) if o else np.zeros((0, 0)),
            opt_lam=np.asarray([c.lam for c in o]) if o else np.zeros((0, 0)),
            opt_delta=np.asarray([c.delta_q for c in o]) if o else np.zeros((0, 0)),
            opt_bq=np.asarray([c.b_q for c in o]) if o else np.zeros((0, 0)),
            opt_dq=np.asarray([c.d_q for c in o]) if o else np.zeros((0, 0)),
        )

    @classmethod
    def load(cls, path, problem: CondensedProblem):
        with np.load(path, allow_pickle=True) as z:
            version = int(z["format_version"])
            if version != STORE_FORMAT_VERSION:
                raise ValueError(f"unsupported store format version {version}")
            store = cls(problem, z["x_ini"], z["theta"])
            shifts = z["feas_shift"]
            for i in range(shifts.size):
                nu = z["feas_nu"][i]
                lam = z["feas_lam"][i]
                origin = "direct" if shifts[i] < 0 else "shifted"
                lin, offset = store._feas_coeff(nu, lam)
                cut = FeasibilityCut(nu=nu, lam=lam, origin=origin,
                                     shift_m=max(int(shifts[i]), 0),
                                     lin=lin, offset=offset)
                store.feasibility_cuts.append(cut)
                v = np.concatenate([nu, lam])
                store._ray_rows.append(v)
                store._ray_sums.append(float(v.sum()))
            for i in range(z["opt_f"].size):
                cut = OptimalityCut(f_star=float(z["opt_f"][i]), nu=z["opt_nu"][i],
                                    lam=z["opt_lam"][i], delta_q=z["opt_delta"][i],
                                    b_q=z["opt_bq"][i], d_q=z["opt_dq"][i])
                store._opt_coeff(cut)
                store.optimality_cuts.append(cut)
                v = np.concatenate([cut.nu, cut.lam])
                store._dual_rows.append(v)
                store._dual_norms2.append(float(v @ v))
            for k, val in zip(z["counters_keys"], z["counters_vals"]):
                store.counters[str(k)] = int(val)
        return store
