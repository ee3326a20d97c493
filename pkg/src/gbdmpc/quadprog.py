"""Dense convex QP solver (primal active set, Cholesky KKT core).

Problem form (pure quadratic objective, positive definite Q):

    minimize    x' Q x
    subject to  A_eq x  = b_eq
                C_in x <= d_in

Multiplier convention matches the Lagrangian
    L = x'Qx + nu'(A_eq x - b_eq) + lam'(C_in x - d_in),  lam >= 0,
so stationarity reads 2 Q x* + A_eq' nu* + C_in' lam* = 0. Exact
multipliers at termination are the point of this method: the Benders
cut formulas consume them directly.

Each equality-constrained subsolve goes through a range-space KKT
solve with one iterative-refinement pass, keeping duality gaps near
machine precision.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .linprog import (FEAS_TOL, Feasible, Infeasible, LpProblem,
                      NumericalFailure, solve_feasibility)

KKT_TOL = 1e-6       # relative KKT residual accepted on return
STEP_TOL = 1e-9      # ||p||_inf below this counts as a null step
MULT_TOL = 1e-9      # allowed negativity of working-set multipliers


class MaxIterations(RuntimeError):
    """Active-set loop exceeded its iteration cap (cycling/conditioning)."""


class NotPositiveDefinite(ValueError):
    """Q failed the Cholesky test."""


@dataclass
class QpProblem:
    Q: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    C_in: Optional[np.ndarray] = None
    d_in: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        n = self.Q.shape[0]
        if self.Q.shape != (n, n):
            raise ValueError("Q must be square")
        scale = max(1.0, np.abs(self.Q).max())
        if np.abs(self.Q - self.Q.T).max() > 1e-12 * scale:
            raise ValueError("Q must be symmetric within 1e-12")
        self.A_eq = (np.zeros((0, n)) if self.A_eq is None
                     else np.atleast_2d(np.asarray(self.A_eq, dtype=float)))
        self.b_eq = (np.zeros(0) if self.b_eq is None
                     else np.atleast_1d(np.asarray(self.b_eq, dtype=float)))
        self.C_in = (np.zeros((0, n)) if self.C_in is None
                     else np.atleast_2d(np.asarray(self.C_in, dtype=float)))
        self.d_in = (np.zeros(0) if self.d_in is None
                     else np.atleast_1d(np.asarray(self.d_in, dtype=float)))
        if self.A_eq.shape != (self.b_eq.size, n) or self.C_in.shape != (self.d_in.size, n):
            raise ValueError("constraint shapes inconsistent with Q")

    @property
    def n(self):
        return self.Q.shape[0]


@dataclass
class QpSolution:
    x_star: np.ndarray
    nu_star: np.ndarray
    lambda_star: np.ndarray
    f_star: float


@dataclass
class QpInfeasible:
    cert: object   # FarkasCertificate from the internal feasibility screen


def _chol(Q):
    try:
        return scipy.linalg.cho_factor(Q, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefinite("Q is not positive definite") from e


def _kkt_solve(choQ, K, f, g):
    """Solve 2Q z + K'mu = f, K z = g (Q via its Cholesky factor)."""
    if K.shape[0] == 0:
        return 0.5 * scipy.linalg.cho_solve(choQ, f, check_finite=False), np.zeros(0)
    Yt = scipy.linalg.cho_solve(choQ, K.T, check_finite=False)   # Q^{-1} K'
    S = K @ Yt
    rhs = K @ scipy.linalg.cho_solve(choQ, f, check_finite=False) - 2.0 * g
    try:
        choS = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
        mu = scipy.linalg.cho_solve(choS, rhs, check_finite=False)
    except scipy.linalg.LinAlgError:
        # near-dependent working set; least-squares keeps the step usable
        mu = np.linalg.lstsq(S, rhs, rcond=None)[0]
    z = 0.5 * scipy.linalg.cho_solve(choQ, f - K.T @ mu, check_finite=False)
    return z, mu


def _kkt_solve_refined(choQ, Q, K, g):
    """EQP solve (f = 0) plus one iterative-refinement pass."""
    z, mu = _kkt_solve(choQ, K, np.zeros(Q.shape[0]), g)
    r1 = -(2.0 * Q @ z + (K.T @ mu if K.shape[0] else 0.0))
    r2 = g - K @ z if K.shape[0] else np.zeros(0)
    dz, dmu = _kkt_solve(choQ, K, r1, r2)
    return z + dz, mu + dmu


def solve_qp(p: QpProblem, x0=None, max_iter=None):
    """Solve the QP; returns QpSolution or QpInfeasible.

    ``x0`` is a feasible warm-start point (normally the dual-simplex
    feasibility point). Without it an LP screen runs first, so the
    Infeasible outcome only appears when the caller skipped that screen.
    """
    n = p.n
    choQ = _chol(p.Q)
    if x0 is None:
        res = solve_feasibility(LpProblem(c=np.zeros(n), A_eq=p.A_eq, b_eq=p.b_eq,
                                          C_in=p.C_in, d_in=p.d_in))
        if isinstance(res, Infeasible):
            return QpInfeasible(cert=res.cert)
        x0 = res.x
    x = np.asarray(x0, dtype=float).copy()

    l, m = p.A_eq.shape[0], p.C_in.shape[0]
    cap = max_iter if max_iter is not None else 50 * (n + l + m)
    work = []   # sorted working-set indices into C_in

    for _ in range(cap):
        K = np.vstack([p.A_eq, p.C_in[work]]) if (l or work) else np.zeros((0, n))
        rhs = np.concatenate([p.b_eq, p.d_in[work]])
        z, mu = _kkt_solve_refined(choQ, p.Q, K, rhs)
        step = z - x
        if np.abs(step).max(initial=0.0) <= STEP_TOL * (1.0 + np.abs(x).max(initial=0.0)):
            lam_w = mu[l:]
            if lam_w.size == 0 or lam_w.min() >= -MULT_TOL:
                nu = mu[:l]
                lam = np.zeros(m)
                if work:
                    lam[work] = np.maximum(lam_w, 0.0)
                x = z
                f_star = float(x @ p.Q @ x)
                _verify_kkt(p, x, nu, lam)
                return QpSolution(x_star=x, nu_star=nu, lambda_star=lam, f_star=f_star)
            work.pop(int(np.argmin(lam_w)))
        else:
            alpha = 1.0
            blocker = -1
            cx = p.C_in @ x if m else np.zeros(0)
            cp = p.C_in @ step if m else np.zeros(0)
            in_work = np.zeros(m, dtype=bool)
            in_work[work] = True
            for i in range(m):
                if in_work[i] or cp[i] <= 1e-12:
                    continue
                a = max((p.d_in[i] - cx[i]) / cp[i], 0.0)
                if a < alpha:
                    alpha = a
                    blocker = i
            x = x + alpha * step
            if blocker >= 0:
                work.append(blocker)
                work.sort()
    raise MaxIterations(f"active-set loop exceeded {cap} iterations")


def _verify_kkt(p, x, nu, lam):
    xs = 1.0 + np.abs(x).max(initial=0.0)
    stat = 2.0 * p.Q @ x
    if nu.size:
        stat = stat + p.A_eq.T @ nu
    if lam.size:
        stat = stat + p.C_in.T @ lam
    if np.abs(stat).max(initial=0.0) > KKT_TOL * xs:
        raise NumericalFailure(f"QP stationarity residual {np.abs(stat).max():.2e}")
    if p.C_in.shape[0]:
        slack = p.C_in @ x - p.d_in
        if slack.max(initial=0.0) > KKT_TOL * (1.0 + np.abs(p.d_in).max(initial=0.0)):
            raise NumericalFailure("QP primal feasibility violated")
        comp = np.abs(lam * slack).max(initial=0.0)
        if comp > KKT_TOL * (1.0 + abs(float(x @ p.Q @ x))):
            raise NumericalFailure(f"QP complementarity residual {comp:.2e}")


def unconstrained_minimizer(Q, A_eq, C_in, nu, lam=None):
    """Stationary point of the Lagrangian in x:  -1/2 Q^{-1}(A'nu + C'lam)."""
    Q = np.asarray(Q, dtype=float)
    choQ = _chol(Q)
    w = np.zeros(Q.shape[0])
    if A_eq is not None and nu is not None and np.size(nu):
        w = w + np.atleast_2d(np.asarray(A_eq, dtype=float)).T @ np.atleast_1d(nu)
    if C_in is not None and lam is not None and np.size(lam):
        w = w + np.atleast_2d(np.asarray(C_in, dtype=float)).T @ np.atleast_1d(lam)
    return -0.5 * scipy.linalg.cho_solve(choQ, w, check_finite=False)


def dual_objective(Q, A_eq, C_in, b, d, nu, lam):
    """Lagrange dual value -1/4 ||A'nu + C'lam||^2_{Q^{-1}} - b'nu - d'lam."""
    Q = np.asarray(Q, dtype=float)
    choQ = _chol(Q)
    nu = np.atleast_1d(np.asarray(nu, dtype=float)) if nu is not None else np.zeros(0)
    lam = np.atleast_1d(np.asarray(lam, dtype=float)) if lam is not None else np.zeros(0)
    w = np.zeros(Q.shape[0])
    val = 0.0
    if nu.size:
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        w = w + A_eq.T @ nu
        val -= float(np.asarray(b, dtype=float) @ nu)
    if lam.size:
        C_in = np.atleast_2d(np.asarray(C_in, dtype=float))
        w = w + C_in.T @ lam
        val -= float(np.asarray(d, dtype=float) @ lam)
    val -= 0.25 * float(w @ scipy.linalg.cho_solve(choQ, w, check_finite=False))
    return val
