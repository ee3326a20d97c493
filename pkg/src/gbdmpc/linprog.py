"""Dense LP kernel with Farkas infeasibility certificates.

Solves
    minimize    c'x
    subject to  A_eq x = b_eq
                C_in x <= d_in
                lo <= x <= hi        (optional, folded into rows)

via a two-phase tableau simplex. Free variables are split, every row
gets an artificial so simplex multipliers can be read off the final
tableau. When phase 1 terminates with a positive objective the problem
is infeasible and the multipliers form a Farkas certificate
(lambda >= 0, A_eq' nu + C' lambda = 0, b_eq' nu + d' lambda < 0).

Pivot rules: steepest-edge (tableau form) for a bounded number of
pivots, then Bland's rule; all ties break to the lowest index, so the
solver is deterministic given identical input bytes.

Bounds handling: finite lo/hi are appended as inequality rows after
C_in. Certificates and duals returned by this module always refer to
(A_eq, C_full) where C_full = rows of C_in followed by bound rows in
the order produced by :meth:`LpProblem.inequality_system`. Problems
without bounds (the Benders subproblem screens) therefore get
certificates over (A_eq, C_in) exactly.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels

FEAS_TOL = 1e-7          # primal/dual feasibility
PIV_TOL = 1e-10          # zero pivot threshold
CERT_LAMBDA_TOL = 1e-9   # allowed negativity of certificate lambda
CERT_CONE_TOL = 1e-7     # ||A'nu + C'lambda||_inf after normalization


class NumericalFailure(RuntimeError):
    """Pivoting stalled or a verification residual came out bad."""


def _as_matrix(M, ncols=None):
    M = np.zeros((0, ncols or 0)) if M is None else np.atleast_2d(np.asarray(M, dtype=float))
    return M


def _as_vector(v):
    return np.zeros(0) if v is None else np.atleast_1d(np.asarray(v, dtype=float))


@dataclass
class LpProblem:
    """Data of a dense LP; rows of C_in are `<=` constraints."""

    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    C_in: Optional[np.ndarray] = None
    d_in: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = _as_vector(self.c)
        n = self.c.size
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_eq = _as_vector(self.b_eq)
        self.C_in = _as_matrix(self.C_in, n)
        self.d_in = _as_vector(self.d_in)
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError("A_eq/b_eq shapes inconsistent with c")
        if self.C_in.shape != (self.d_in.size, n):
            raise ValueError("C_in/d_in shapes inconsistent with c")
        for name in ("lo", "hi"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (n,):
                    raise ValueError(f"{name} must have length {n}")
                setattr(self, name, v)
        for arr in (self.c, self.A_eq, self.b_eq, self.C_in, self.d_in):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError("non-finite entry in LP data")

    @property
    def n(self):
        return self.c.size

    def inequality_system(self):
        """Full (C, d) with bound rows appended: lo rows then hi rows,
        each in variable order, finite bounds only."""
        rows = [self.C_in]
        rhs = [self.d_in]
        n = self.n
        if self.lo is not None:
            idx = np.flatnonzero(np.isfinite(self.lo))
            if idx.size:
                B = np.zeros((idx.size, n))
                B[np.arange(idx.size), idx] = -1.0
                rows.append(B)
                rhs.append(-self.lo[idx])
        if self.hi is not None:
            idx = np.flatnonzero(np.isfinite(self.hi))
            if idx.size:
                B = np.zeros((idx.size, n))
                B[np.arange(idx.size), idx] = 1.0
                rows.append(B)
                rhs.append(self.hi[idx])
        return np.vstack(rows), np.concatenate(rhs)


@dataclass
class FarkasCertificate:
    """Dual ray proving infeasibility, normalized to ||(nu,lambda)||_inf = 1."""

    nu: np.ndarray
    lam: np.ndarray

    def check(self, A_eq, b_eq, C, d):
        """Residuals (min lambda, cone residual, cert value) against a system."""
        cone = A_eq.T @ self.nu + C.T @ self.lam if self.nu.size or self.lam.size else np.zeros(0)
        value = float(b_eq @ self.nu + d @ self.lam)
        lam_min = float(self.lam.min()) if self.lam.size else 0.0
        cone_res = float(np.abs(cone).max()) if cone.size else 0.0
        return lam_min, cone_res, value


@dataclass
class LpDuals:
    """Multipliers for L = c'x + nu'(A_eq x - b_eq) + lam'(C x - d), lam >= 0.

    ``lam`` covers the full inequality system (C_in rows first, then
    bound rows; see LpProblem.inequality_system).
    """

    nu: np.ndarray
    lam: np.ndarray


@dataclass
class Feasible:
    x: np.ndarray


@dataclass
class Infeasible:
    cert: FarkasCertificate


@dataclass
class Optimal:
    x: np.ndarray
    obj: float
    duals: LpDuals


@dataclass
class Unbounded:
    pass


@dataclass
class _Prepared:
    """Preprocessed system: zero rows dropped, rows equilibrated."""

    A: np.ndarray           # stacked [A_eq; C_full], equilibrated
    b: np.ndarray
    n_eq: int
    n_in: int
    scale: np.ndarray        # per kept row, original = scale * equilibrated
    eq_keep: np.ndarray      # kept eq row indices into the original system
    in_keep: np.ndarray
    n_eq_orig: int
    n_in_orig: int
    dropped_rows: int = 0
    trivial_cert: Optional[FarkasCertificate] = None


def _prepare(A_eq, b_eq, C, d):
    n_eq_orig, n_in_orig = A_eq.shape[0], C.shape[0]
    eq_norm = np.abs(A_eq).max(axis=1) if A_eq.size else np.zeros(A_eq.shape[0])
    in_norm = np.abs(C).max(axis=1) if C.size else np.zeros(C.shape[0])

    # zero rows: vacuous or trivially infeasible
    eq_zero = eq_norm <= 0.0
    in_zero = in_norm <= 0.0
    bad_eq = np.flatnonzero(eq_zero & (np.abs(b_eq) > FEAS_TOL))
    if bad_eq.size:
        i = int(bad_eq[0])
        nu = np.zeros(n_eq_orig)
        nu[i] = -np.sign(b_eq[i])
        cert = FarkasCertificate(nu=nu, lam=np.zeros(n_in_orig))
        return _Prepared(A_eq, b_eq, n_eq_orig, n_in_orig, np.ones(0),
                         np.arange(n_eq_orig), np.arange(n_in_orig),
                         n_eq_orig, n_in_orig, trivial_cert=cert)
    bad_in = np.flatnonzero(in_zero & (d < -FEAS_TOL))
    if bad_in.size:
        i = int(bad_in[0])
        lam = np.zeros(n_in_orig)
        lam[i] = 1.0
        cert = FarkasCertificate(nu=np.zeros(n_eq_orig), lam=lam)
        return _Prepared(A_eq, b_eq, n_eq_orig, n_in_orig, np.ones(0),
                         np.arange(n_eq_orig), np.arange(n_in_orig),
                         n_eq_orig, n_in_orig, trivial_cert=cert)

    eq_keep = np.flatnonzero(~eq_zero)
    in_keep = np.flatnonzero(~in_zero)
    dropped = int(eq_zero.sum() + in_zero.sum())

    A = np.vstack([A_eq[eq_keep], C[in_keep]])
    b = np.concatenate([b_eq[eq_keep], d[in_keep]])
    scale = np.concatenate([eq_norm[eq_keep], in_norm[in_keep]])
    A = A / scale[:, None]
    b = b / scale
    return _Prepared(A, b, len(eq_keep), len(in_keep), scale, eq_keep, in_keep,
                     n_eq_orig, n_in_orig, dropped_rows=dropped)


class _Tableau:
    """Two-phase simplex on the prepared system."""

    def __init__(self, prep: _Prepared, c: np.ndarray):
        self.prep = prep
        self.n = c.size
        self.c = c
        m = prep.A.shape[0]
        n = self.n
        self.m = m
        self.sigma = np.where(prep.b >= 0.0, 1.0, -1.0)
        A = prep.A * self.sigma[:, None]
        b = prep.b * self.sigma

        self.col_slack = 2 * n
        self.col_art = 2 * n + prep.n_in
        ncols = self.col_art + m
        T = np.zeros((m + 1, ncols + 1))
        T[:m, :n] = A
        T[:m, n:2 * n] = -A
        if prep.n_in:
            T[prep.n_eq:m, self.col_slack:self.col_art] = (
                np.diag(self.sigma[prep.n_eq:]))
        T[:m, self.col_art:ncols] = np.eye(m)
        T[:m, -1] = b

        # slacks start basic on inequality rows that kept their sign;
        # equality rows and flipped inequality rows get an artificial
        basis = np.arange(self.col_art, ncols, dtype=np.int64)
        art_basic = np.ones(m, dtype=bool)
        for k in range(prep.n_in):
            i = prep.n_eq + k
            if self.sigma[i] > 0.0:
                basis[i] = self.col_slack + k
                art_basic[i] = False
        # phase-1 reduced costs: cost 1 on every artificial, 0 elsewhere
        T[m, :ncols] = -T[:m, :ncols][art_basic].sum(axis=0)
        T[m, self.col_art:ncols] += 1.0
        T[m, -1] = -b[art_basic].sum()
        self.T = T
        self.ncols = ncols
        self.basis = basis
        self.allowed = np.ones(ncols, dtype=np.uint8)
        self.allowed[self.col_art:] = 0  # artificials never enter
        self.pivots_used = 0
        self.max_pivots = 50 * (m + ncols)
        self.steepest_budget = max(200, 4 * (m + self.n))
        # pristine standard-form data for refactorization
        self.A0 = T[:m, :ncols].copy()
        self.b0 = T[:m, -1].copy()
        self.phase1_cost = np.zeros(ncols)
        self.phase1_cost[self.col_art:] = 1.0
        self.cost_row = self.phase1_cost

    def _run(self, price_tol=FEAS_TOL):
        T, basis, allowed = self.T, self.basis, self.allowed
        while True:
            if self.pivots_used < self.steepest_budget:
                col = _kernels.entering_steepest(T, allowed, price_tol)
            else:
                col = _kernels.entering_bland(T, allowed, price_tol)
            if col < 0:
                return "optimal"
            row = _kernels.ratio_test(T, basis, col, PIV_TOL)
            if row < 0:
                return "unbounded"
            _kernels.pivot(T, basis, row, col)
            self.pivots_used += 1
            if self.pivots_used > self.max_pivots:
                raise NumericalFailure(
                    f"simplex exceeded {self.max_pivots} pivots")

    def refactorize(self):
        """Rebuild the tableau numbers from the current basis.

        Elimination drift accumulates in both the objective row and the
        artificial (B^{-1}) columns; a fresh factorization restores
        machine-precision consistency so termination claims and the
        multipliers read off the tableau are trustworthy.
        """
        m = self.m
        B = self.A0[:, self.basis]
        try:
            body = np.linalg.solve(B, np.column_stack([self.A0, self.b0]))
        except np.linalg.LinAlgError as e:
            raise NumericalFailure("singular basis during refactorization") from e
        rhs = body[:, -1]
        neg = -rhs.min(initial=0.0)
        if neg > 1e-6 * (1.0 + np.abs(self.b0).max(initial=0.0)):
            raise NumericalFailure("basis lost primal feasibility; conditioning")
        np.maximum(rhs, 0.0, out=rhs)
        self.T[:m, :self.ncols] = body[:, :-1]
        self.T[:m, -1] = rhs
        c = self.cost_row
        c_b = c[self.basis]
        try:
            y = np.linalg.solve(B.T, c_b)
        except np.linalg.LinAlgError as e:
            raise NumericalFailure("singular basis during refactorization") from e
        self.T[m, :self.ncols] = c - y @ self.A0
        self.T[m, -1] = -float(y @ self.b0)
        for r in range(m):
            j = self.basis[r]
            self.T[:, j] = 0.0
            self.T[r, j] = 1.0

    def _run_stable(self, price_tol, max_rounds=5):
        """Pivot to termination, refactorizing until fresh pricing agrees."""
        for _ in range(max_rounds):
            status = self._run(price_tol=price_tol)
            self.refactorize()
            col = _kernels.entering_bland(self.T, self.allowed, price_tol)
            if col < 0:
                return "optimal"
            if status == "unbounded":
                if _kernels.ratio_test(self.T, self.basis, col, PIV_TOL) < 0:
                    return "unbounded"
            # termination claim was an artifact of drift; keep pivoting
        raise NumericalFailure("pricing failed to stabilize under refactorization")

    def phase1(self):
        # tighter pricing than phase 2: certificate quality scales with it
        self.cost_row = self.phase1_cost
        status = self._run_stable(price_tol=1e-9)
        if status != "optimal":   # phase-1 objective is bounded below by 0
            raise NumericalFailure("phase-1 simplex reported unbounded")
        return -self.T[self.m, -1]

    def multipliers(self, phase1: bool):
        """Row multipliers mapped back to the original row scaling."""
        red_art = np.asarray(self.T[self.m, self.col_art:self.col_art + self.m])
        y = (1.0 - red_art) if phase1 else -red_art
        return self.sigma * y / self.prep.scale

    def drive_out_artificials(self):
        T, basis = self.T, self.basis
        for r in range(self.m):
            if basis[r] >= self.col_art:
                rowvals = np.abs(T[r, :self.col_art])
                j = int(np.argmax(rowvals))
                if rowvals[j] > PIV_TOL:
                    _kernels.pivot(T, basis, r, j)
                # else: redundant row, artificial stays basic at zero level

    def phase2(self):
        T = self.T
        c_full = np.zeros(self.ncols)
        c_full[:self.n] = self.c
        c_full[self.n:2 * self.n] = -self.c
        self.cost_row = c_full
        c_b = c_full[self.basis]
        T[self.m, :self.ncols] = c_full - c_b @ T[:self.m, :self.ncols]
        T[self.m, -1] = -(c_b @ T[:self.m, -1])
        return self._run_stable(price_tol=FEAS_TOL)

    def primal(self):
        x = np.zeros(self.n)
        vals = self.T[:self.m, -1]
        for r in range(self.m):
            j = self.basis[r]
            if j < self.n:
                x[j] += vals[r]
            elif j < 2 * self.n:
                x[j - self.n] -= vals[r]
        return x


def _scatter(values, keep, size):
    out = np.zeros(size)
    out[keep] = values
    return out


def _extract_certificate(prep: _Prepared, tab: _Tableau, A_eq, C):
    v = tab.multipliers(phase1=True)
    nu = _scatter(-v[:prep.n_eq], prep.eq_keep, prep.n_eq_orig)
    lam = _scatter(-v[prep.n_eq:], prep.in_keep, prep.n_in_orig)
    # polish: minimum-norm correction putting (nu, lam) exactly in the
    # dual cone's lineality space, else normalization inflates pricing
    # noise past the certificate tolerance
    M = np.vstack([A_eq, C])
    ray = np.concatenate([nu, lam])
    resid = M.T @ ray
    if np.abs(resid).max(initial=0.0) > 0.0:
        corr = np.linalg.lstsq(M.T, -resid, rcond=None)[0]
        ray = ray + corr
    nu = ray[:nu.size]
    lam = np.maximum(ray[nu.size:], 0.0)  # clip pricing noise
    norm = max(np.abs(nu).max() if nu.size else 0.0,
               np.abs(lam).max() if lam.size else 0.0)
    if norm <= 0.0:
        raise NumericalFailure("degenerate Farkas certificate")
    return FarkasCertificate(nu=nu / norm, lam=lam / norm)


def _verify_certificate(cert, A_eq, b_eq, C, d):
    lam_min, cone_res, value = cert.check(A_eq, b_eq, C, d)
    if lam_min < -CERT_LAMBDA_TOL or cone_res > CERT_CONE_TOL or value >= 0.0:
        raise NumericalFailure(
            "certificate failed verification "
            f"(lam_min={lam_min:.2e}, cone={cone_res:.2e}, value={value:.2e})")


def _verify_point(x, A_eq, b_eq, C, d):
    if A_eq.shape[0]:
        res = np.abs(A_eq @ x - b_eq).max()
        if res > FEAS_TOL * (1.0 + np.abs(b_eq).max(initial=0.0)):
            raise NumericalFailure(f"equality residual {res:.2e} out of tolerance")
    if C.shape[0]:
        viol = (C @ x - d).max()
        if viol > FEAS_TOL * (1.0 + np.abs(d).max(initial=0.0)):
            raise NumericalFailure(f"inequality violation {viol:.2e} out of tolerance")


def solve_feasibility(p: LpProblem):
    """Feasibility test with a Farkas certificate on the infeasible side.

    Returns Feasible(x) or Infeasible(cert); raises NumericalFailure
    instead of ever returning a silently unverified answer.
    """
    C, d = p.inequality_system()
    prep = _prepare(p.A_eq, p.b_eq, C, d)
    if prep.trivial_cert is not None:
        cert = prep.trivial_cert
        _verify_certificate(cert, p.A_eq, p.b_eq, C, d)
        return Infeasible(cert)
    tab = _Tableau(prep, np.zeros(p.n))
    resid = tab.phase1()
    if resid > 1e-9 * (1.0 + np.abs(prep.b).max(initial=0.0)):
        cert = _extract_certificate(prep, tab, p.A_eq, C)
        _verify_certificate(cert, p.A_eq, p.b_eq, C, d)
        return Infeasible(cert)
    x = tab.primal()
    _verify_point(x, p.A_eq, p.b_eq, C, d)
    return Feasible(x)


def solve_lp(p: LpProblem):
    """Optimize; returns Optimal / Infeasible / Unbounded."""
    C, d = p.inequality_system()
    prep = _prepare(p.A_eq, p.b_eq, C, d)
    if prep.trivial_cert is not None:
        cert = prep.trivial_cert
        _verify_certificate(cert, p.A_eq, p.b_eq, C, d)
        return Infeasible(cert)
    tab = _Tableau(prep, p.c)
    resid = tab.phase1()
    if resid > 1e-9 * (1.0 + np.abs(prep.b).max(initial=0.0)):
        cert = _extract_certificate(prep, tab, p.A_eq, C)
        _verify_certificate(cert, p.A_eq, p.b_eq, C, d)
        return Infeasible(cert)
    tab.drive_out_artificials()
    status = tab.phase2()
    if status == "unbounded":
        return Unbounded()
    x = tab.primal()
    _verify_point(x, p.A_eq, p.b_eq, C, d)
    v = tab.multipliers(phase1=False)
    nu = _scatter(-v[:prep.n_eq], prep.eq_keep, prep.n_eq_orig)
    lam = np.maximum(_scatter(-v[prep.n_eq:], prep.in_keep, prep.n_in_orig), 0.0)
    return Optimal(x=x, obj=float(p.c @ x), duals=LpDuals(nu=nu, lam=lam))


@dataclass
class AlternativesResult:
    """Outcome of the theorem-of-alternatives check (test-suite helper)."""

    feasible: bool
    x: Optional[np.ndarray] = None
    cert: Optional[FarkasCertificate] = None
    ray_objective: Optional[float] = None   # min b'nu + d'lam over the boxed dual cone


def _ray_search(A_eq, b_eq, C_in, d_in):
    """min b'nu + d'lam s.t. A'nu + C'lam = 0, nu in [-1,1], lam in [0,1]."""
    l, m = A_eq.shape[0], C_in.shape[0]
    n = A_eq.shape[1] if l else C_in.shape[1]
    G = np.hstack([A_eq.T, C_in.T]) if l + m else np.zeros((n, 0))
    c = np.concatenate([b_eq, d_in])
    lo = np.concatenate([-np.ones(l), np.zeros(m)])
    hi = np.ones(l + m)
    res = solve_lp(LpProblem(c=c, A_eq=G, b_eq=np.zeros(n), lo=lo, hi=hi))
    if not isinstance(res, Optimal):
        raise NumericalFailure("ray-search LP did not solve to optimality")
    return res


def verify_alternatives(A_eq, b_eq, C_in, d_in):
    """Exactly one of: a feasible point exists, or a Farkas certificate exists.

    Returns which side holds together with its witness, after checking
    that the other side is not satisfiable.
    """
    A_eq = _as_matrix(A_eq)
    b_eq = _as_vector(b_eq)
    C_in = _as_matrix(C_in, A_eq.shape[1] if A_eq.size else None)
    d_in = _as_vector(d_in)
    n = A_eq.shape[1] if A_eq.shape[1] else C_in.shape[1]
    p = LpProblem(c=np.zeros(n), A_eq=A_eq, b_eq=b_eq, C_in=C_in, d_in=d_in)
    res = solve_feasibility(p)
    if isinstance(res, Feasible):
        ray = _ray_search(A_eq, b_eq, C_in, d_in)
        if ray.obj < -1e-6:
            raise NumericalFailure(
                f"alternatives both satisfiable: point found yet ray value {ray.obj:.2e}")
        return AlternativesResult(feasible=True, x=res.x, ray_objective=ray.obj)
    # infeasible: the verified certificate itself rules out a feasible point
    return AlternativesResult(feasible=False, cert=res.cert)
