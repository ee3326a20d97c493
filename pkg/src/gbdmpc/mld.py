"""Mixed-logic dynamic systems, horizon condensing, cart-pole instance.

A stage-wise MLD system

    x_{k+1} = E x_k + F u_k + G delta_k
    H1 x_k + H2 u_k + H3 delta_k <= h(theta)

is stacked over a horizon N into one dense equality/inequality pair

    A z = b(x_ini, delta),   C z <= d(theta, delta)

over z = [x_0; u_0; ...; x_{N-1}; u_{N-1}; x_N]. The binary sequence
delta has N stages (delta_N would be unconstrained and cost-free, so it
is dropped). b and d are affine in their arguments and stored as
offset + linear maps, which is what lets the cut store re-parameterize
cached cut coefficients cheaply.
"""

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
import yaml


class DimensionMismatch(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


@dataclass
class MldSystem:
    """Stage matrices plus the theta-parameterized inequality rhs
    h(theta) = h_base + h_theta_map @ theta."""

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    h_base: np.ndarray
    h_theta_map: np.ndarray

    def __post_init__(self):
        for f_ in fields(self):
            setattr(self, f_.name, np.asarray(getattr(self, f_.name), dtype=float))
        n_x = self.E.shape[0]
        if self.E.shape != (n_x, n_x):
            raise DimensionMismatch("E must be square")
        n_u = self.F.shape[1]
        n_d = self.G.shape[1]
        n_c = self.H1.shape[0]
        if self.F.shape != (n_x, n_u) or self.G.shape != (n_x, n_d):
            raise DimensionMismatch("F/G rows must match state dimension")
        if self.H1.shape != (n_c, n_x) or self.H2.shape != (n_c, n_u) \
                or self.H3.shape != (n_c, n_d):
            raise DimensionMismatch("H blocks inconsistent")
        if self.h_base.shape != (n_c,):
            raise DimensionMismatch("h_base length must be n_c")
        if self.h_theta_map.ndim != 2 or self.h_theta_map.shape[0] != n_c:
            raise DimensionMismatch("h_theta_map must be n_c x n_theta")

    @property
    def n_x(self):
        return self.E.shape[0]

    @property
    def n_u(self):
        return self.F.shape[1]

    @property
    def n_delta(self):
        return self.G.shape[1]

    @property
    def n_c(self):
        return self.H1.shape[0]

    @property
    def n_theta(self):
        return self.h_theta_map.shape[1]

    def h(self, theta):
        return self.h_base + self.h_theta_map @ np.asarray(theta, dtype=float)


@dataclass
class CondensedProblem:
    """Horizon-stacked problem data with affine evaluators for b and d.

    b(x_ini, delta) = B_x @ x_ini + B_d @ delta
    d(theta, delta) = d_base + D_theta @ theta + D_delta @ delta
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    N: int
    n_x: int
    n_u: int
    n_delta: int
    n_c: int
    n_theta: int
    B_x: np.ndarray
    B_d: np.ndarray
    d_base: np.ndarray
    D_theta: np.ndarray
    D_delta: np.ndarray

    @property
    def n_bin(self):
        return self.N * self.n_delta

    @property
    def n_var(self):
        return self.N * (self.n_x + self.n_u) + self.n_x

    def b(self, x_ini, delta):
        return self.B_x @ np.asarray(x_ini, dtype=float) + self.B_d @ np.asarray(delta, dtype=float)

    def d(self, theta, delta):
        return (self.d_base + self.D_theta @ np.asarray(theta, dtype=float)
                + self.D_delta @ np.asarray(delta, dtype=float))

    def first_input(self, z):
        """Extract u_0 from a stacked primal vector."""
        return np.asarray(z)[self.n_x:self.n_x + self.n_u]


def condense(sys: MldSystem, N: int, Q_k, R_k, Q_N) -> CondensedProblem:
    """Stack the stage-wise system over horizon N.

    Q_k, R_k, Q_N must be positive definite; the stacked cost is
    diag(Q_k, R_k, ..., Q_k, R_k, Q_N).
    """
    if N < 1:
        raise DimensionMismatch("N must be >= 1")
    Q_k = np.asarray(Q_k, dtype=float)
    R_k = np.asarray(R_k, dtype=float)
    Q_N = np.asarray(Q_N, dtype=float)
    n_x, n_u, n_d, n_c = sys.n_x, sys.n_u, sys.n_delta, sys.n_c
    if Q_k.shape != (n_x, n_x) or R_k.shape != (n_u, n_u) or Q_N.shape != (n_x, n_x):
        raise DimensionMismatch("cost block shapes inconsistent with system")
    for M in (Q_k, R_k, Q_N):
        if np.linalg.eigvalsh((M + M.T) / 2).min() <= 0:
            raise DimensionMismatch("cost blocks must be positive definite")

    n_xu = n_x + n_u
    n_var = N * n_xu + n_x
    n_eq = (N + 1) * n_x

    A = np.zeros((n_eq, n_var))
    A[:n_x, :n_x] = np.eye(n_x)
    for k in range(N):
        r = (k + 1) * n_x
        cx = k * n_xu
        A[r:r + n_x, cx:cx + n_x] = -sys.E
        A[r:r + n_x, cx + n_x:cx + n_xu] = -sys.F
        A[r:r + n_x, cx + n_xu:cx + n_xu + n_x] = np.eye(n_x)

    B_x = np.zeros((n_eq, n_x))
    B_x[:n_x, :] = np.eye(n_x)
    B_d = np.zeros((n_eq, N * n_d))
    for k in range(N):
        B_d[(k + 1) * n_x:(k + 2) * n_x, k * n_d:(k + 1) * n_d] = sys.G

    C = np.zeros((N * n_c, n_var))
    D_delta = np.zeros((N * n_c, N * n_d))
    for k in range(N):
        r = k * n_c
        cx = k * n_xu
        C[r:r + n_c, cx:cx + n_x] = sys.H1
        C[r:r + n_c, cx + n_x:cx + n_xu] = sys.H2
        D_delta[r:r + n_c, k * n_d:(k + 1) * n_d] = -sys.H3
    d_base = np.tile(sys.h_base, N)
    D_theta = np.tile(sys.h_theta_map, (N, 1))

    Q = np.zeros((n_var, n_var))
    for k in range(N):
        c = k * n_xu
        Q[c:c + n_x, c:c + n_x] = Q_k
        Q[c + n_x:c + n_xu, c + n_x:c + n_xu] = R_k
    Q[N * n_xu:, N * n_xu:] = Q_N

    return CondensedProblem(A=A, C=C, Q=Q, N=N, n_x=n_x, n_u=n_u, n_delta=n_d,
                            n_c=n_c, n_theta=sys.n_theta, B_x=B_x, B_d=B_d,
                            d_base=d_base, D_theta=D_theta, D_delta=D_delta)


@dataclass
class CartPoleParams:
    """Cart-pole-with-soft-walls model parameters.

    m_c/m_p/l/k1/k2/u_max/dt/N/g carry the reference experiment values.
    The box-limit and big-M entries (d_min, d_max, v_max, w_max, D_max,
    lambda_max) have no published values; the defaults below are this
    implementation's choices and every field is configurable.
    """

    m_c: float = 1.0            # cart mass [kg]
    m_p: float = 0.4            # pole mass [kg]
    l: float = 0.6              # pole length [m]
    k1: float = 50.0            # right wall stiffness [N/m]
    k2: float = 50.0            # left wall stiffness [N/m]
    u_max: float = 20.0         # force limit [N]
    dt: float = 0.02            # discretization step [s]
    N: int = 10                 # horizon
    g: float = 9.81             # gravity [m/s^2]
    D_max: float = 2.6          # big-M distance, (d_max - d_min) + l
    lambda_max: float = 130.0   # big-M force, k1 * D_max
    d_min: float = -1.0         # cart position limits [m]
    d_max: float = 1.0
    v_max: float = 10.0         # cart velocity limit [m/s]
    w_max: float = 10.0         # pole angular velocity limit [rad/s]

    def __post_init__(self):
        for name in ("m_c", "m_p", "l", "k1", "k2", "u_max", "dt", "g",
                     "D_max", "lambda_max", "v_max", "w_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_min >= self.d_max:
            raise ValueError("d_min must be below d_max")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown cart-pole config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_config(cls, path):
        """Load from a YAML file; accepts flat keys or a `cartpole:` section."""
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if "cartpole" in data:
            data = data["cartpole"]
        return cls.from_dict(data)


def cartpole_mld(p: CartPoleParams) -> MldSystem:
    """Cart-pole with two soft walls as an MLD system.

    State (x1, x2, x3, x4) = cart position, pole angle, and their
    rates; input (u, lam1, lam2) = cart force plus the two contact
    forces; binaries (delta1, delta2) flag right/left wall contact;
    theta = (d1, d2) are the wall distances. Inequality rows: 6 big-M
    contact rows first, then 14 box rows (see below) for n_c = 20.
    """
    dt, g_, l = p.dt, p.g, p.l
    E = np.eye(4) + dt * np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, g_ * p.m_p / p.m_c, 0.0, 0.0],
        [0.0, g_ * (p.m_c + p.m_p) / (l * p.m_c), 0.0, 0.0],
    ])
    F = dt * np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [1.0 / p.m_c, 0.0, 0.0],
        [1.0 / (l * p.m_c), 1.0 / (l * p.m_p), -1.0 / (l * p.m_p)],
    ])
    G = np.zeros((4, 2))

    lam_max, D = p.lambda_max, p.D_max
    H1_contact = np.array([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [-1.0, l, 0.0, 0.0],
        [1.0, -l, 0.0, 0.0],
        [1.0, -l, 0.0, 0.0],
        [-1.0, l, 0.0, 0.0],
    ])
    H2_contact = np.array([
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0 / p.k1, 0.0],
        [0.0, -1.0 / p.k1, 0.0],
        [0.0, 0.0, 1.0 / p.k2],
        [0.0, 0.0, -1.0 / p.k2],
    ])
    H3_contact = np.array([
        [-lam_max, 0.0],
        [0.0, -lam_max],
        [D, 0.0],
        [0.0, 0.0],
        [0.0, D],
        [0.0, 0.0],
    ])
    h_contact = np.array([0.0, 0.0, D, 0.0, D, 0.0])
    h_theta_contact = np.array([
        [0.0, 0.0],
        [0.0, 0.0],
        [-1.0, 0.0],
        [1.0, 0.0],
        [0.0, -1.0],
        [0.0, 1.0],
    ])

    # box rows: +-x1, +-x2, +-x3, +-x4, +-u, lam1<=max, lam2<=max, lam1>=0, lam2>=0
    half_pi = math.pi / 2.0
    H1_box = np.zeros((14, 4))
    H2_box = np.zeros((14, 3))
    h_box = np.zeros(14)
    H1_box[0, 0], h_box[0] = 1.0, p.d_max
    H1_box[1, 0], h_box[1] = -1.0, -p.d_min
    H1_box[2, 1], h_box[2] = 1.0, half_pi
    H1_box[3, 1], h_box[3] = -1.0, half_pi
    H1_box[4, 2], h_box[4] = 1.0, p.v_max
    H1_box[5, 2], h_box[5] = -1.0, p.v_max
    H1_box[6, 3], h_box[6] = 1.0, p.w_max
    H1_box[7, 3], h_box[7] = -1.0, p.w_max
    H2_box[8, 0], h_box[8] = 1.0, p.u_max
    H2_box[9, 0], h_box[9] = -1.0, p.u_max
    H2_box[10, 1], h_box[10] = 1.0, lam_max
    H2_box[11, 2], h_box[11] = 1.0, lam_max
    H2_box[12, 1], h_box[12] = -1.0, 0.0
    H2_box[13, 2], h_box[13] = -1.0, 0.0

    return MldSystem(
        E=E, F=F, G=G,
        H1=np.vstack([H1_contact, H1_box]),
        H2=np.vstack([H2_contact, H2_box]),
        H3=np.vstack([H3_contact, np.zeros((14, 2))]),
        h_base=np.concatenate([h_contact, h_box]),
        h_theta_map=np.vstack([h_theta_contact, np.zeros((14, 2))]),
    )


def riccati_terminal(E, F_col, Q_k, r, tol=1e-8, max_iter=10_000):
    """Terminal cost from the discrete algebraic Riccati fixed point.

    Iterates P <- Q + E'PE - E'PF (r + F'PF)^{-1} F'PE for a single
    actuation column F_col and scalar input weight r.
    """
    E = np.asarray(E, dtype=float)
    Fc = np.asarray(F_col, dtype=float).reshape(-1, 1)
    Q_k = np.asarray(Q_k, dtype=float)
    P = Q_k.copy()
    for _ in range(max_iter):
        PF = P @ Fc
        gain = (r + float(Fc.T @ PF))
        P_next = Q_k + E.T @ P @ E - (E.T @ PF) @ (PF.T @ E) / gain
        P_next = (P_next + P_next.T) / 2.0
        if np.abs(P_next - P).max() <= tol:
            P = P_next
            break
        P = P_next
    else:
        raise NoConvergence(f"Riccati iteration did not settle in {max_iter} steps")
    resid = P - (Q_k + E.T @ P @ E
                 - (E.T @ P @ Fc) @ ((P @ Fc).T @ E) / (r + float(Fc.T @ P @ Fc)))
    if np.abs(resid).max() > tol:
        raise NoConvergence("Riccati residual above tolerance at the fixed point")
    return P


def cartpole_condensed(p: CartPoleParams) -> CondensedProblem:
    """Full pipeline: cart-pole MLD, DARE terminal cost, condensing.

    The terminal cost uses only the actuation column of F (the contact
    forces are not free actuators). R_k = I_3 penalizes all three
    inputs.
    """
    sys = cartpole_mld(p)
    Q_k = np.eye(4)
    R_k = np.eye(3)
    Q_N = riccati_terminal(sys.E, sys.F[:, 0], Q_k, 1.0)
    return condense(sys, p.N, Q_k, R_k, Q_N)
