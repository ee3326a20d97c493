"""Closed-loop plant: linear cart-pole + spring walls + Euler stepping.

The plant computes its own contact forces from the spring law; the
controller's planned forces never touch the state. Wall motion is a
sinusoid plus an integrated Gaussian random walk, clamped so the walls
stay reachable.
"""

import math
from dataclasses import dataclass

import numpy as np

from .mld import CartPoleParams, MldSystem, cartpole_mld

WALL_MARGIN = 0.05


@dataclass
class WallConfig:
    d_off_1: float = 0.35       # base offsets [m]
    d_off_2: float = 0.35
    amplitude: float = 0.05     # sinusoid amplitude A [m]
    frequency: float = math.pi  # w [rad/s]
    phase: float = 0.0          # theta_1 [rad]
    walk_sigma: float = 0.002   # random-walk step std [m]


class WallState:
    """Integrated random-walk offsets m_1, m_2 plus their RNG."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.m1 = 0.0
        self.m2 = 0.0


def wall_motion(t, walk_state: WallState, cfg: WallConfig, params: CartPoleParams):
    """Advance the walk one step and return clamped wall distances."""
    walk_state.m1 += walk_state.rng.normal(0.0, cfg.walk_sigma)
    walk_state.m2 += walk_state.rng.normal(0.0, cfg.walk_sigma)
    s = cfg.amplitude * math.sin(cfg.frequency * t + cfg.phase)
    lo, hi = WALL_MARGIN, params.d_max - WALL_MARGIN
    d1 = min(max(cfg.d_off_1 + s + walk_state.m1, lo), hi)
    d2 = min(max(cfg.d_off_2 + s + walk_state.m2, lo), hi)
    return d1, d2


def contact_forces(x, d1, d2, params: CartPoleParams):
    """Spring law at the linearized tip position x1 - l*x2."""
    tip = x[0] - params.l * x[1]
    lam1 = params.k1 * max(0.0, tip - d1)
    lam2 = params.k2 * max(0.0, -tip - d2)
    return lam1, lam2


def plant_step(x, u_force, d1, d2, n_torque, params: CartPoleParams,
               sys: MldSystem = None):
    """One forward-Euler step of the linearized model.

    The disturbance torque enters the pole angular acceleration as
    n / (l * m_p) over one step.
    """
    if sys is None:
        sys = cartpole_mld(params)
    x = np.asarray(x, dtype=float)
    lam1, lam2 = contact_forces(x, d1, d2, params)
    x_next = sys.E @ x + sys.F @ np.array([u_force, lam1, lam2])
    x_next[3] += n_torque / (params.l * params.m_p) * params.dt
    return x_next
