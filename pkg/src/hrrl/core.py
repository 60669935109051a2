"""Drive and reward calculus for homeostatic regulation.

The agent's internal deviation is ``delta = x - x_star``. Its drive is the
Euclidean magnitude of that deviation (optionally smoothed so the gradient
exists at the set point) and the reward is the negative rate of change of
the drive. A trajectory's discounted reward and discounted drive are tied
by ``V = d(delta_0) + ln(gamma) * J``.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

EPS_SMOOTH = 1e-8
SINGULAR_FLOOR = 1e-12

N_INTERNAL = 6
N_EXTERNAL = 3
N_STATE = N_INTERNAL + N_EXTERNAL


class SingularityError(ArithmeticError):
    """Raised when a closed form is evaluated at the exact set point."""


class ExternalState(NamedTuple):
    pos_x: float
    pos_y: float
    heading: float


class Zeta(NamedTuple):
    """Full world vector, flattened as [d1..d6, pos_x, pos_y, heading]."""

    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float
    pos_x: float
    pos_y: float
    heading: float

    @property
    def delta(self) -> tuple[float, ...]:
        return tuple(self[:N_INTERNAL])

    @property
    def external(self) -> ExternalState:
        return ExternalState(self.pos_x, self.pos_y, self.heading)

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> Zeta:
        if len(arr) != N_STATE:
            raise ValueError(f"expected {N_STATE} components, got {len(arr)}")
        return cls(*(float(v) for v in arr))

    @classmethod
    def from_parts(cls, delta: Sequence[float], external: Sequence[float]) -> Zeta:
        if len(delta) != N_INTERNAL or len(external) != N_EXTERNAL:
            raise ValueError("delta must have 6 and external 3 components")
        return cls(*(float(v) for v in delta), *(float(v) for v in external))


def drive(delta, eps_smooth: float = 0.0) -> float:
    """sqrt(eps + delta.delta); accepts any 1-D sequence."""
    if eps_smooth < 0:
        raise ValueError("eps_smooth must be nonnegative")
    d = np.asarray(delta, dtype=float)
    return math.sqrt(eps_smooth + float(d @ d))


def drive_batch(delta: np.ndarray, eps_smooth: float = 0.0) -> np.ndarray:
    """Row-wise drive for an (n, k) array."""
    delta = np.asarray(delta, dtype=float)
    return np.sqrt(eps_smooth + np.einsum("ij,ij->i", delta, delta))


def reward_from_transition(delta_prev, delta_next, dt: float, eps_smooth: float = 0.0) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return -(drive(delta_next, eps_smooth) - drive(delta_prev, eps_smooth)) / dt


def constant_control_drive(t: float, m: float, delta0) -> float:
    """Drive at time t while resource 1 is consumed at a constant rate m.

    Self-regulation is neglected, so ``delta_t = delta0 + t*[m, 0, ...]``.
    """
    d0 = np.asarray(delta0, dtype=float)
    q = t * t * m * m + 2.0 * t * m * d0[0] + float(d0 @ d0)
    # q equals |delta0 + t*u|^2, tiny negatives are round-off
    return math.sqrt(max(q, 0.0))


def constant_control_reward(t: float, m: float, delta0) -> float:
    if m == 0:
        return 0.0
    denom = constant_control_drive(t, m, delta0)
    if denom < SINGULAR_FLOOR:
        raise SingularityError(f"drive vanishes at t={t}")
    d0 = np.asarray(delta0, dtype=float)
    return -(d0[0] + t * m) * m / denom


def value_from_deviation(drive_now: float, j_value: float, gamma: float) -> float:
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return drive_now + math.log(gamma) * j_value
