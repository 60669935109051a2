"""Ground-truth environment: arena geometry, actions, true dynamics, stepper.

Everything is written against ``(n, 9)`` state arrays so the same kernels
serve the single-agent simulation and the lockstep batches used by the
oracle. The scalar helpers wrap a batch of one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .config import RunConfig
from .core import N_INTERNAL, N_STATE, Zeta

TWO_PI = 2.0 * math.pi
LOCK_SNAP = 1e-9
HEADING = 8


class Action(IntEnum):
    """Elementary actions; the enum order is the tie-break order."""

    WALK = 0
    RUN = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3
    CONSUME_1 = 4
    CONSUME_2 = 5
    CONSUME_3 = 6
    CONSUME_4 = 7
    REST = 8
    SLEEP = 9

    @classmethod
    def consume(cls, i: int) -> Action:
        if not 1 <= i <= 4:
            raise ValueError("resource index must be 1..4")
        return cls(cls.CONSUME_1 + i - 1)

    @property
    def resource(self) -> int | None:
        if Action.CONSUME_1 <= self <= Action.CONSUME_4:
            return int(self) - int(Action.CONSUME_1) + 1
        return None


N_ACTIONS = len(Action)
ALL_ACTIONS = tuple(Action)
# plain ints for the compiled kernels
WALK_ID, RUN_ID, TURN_LEFT_ID, TURN_RIGHT_ID = 0, 1, 2, 3
CONSUME_1_ID, REST_ID, SLEEP_ID = 4, 8, 9


class InadmissibleActionError(ValueError):
    pass


class WorldState(NamedTuple):
    zeta: Zeta
    sleep_lock: float = 0.0
    clock: float = 0.0


def initial_state(cfg: RunConfig) -> WorldState:
    """Agent at its set point, placed at the configured start pose."""
    return WorldState(
        Zeta.from_parts([0.0] * N_INTERNAL, [cfg.start_x, cfg.start_y, cfg.start_heading % TWO_PI]),
        0.0,
        0.0,
    )


@dataclass
class WorldBatch:
    zeta: np.ndarray  # (n, 9)
    sleep_lock: np.ndarray  # (n,)
    clock: np.ndarray  # (n,)

    def __len__(self) -> int:
        return self.zeta.shape[0]

    @classmethod
    def from_states(cls, states: Sequence[WorldState]) -> WorldBatch:
        return cls(
            np.array([s.zeta for s in states], dtype=float).reshape(-1, N_STATE),
            np.array([s.sleep_lock for s in states], dtype=float),
            np.array([s.clock for s in states], dtype=float),
        )

    def state(self, i: int) -> WorldState:
        return WorldState(Zeta.from_array(self.zeta[i]), float(self.sleep_lock[i]), float(self.clock[i]))

    def states(self) -> list[WorldState]:
        return [self.state(i) for i in range(len(self))]


# --------------------------------------------------------------------------
# geometry


@njit(cache=True)
def _inside(px, py, x1, y1, x2, y2):
    n = x1.shape[0]
    crossings = 0
    for k in range(n):
        ax, ay, bx, by = x1[k], y1[k], x2[k], y2[k]
        # boundary counts as outside; exact test, so points a hair inside a
        # wall stay inside (the arena's axis-aligned edges make this exact)
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if cross == 0.0 and min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by):
            return False
        if (ay > py) != (by > py):
            if px < ax + (py - ay) * (bx - ax) / (by - ay):
                crossings += 1
    return crossings % 2 == 1


def _edges(vertices) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    return (np.ascontiguousarray(v[:, 0]), np.ascontiguousarray(v[:, 1]),
            np.ascontiguousarray(w[:, 0]), np.ascontiguousarray(w[:, 1]))


def points_in_polygon(points, vertices) -> np.ndarray:
    """Even-odd (ray casting) containment for an (n, 2) array; boundary is outside."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x1, y1, x2, y2 = _edges(vertices)
    return np.array([_inside(px, py, x1, y1, x2, y2) for px, py in p], dtype=bool)


def point_in_polygon(p, vertices) -> bool:
    return bool(points_in_polygon([p], vertices)[0])


def point_in_arena(p, arena) -> bool:
    return point_in_polygon(p, arena)


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + math.pi) % TWO_PI - math.pi


def in_view(pose, p, cfg: RunConfig) -> bool:
    x, y, heading = pose
    dx, dy = p[0] - x, p[1] - y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return True
    if dist > cfg.view_range:
        return False
    offset = float(wrap_angle(math.atan2(dy, dx) - heading))
    return abs(offset) <= cfg.view_half_angle


# --------------------------------------------------------------------------
# per-config parameter arrays

# layout of the scalar parameter vector handed to the kernels
_RUN_BLOCK, _WALK_BLOCK, _FORCED_SLEEP, _T_SLEEP = range(4)


class _Params:
    def __init__(self, cfg: RunConfig):
        self.x_star = np.asarray(cfg.x_star, dtype=float)
        self.decay = np.array(list(cfg.decay) + [cfg.r_muscle, 0.0])
        self.lo = np.array([-x for x in cfg.x_star[:4]] + [0.0, 0.0])
        self.hi = np.array([cfg.x_max - x for x in cfg.x_star[:4]] + [cfg.fatigue_max] * 2)
        self.edges = _edges(cfg.arena)
        self.site_xy = np.array([s[:2] for s in cfg.sites], dtype=float)
        self.site_r2 = np.array([s[2] ** 2 for s in cfg.sites], dtype=float)
        # heading-independent part of each action's control
        base = np.zeros((N_ACTIONS, N_STATE))
        base[:, 5] = cfg.sigma_wake
        base[Action.WALK, :4] = -cfg.rho_walk
        base[Action.WALK, 4] = cfg.kappa_walk
        base[Action.RUN, :4] = -cfg.rho_run
        base[Action.RUN, 4] = cfg.kappa_run
        base[Action.TURN_LEFT, HEADING] = cfg.omega
        base[Action.TURN_RIGHT, HEADING] = -cfg.omega
        for i in range(4):
            base[Action.CONSUME_1 + i, i] = cfg.m_consume
        base[Action.SLEEP, 5] = -cfg.sigma_sleep
        self.base_control = base
        self.speed = np.zeros(N_ACTIONS)
        self.speed[Action.WALK] = cfg.v_walk
        self.speed[Action.RUN] = cfg.v_run
        self.scalars = np.array([cfg.run_block, cfg.walk_block, cfg.forced_sleep, cfg.t_sleep_min])


def params(cfg: RunConfig) -> _Params:
    prm = cfg.__dict__.get("_params")
    if prm is None:
        prm = _Params(cfg)
        object.__setattr__(cfg, "_params", prm)
    return prm


# --------------------------------------------------------------------------
# kernels (one row at a time, looped over the batch)


@njit(cache=True)
def _admissible_row(z, lock, x_star, site_xy, site_r2, scalars, out):
    muscle = z[4] + x_star[4]
    sleepy = z[5] + x_star[5]
    for a in range(N_ACTIONS):
        out[a] = False
    out[SLEEP_ID] = True
    if sleepy >= scalars[_FORCED_SLEEP] or lock > 0.0:
        return
    out[WALK_ID] = muscle < scalars[_WALK_BLOCK]
    out[RUN_ID] = muscle < scalars[_RUN_BLOCK]
    out[TURN_LEFT_ID] = True
    out[TURN_RIGHT_ID] = True
    out[REST_ID] = True
    for s in range(site_xy.shape[0]):
        dx = z[6] - site_xy[s, 0]
        dy = z[7] - site_xy[s, 1]
        out[CONSUME_1_ID + s] = dx * dx + dy * dy <= site_r2[s]


@njit(cache=True)
def _admissible_kernel(zeta, lock, x_star, site_xy, site_r2, scalars):
    n = zeta.shape[0]
    mask = np.empty((n, N_ACTIONS), dtype=np.bool_)
    for i in range(n):
        _admissible_row(zeta[i], lock[i], x_star, site_xy, site_r2, scalars, mask[i])
    return mask


@njit(cache=True)
def _control_row(z, a, base_control, speed, out):
    for j in range(N_STATE):
        out[j] = base_control[a, j]
    out[6] = speed[a] * math.cos(z[HEADING])
    out[7] = speed[a] * math.sin(z[HEADING])


@njit(cache=True)
def _f_row(z, u, x_star, decay, out):
    for j in range(N_STATE):
        out[j] = u[j]
    for j in range(N_INTERNAL):
        out[j] -= decay[j] * (z[j] + x_star[j])


@njit(cache=True)
def _controls_kernel(zeta, actions, base_control, speed):
    n = zeta.shape[0]
    u = np.empty((n, N_STATE))
    for i in range(n):
        _control_row(zeta[i], actions[i], base_control, speed, u[i])
    return u


@njit(cache=True)
def _f_kernel(zeta, u, x_star, decay):
    n = zeta.shape[0]
    out = np.empty((n, N_STATE))
    for i in range(n):
        _f_row(zeta[i], u[i], x_star, decay, out[i])
    return out


@njit(cache=True)
def _step_kernel(zeta, lock, clock, actions, dt, check, x_star, decay, lo, hi,
                 x1, y1, x2, y2, site_xy, site_r2, base_control, speed, scalars):
    n = zeta.shape[0]
    new = np.empty_like(zeta)
    new_lock = np.empty(n)
    new_clock = np.empty(n)
    mask = np.empty(N_ACTIONS, dtype=np.bool_)
    u = np.empty(N_STATE)
    f = np.empty(N_STATE)
    for i in range(n):
        z = zeta[i]
        a = actions[i]
        if check:
            _admissible_row(z, lock[i], x_star, site_xy, site_r2, scalars, mask)
            if not mask[a]:
                return new, new_lock, new_clock, i
        _control_row(z, a, base_control, speed, u)
        _f_row(z, u, x_star, decay, f)
        row = new[i]
        for j in range(N_STATE):
            row[j] = z[j] + f[j] * dt
        for j in range(N_INTERNAL):
            row[j] = min(max(row[j], lo[j]), hi[j])
        h = row[HEADING] % TWO_PI
        if h >= TWO_PI:
            h = 0.0
        row[HEADING] = h
        if row[6] != z[6] or row[7] != z[7]:
            if not _inside(row[6], row[7], x1, y1, x2, y2):
                row[6] = z[6]
                row[7] = z[7]
        lk = lock[i]
        if a == SLEEP_ID and lk <= 0.0:
            lk = scalars[_T_SLEEP]
        lk -= dt
        if lk < LOCK_SNAP:
            lk = 0.0
        new_lock[i] = lk
        new_clock[i] = clock[i] + dt
    return new, new_lock, new_clock, -1


# --------------------------------------------------------------------------
# batch API


def admissible_mask(zeta: np.ndarray, sleep_lock: np.ndarray, cfg: RunConfig) -> np.ndarray:
    """(n, N_ACTIONS) boolean mask of admissible actions."""
    prm = params(cfg)
    zeta = np.ascontiguousarray(np.atleast_2d(zeta), dtype=float)
    lock = np.ascontiguousarray(np.atleast_1d(sleep_lock), dtype=float)
    return _admissible_kernel(zeta, lock, prm.x_star, prm.site_xy, prm.site_r2, prm.scalars)


def controls(zeta: np.ndarray, actions, cfg: RunConfig) -> np.ndarray:
    """(n, 9) control rates for per-row actions; no admissibility check."""
    prm = params(cfg)
    zeta = np.ascontiguousarray(np.atleast_2d(zeta), dtype=float)
    actions = np.ascontiguousarray(np.atleast_1d(actions), dtype=np.int64)
    if zeta.shape[0] == 1 and actions.shape[0] > 1:
        zeta = np.repeat(zeta, actions.shape[0], axis=0)
    return _controls_kernel(zeta, actions, prm.base_control, prm.speed)


def true_f(zeta, u, cfg: RunConfig) -> np.ndarray:
    """A(zeta) + u: metabolic decay of resources, muscle recovery, plus control."""
    prm = params(cfg)
    z = np.asarray(zeta, dtype=float)
    single = z.ndim == 1
    z2 = np.ascontiguousarray(np.atleast_2d(z))
    u2 = np.ascontiguousarray(np.broadcast_to(np.asarray(u, dtype=float), z2.shape))
    out = _f_kernel(z2, u2, prm.x_star, prm.decay)
    return out[0] if single else out


def step_batch(batch: WorldBatch, actions, cfg: RunConfig, dt: float | None = None,
               check: bool = True) -> WorldBatch:
    """Euler step of every row, then wrap, clip, wall revert and sleep lock."""
    prm = params(cfg)
    dt = cfg.dt if dt is None else float(dt)
    actions = np.ascontiguousarray(np.atleast_1d(actions), dtype=np.int64)
    x1, y1, x2, y2 = prm.edges
    new, lock, clock, bad = _step_kernel(
        np.ascontiguousarray(batch.zeta, dtype=float), np.ascontiguousarray(batch.sleep_lock, dtype=float),
        np.ascontiguousarray(batch.clock, dtype=float), actions, dt, check,
        prm.x_star, prm.decay, prm.lo, prm.hi, x1, y1, x2, y2,
        prm.site_xy, prm.site_r2, prm.base_control, prm.speed, prm.scalars)
    if bad >= 0:
        raise InadmissibleActionError(f"{Action(actions[bad]).name} not admissible (row {bad})")
    return WorldBatch(new, lock, clock)


# --------------------------------------------------------------------------
# scalar wrappers


def admissible_actions(state: WorldState, cfg: RunConfig) -> tuple[Action, ...]:
    mask = admissible_mask(np.asarray(state.zeta, dtype=float)[None, :], np.array([state.sleep_lock]), cfg)[0]
    return tuple(a for a in ALL_ACTIONS if mask[a])


def control_of_action(state: WorldState, action: Action, cfg: RunConfig) -> np.ndarray:
    if action not in admissible_actions(state, cfg):
        raise InadmissibleActionError(f"{Action(action).name} not admissible")
    return controls(np.asarray(state.zeta, dtype=float)[None, :], [int(action)], cfg)[0]


def step(state: WorldState, action: Action, cfg: RunConfig, dt: float | None = None) -> WorldState:
    out = step_batch(WorldBatch.from_states([state]), [int(action)], cfg, dt)
    return out.state(0)
