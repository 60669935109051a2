"""Numerical evaluation of discounted drive (J) and discounted reward (V).

Rollouts run the true world under a fixed policy and integrate both
quantities along the same trajectory, so ``V - d0 - ln(gamma) J`` isolates
quadrature error. Many rollouts are stepped in lockstep as one batch.

Two quadratures are available. ``"left"`` is the plain left-Riemann sum
(first order). ``"trapezoid"`` (the default) applies the trapezoid rule to
the discount kernel on each step; combined with the per-step reward
``-(d_{k+1} - d_k)/h`` it makes the identity gap second order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .config import RunConfig
from .core import N_INTERNAL, drive_batch
from .world import (
    TWO_PI,
    Action,
    WorldBatch,
    WorldState,
    admissible_actions,
    admissible_mask,
    points_in_polygon,
    step_batch,
)

DriveFn = Callable[[np.ndarray], np.ndarray]
StepFn = Callable[[WorldBatch, np.ndarray, RunConfig, float], WorldBatch]


class PolicyFn(Protocol):
    name: str

    def __call__(self, state: WorldState, cfg: RunConfig) -> Action: ...


# ----------------------------------------------------------------------
# policies


class RestPolicy:
    """Rest whenever possible, otherwise sleep."""

    name = "rest"

    def __call__(self, state: WorldState, cfg: RunConfig) -> Action:
        return Action.REST if Action.REST in admissible_actions(state, cfg) else Action.SLEEP

    def batch(self, wb: WorldBatch, cfg: RunConfig, mask: np.ndarray | None = None) -> np.ndarray:
        if mask is None:
            mask = admissible_mask(wb.zeta, wb.sleep_lock, cfg)
        return np.where(mask[:, Action.REST], int(Action.REST), int(Action.SLEEP))


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _pick_admissible(mask: np.ndarray, u: np.ndarray) -> np.ndarray:
    counts = mask.sum(axis=1)
    j = np.minimum((u * counts).astype(np.int64), counts - 1)
    return np.argmax(np.cumsum(mask, axis=1) > j[:, None], axis=1)


class RandomPolicy:
    """Uniform admissible action, redrawn every ``hold`` time units.

    The draw is a hash of (seed, clock // hold), so the policy is a pure
    function of the state and does not depend on the integration step.
    """

    def __init__(self, seed: int, hold: float = 0.05):
        if hold <= 0:
            raise ValueError("hold must be positive")
        self.seed = int(seed)
        self.hold = float(hold)
        self.name = f"random{self.seed}"
        self._last = None

    def _uniform(self, clock: np.ndarray) -> np.ndarray:
        k = np.floor(np.asarray(clock, dtype=float) / self.hold + 1e-9).astype(np.int64)
        # lockstep rollouts share a clock, so the draw usually repeats
        if self._last is not None and np.array_equal(k, self._last[0]):
            return self._last[1]
        with np.errstate(over="ignore"):
            key = np.uint64(self.seed & 0xFFFFFFFF) * np.uint64(0x100000001B3) + k.astype(np.uint64)
            z = _splitmix64(_splitmix64(np.atleast_1d(key)))
        u = (z >> np.uint64(11)).astype(float) * 2.0 ** -53
        self._last = (k, u)
        return u

    def __call__(self, state: WorldState, cfg: RunConfig) -> Action:
        mask = admissible_mask(np.asarray(state.zeta, dtype=float), [state.sleep_lock], cfg)
        return Action(int(_pick_admissible(mask, self._uniform([state.clock]))[0]))

    def batch(self, wb: WorldBatch, cfg: RunConfig, mask: np.ndarray | None = None) -> np.ndarray:
        if mask is None:
            mask = admissible_mask(wb.zeta, wb.sleep_lock, cfg)
        return _pick_admissible(mask, self._uniform(wb.clock))


DEFAULT_SCRIPT = (
    (Action.WALK, 1.5),
    (Action.TURN_LEFT, 0.7),
    (Action.RUN, 0.8),
    (Action.TURN_RIGHT, 0.4),
    (Action.REST, 1.0),
    (Action.WALK, 0.6),
    (Action.SLEEP, 0.5),
)


class ScriptPolicy:
    """Cycle through (action, duration) pairs by clock time.

    An inadmissible scripted action is replaced by Rest, or Sleep if Rest is
    unavailable too.
    """

    def __init__(self, script: Sequence[tuple[Action, float]] = DEFAULT_SCRIPT, name: str = "script"):
        if not script or any(d <= 0 for _, d in script):
            raise ValueError("script needs positive durations")
        self.actions = np.array([int(a) for a, _ in script], dtype=np.int64)
        self.ends = np.cumsum([d for _, d in script])
        self.period = float(self.ends[-1])
        self.name = name

    def _scripted(self, clock: np.ndarray) -> np.ndarray:
        phase = np.mod(np.asarray(clock, dtype=float) + 1e-12, self.period)
        idx = np.minimum(np.searchsorted(self.ends, phase, side="right"), len(self.ends) - 1)
        return self.actions[idx]

    def batch(self, wb: WorldBatch, cfg: RunConfig, mask: np.ndarray | None = None) -> np.ndarray:
        if mask is None:
            mask = admissible_mask(wb.zeta, wb.sleep_lock, cfg)
        want = self._scripted(wb.clock)
        rows = np.arange(len(wb))
        fallback = np.where(mask[:, Action.REST], int(Action.REST), int(Action.SLEEP))
        return np.where(mask[rows, want], want, fallback)

    def __call__(self, state: WorldState, cfg: RunConfig) -> Action:
        return Action(int(self.batch(WorldBatch.from_states([state]), cfg)[0]))


class GreedyPolicy:
    """Purely greedy (epsilon = 0) action of a trained learner."""

    name = "greedy"

    def __init__(self, learner, dt: float | None = None):
        self.learner = learner
        self.dt = dt

    def __call__(self, state: WorldState, cfg: RunConfig) -> Action:
        from .learner import greedy_action

        return greedy_action(self.learner, state, self.dt or cfg.dt, cfg)

    def batch(self, wb: WorldBatch, cfg: RunConfig, mask: np.ndarray | None = None) -> np.ndarray:
        from .learner import greedy_actions

        if mask is None:
            mask = admissible_mask(wb.zeta, wb.sleep_lock, cfg)
        return greedy_actions(self.learner, wb.zeta, mask, self.dt or cfg.dt, cfg)


def _batch_actions(policy, wb: WorldBatch, cfg: RunConfig, mask: np.ndarray) -> np.ndarray:
    if hasattr(policy, "batch"):
        return np.asarray(policy.batch(wb, cfg, mask), dtype=np.int64)
    return np.array([int(policy(s, cfg)) for s in wb.states()], dtype=np.int64)


# ----------------------------------------------------------------------
# integration


def drive_bound(cfg: RunConfig) -> float:
    """Largest drive reachable under the state clipping."""
    res = sum(max(x, cfg.x_max - x) ** 2 for x in cfg.x_star[:4])
    return math.sqrt(res + 2.0 * cfg.fatigue_max ** 2)


def horizon(gamma: float, horizon_tol: float, cfg: RunConfig) -> float:
    """T with gamma^T d_max / (-ln gamma) < horizon_tol."""
    kappa = -math.log(gamma)
    return max(math.log(horizon_tol * kappa / drive_bound(cfg)) / -kappa, 0.0)


@dataclass
class Integrals:
    J: np.ndarray  # (n_samples, n_gammas)
    V: np.ndarray
    d0: np.ndarray  # (n_samples,)
    gammas: tuple[float, ...]


def integrate(starts: Sequence[WorldState], policies: Sequence, gammas: Sequence[float],
              dt_oracle: float, horizon_tol: float, cfg: RunConfig, *,
              quadrature: str = "trapezoid", eps_smooth: float = 0.0,
              drive_fn: DriveFn | None = None, step_fn: StepFn | None = None) -> Integrals:
    """Roll out every (start, policy) pair and integrate J and V for each gamma."""
    if quadrature not in ("left", "trapezoid"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    if len(starts) != len(policies) or not starts:
        raise ValueError("need one policy per start state")
    gammas = tuple(float(g) for g in gammas)
    if any(not 0 < g < 1 for g in gammas):
        raise ValueError("gamma must lie in (0, 1)")
    if dt_oracle <= 0:
        raise ValueError("dt_oracle must be positive")
    dfn = drive_fn or (lambda delta: drive_batch(delta, eps_smooth))
    sfn = step_fn or step_batch

    h = float(dt_oracle)
    n_steps = int(math.ceil(max(horizon(g, horizon_tol, cfg) for g in gammas) / h))
    log_g = np.log(np.array(gammas))

    # group rows that share a policy object so each policy is called once per step
    groups: dict[int, tuple[object, np.ndarray]] = {}
    for i, p in enumerate(policies):
        groups.setdefault(id(p), (p, []))[1].append(i)
    groups = {k: (p, np.array(rows)) for k, (p, rows) in groups.items()}

    wb = WorldBatch.from_states(starts)
    n = len(wb)
    d = dfn(wb.zeta[:, :N_INTERNAL])
    d0 = d.copy()
    J = np.zeros((n, len(gammas)))
    V = np.zeros((n, len(gammas)))
    w = np.ones(len(gammas))
    actions = np.empty(n, dtype=np.int64)
    trap = quadrature == "trapezoid"
    for k in range(n_steps):
        mask = admissible_mask(wb.zeta, wb.sleep_lock, cfg)
        if len(groups) == 1:
            (p, _), = groups.values()
            actions = _batch_actions(p, wb, cfg, mask)
        else:
            for p, rows in groups.values():
                sub = WorldBatch(wb.zeta[rows], wb.sleep_lock[rows], wb.clock[rows])
                actions[rows] = _batch_actions(p, sub, cfg, mask[rows])
        wb = sfn(wb, actions, cfg, h)
        d_next = dfn(wb.zeta[:, :N_INTERNAL])
        w_next = np.exp((k + 1) * h * log_g)
        # reward on this step is -(d_next - d)/h; multiply by the kernel weight and h
        dd = (d_next - d)[:, None]
        if trap:
            J += (0.5 * h) * (d[:, None] * w + d_next[:, None] * w_next)
            V -= dd * (0.5 * (w + w_next))
        else:
            J += h * d[:, None] * w
            V -= dd * w
        d, w = d_next, w_next
    return Integrals(J, V, d0, gammas)


def evaluate_J(start: WorldState, policy, gamma: float, dt_oracle: float, horizon_tol: float,
               cfg: RunConfig, **kw) -> float:
    return float(integrate([start], [policy], [gamma], dt_oracle, horizon_tol, cfg, **kw).J[0, 0])


def evaluate_V(start: WorldState, policy, gamma: float, dt_oracle: float, horizon_tol: float,
               cfg: RunConfig, **kw) -> float:
    return float(integrate([start], [policy], [gamma], dt_oracle, horizon_tol, cfg, **kw).V[0, 0])


# ----------------------------------------------------------------------
# identity report


@dataclass
class IdentityRow:
    sample_id: int
    policy_id: str
    V: float
    J: float
    d0: float
    gap: float


@dataclass
class IdentityReport:
    gamma: float
    rows: list[IdentityRow]

    @property
    def max_gap(self) -> float:
        return max(r.gap for r in self.rows)

    def within(self, rel_tol: float) -> bool:
        return all(r.gap <= rel_tol * (1.0 + abs(r.V)) for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "policy_id", "V", "J", "d0", "gap"])
        for r in self.rows:
            w.writerow([r.sample_id, r.policy_id, *(format(x, ".17g") for x in (r.V, r.J, r.d0, r.gap))])
        return buf.getvalue()


def identity_reports(samples: Sequence[tuple[WorldState, object]], gammas: Sequence[float],
                   dt_oracle: float, cfg: RunConfig, horizon_tol: float | None = None,
                   **kw) -> list[IdentityReport]:
    """One report per gamma, all computed from a shared set of rollouts."""
    if not samples:
        raise ValueError("need at least one sample")
    tol = cfg.horizon_tol if horizon_tol is None else horizon_tol
    starts = [s for s, _ in samples]
    pols = [p for _, p in samples]
    res = integrate(starts, pols, gammas, dt_oracle, tol, cfg, **kw)
    reports = []
    for gi, g in enumerate(res.gammas):
        rows = []
        for i, p in enumerate(pols):
            v, j, d0 = res.V[i, gi], res.J[i, gi], res.d0[i]
            rows.append(IdentityRow(i, getattr(p, "name", type(p).__name__), float(v), float(j), float(d0),
                                  float(abs(v - d0 - math.log(g) * j))))
        reports.append(IdentityReport(g, rows))
    return reports


def identity_report(samples, gamma: float, dt_oracle: float, cfg: RunConfig, **kw) -> IdentityReport:
    return identity_reports(samples, [gamma], dt_oracle, cfg, **kw)[0]


lemma1_report = identity_report  # name used by the interface contract


def ordering_violations(report: IdentityReport, start_ids: Sequence[int], v_gap: float = 1e-2) -> tuple[int, int]:
    """Count (qualifying pairs, pairs where a higher V does not mean a lower J).

    Pairs are formed between policies evaluated from the same start.
    """
    by_start: dict[int, list[IdentityRow]] = {}
    for sid, row in zip(start_ids, report.rows):
        by_start.setdefault(sid, []).append(row)
    qualifying = bad = 0
    for rows in by_start.values():
        for i in range(len(rows)):
            for k in range(len(rows)):
                a, b = rows[i], rows[k]
                if a.V > b.V + v_gap:
                    qualifying += 1
                    if not a.J < b.J:
                        bad += 1
    return qualifying, bad


def sample_start_states(rng: np.random.Generator, n: int, cfg: RunConfig) -> list[WorldState]:
    """Random unlocked states: resources anywhere in their clip range, fatigue
    below the forced-sleep threshold, position uniform inside the arena."""
    xs = np.array([p[0] for p in cfg.arena])
    ys = np.array([p[1] for p in cfg.arena])
    lo = np.array([-x for x in cfg.x_star[:4]] + [0.0, 0.0])
    hi = np.array([cfg.x_max - x for x in cfg.x_star[:4]] + [cfg.walk_block, cfg.forced_sleep])
    out = []
    while len(out) < n:
        p = rng.uniform([xs.min(), ys.min()], [xs.max(), ys.max()])
        if not points_in_polygon([p], cfg.arena)[0]:
            continue
        delta = rng.uniform(lo, hi)
        heading = rng.uniform(0.0, TWO_PI)
        out.append(WorldState((*delta.tolist(), float(p[0]), float(p[1]), float(heading)), 0.0, 0.0))
    from .core import Zeta

    return [WorldState(Zeta(*s.zeta), s.sleep_lock, s.clock) for s in out]


# ----------------------------------------------------------------------
# behaviour statistics


@dataclass
class RolloutStats:
    mean_drive: float
    consume_events: tuple[int, int, int, int]
    sleep_episodes: int


def rollout_stats(starts: Sequence[WorldState], policy, steps: int, cfg: RunConfig,
                  dt: float | None = None) -> list[RolloutStats]:
    """Run ``policy`` from every start for ``steps`` steps of ``dt`` in lockstep.

    A consumption event is a maximal run of consecutive Consume(i) steps; a
    sleep episode starts whenever Sleep is chosen while no sleep lock is active.
    """
    if not starts:
        return []
    dt = cfg.dt if dt is None else dt
    wb = WorldBatch.from_states(starts)
    n = len(wb)
    drive_sum = np.zeros(n)
    events = np.zeros((n, 4), dtype=np.int64)
    sleeps = np.zeros(n, dtype=np.int64)
    prev = np.full(n, -1, dtype=np.int64)
    for _ in range(steps):
        mask = admissible_mask(wb.zeta, wb.sleep_lock, cfg)
        act = _batch_actions(policy, wb, cfg, mask)
        for i in range(4):
            c = int(Action.consume(i + 1))
            events[:, i] += (act == c) & (prev != c)
        sleeps += (act == Action.SLEEP) & (wb.sleep_lock <= 0.0)
        wb = step_batch(wb, act, cfg, dt)
        drive_sum += drive_batch(wb.zeta[:, :N_INTERNAL], 0.0)
        prev = act
    mean = drive_sum / max(steps, 1)
    return [RolloutStats(float(mean[i]), tuple(int(e) for e in events[i]), int(sleeps[i])) for i in range(n)]
