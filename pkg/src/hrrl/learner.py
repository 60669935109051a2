"""HJB-greedy agent that learns its body dynamics and deviation function.

Each step the agent picks an admissible action (uniformly at random with
probability epsilon, otherwise the minimiser of the predicted drive plus
the learned deviation gradient along the predicted dynamics), executes it,
then takes one gradient step on the transition loss and one on the
squared HJB residual.

Networks see normalised inputs. The transition net outputs rates in units
of ``f_scale`` and the deviation net outputs J in units of ``1/(-ln gamma)``
(the deviation of a constant unit drive); every quantity handed out of this
module is in physical units.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .approx import FeedForwardNet
from .config import RunConfig
from .core import N_INTERNAL, N_STATE, drive, drive_batch
from .runlog import RunLog
from .world import (
    HEADING,
    Action,
    InadmissibleActionError,
    WorldState,
    admissible_actions,
    controls,
    step,
    wrap_angle,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scales:
    zeta: np.ndarray  # divides zeta before it enters either net
    control: np.ndarray  # divides u before it enters the transition net
    rate: np.ndarray  # multiplies the transition net output
    j: float  # multiplies the deviation net output

    @classmethod
    def from_config(cls, cfg: RunConfig) -> Scales:
        xs = [p[0] for p in cfg.arena]
        ys = [p[1] for p in cfg.arena]
        zeta = np.array([cfg.x_max] * N_INTERNAL + [max(xs), max(ys), 2.0 * math.pi])
        rate = np.array([cfg.m_consume] * 4 + [cfg.kappa_run, cfg.sigma_sleep, cfg.v_run, cfg.v_run, cfg.omega])
        rate[rate <= 0] = 1.0
        return cls(zeta, rate.copy(), rate, 1.0 / -math.log(cfg.gamma))


def epsilon_at(step_index: int, total_steps: int, eps_start: float, eps_end: float) -> float:
    """Linear decay over the first half of training, constant afterwards."""
    half = total_steps / 2.0
    if half <= 0 or step_index >= half:
        return eps_end
    return eps_start + (eps_end - eps_start) * (step_index / half)


@dataclass
class LearnerState:
    f_net: FeedForwardNet
    j_net: FeedForwardNet
    epsilon: float
    gamma: float
    lr_f: float
    lr_j: float
    rng_seed: int
    scales: Scales
    eps_smooth: float = 1e-8
    step_count: int = 0
    anomalies: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)

    @classmethod
    def create(cls, cfg: RunConfig, seed: int | None = None) -> LearnerState:
        seed = cfg.seed if seed is None else seed
        init_rng = np.random.default_rng([seed, 1])
        f_net = FeedForwardNet.init([2 * N_STATE, *cfg.f_hidden, N_STATE], init_rng)
        j_net = FeedForwardNet.init([N_STATE, *cfg.j_hidden, 1], init_rng)
        return cls(f_net, j_net, cfg.eps_start, cfg.gamma, cfg.lr_f, cfg.lr_j, seed,
                   Scales.from_config(cfg), cfg.eps_smooth,
                   rng=np.random.default_rng([seed, 2]))

    # ------------------------------------------------------------------
    # model evaluation, physical units

    def predict_f(self, zeta, u) -> np.ndarray:
        """Learned f(zeta, u); ``u`` may be (9,) or (n, 9), ``zeta`` one row or matching rows."""
        z = np.asarray(zeta, dtype=float) / self.scales.zeta
        u = np.asarray(u, dtype=float) / self.scales.control
        if u.ndim == 1 and z.ndim == 1:
            return self.f_net.forward(np.concatenate([z, u])) * self.scales.rate
        u = np.atleast_2d(u)
        x = np.concatenate([np.broadcast_to(z, u.shape), u], axis=1)
        return self.f_net.forward(x) * self.scales.rate

    def j_value(self, zeta):
        """Learned J; a float for one state, an array for (n, 9) rows."""
        z = np.asarray(zeta, dtype=float) / self.scales.zeta
        out = self.j_net.forward(z)[..., 0] * self.scales.j
        return float(out) if z.ndim == 1 else out

    def j_grad(self, zeta) -> np.ndarray:
        """dJ/dzeta with the input normalisation chained back out."""
        z = np.asarray(zeta, dtype=float) / self.scales.zeta
        return self.j_net.grad_input(z)[0] * self.scales.j / self.scales.zeta

    def j_grad_batch(self, zeta) -> np.ndarray:
        z = np.asarray(zeta, dtype=float) / self.scales.zeta
        return self.j_net.grad_input_batch(z)[:, 0, :] * self.scales.j / self.scales.zeta


# ----------------------------------------------------------------------
# action selection


def _minimands(ls: LearnerState, zeta: np.ndarray, actions, dt: float, cfg: RunConfig) -> np.ndarray:
    u = controls(zeta, np.asarray(actions, dtype=np.int64), cfg)
    f_hat = ls.predict_f(zeta, u)
    nxt = zeta[:N_INTERNAL] + f_hat[:, :N_INTERNAL] * dt
    return drive_batch(nxt, ls.eps_smooth) + f_hat @ ls.j_grad(zeta)


def hjb_minimand(ls: LearnerState, zeta, action: Action, dt: float, cfg: RunConfig,
                 state: WorldState | None = None) -> float:
    """d(delta + f_hat dt) + dJ/dzeta . f_hat for one action.

    ``state`` supplies the sleep lock for the admissibility check; without it
    an unlocked state is assumed.
    """
    zeta = np.asarray(zeta, dtype=float)
    ws = state if state is not None else WorldState(tuple(zeta), 0.0, 0.0)
    if action not in admissible_actions(ws, cfg):
        raise InadmissibleActionError(f"{Action(action).name} not admissible")
    return float(_minimands(ls, zeta, [int(action)], dt, cfg)[0])


def greedy_action(ls: LearnerState, state: WorldState, dt: float, cfg: RunConfig,
                  allowed: tuple[Action, ...] | None = None) -> Action:
    allowed = admissible_actions(state, cfg) if allowed is None else allowed
    if len(allowed) == 1:
        return allowed[0]
    values = _minimands(ls, np.asarray(state.zeta, dtype=float), allowed, dt, cfg)
    # argmin returns the first minimum, i.e. the enum order breaks ties
    return allowed[int(np.argmin(values))]


def greedy_actions(ls: LearnerState, zeta: np.ndarray, mask: np.ndarray, dt: float,
                   cfg: RunConfig) -> np.ndarray:
    """Row-wise greedy choice for a batch of states given their admissibility mask."""
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    n, n_act = mask.shape
    z_rep = np.repeat(zeta, n_act, axis=0)
    acts = np.tile(np.arange(n_act, dtype=np.int64), n)
    f_hat = ls.predict_f(z_rep, controls(z_rep, acts, cfg))
    nxt = z_rep[:, :N_INTERNAL] + f_hat[:, :N_INTERNAL] * dt
    grad = np.repeat(ls.j_grad_batch(zeta), n_act, axis=0)
    values = (drive_batch(nxt, ls.eps_smooth) + np.einsum("ij,ij->i", f_hat, grad)).reshape(n, n_act)
    values[~mask] = np.inf
    return np.argmin(values, axis=1)


def select_action(ls: LearnerState, state: WorldState, dt: float, cfg: RunConfig) -> Action:
    allowed = admissible_actions(state, cfg)
    if len(allowed) == 1:
        return allowed[0]
    if ls.epsilon > 0.0 and ls.rng.random() < ls.epsilon:
        return allowed[int(ls.rng.integers(len(allowed)))]
    return greedy_action(ls, state, dt, cfg, allowed)


# ----------------------------------------------------------------------
# updates


def transition_residual(zeta_k, zeta_next, f_hat, dt: float) -> np.ndarray:
    r = np.asarray(zeta_next, dtype=float) - np.asarray(zeta_k, dtype=float) - np.asarray(f_hat) * dt
    r[HEADING] = wrap_angle(r[HEADING])
    return r


def update_f(ls: LearnerState, zeta_k, u_k, zeta_next, dt: float) -> float:
    """One SGD step on |zeta' - zeta - f_hat dt|^2; returns the pre-step loss."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    zeta_k = np.asarray(zeta_k, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    x = np.concatenate([zeta_k / ls.scales.zeta, u_k / ls.scales.control])
    f_hat = ls.f_net.forward(x) * ls.scales.rate
    r = transition_residual(zeta_k, zeta_next, f_hat, dt)
    loss = float(r @ r)
    if not math.isfinite(loss):
        ls.anomalies += 1
        log.warning("non-finite transition loss; update skipped")
        return loss
    cot = -2.0 * dt * r * ls.scales.rate
    if not ls.f_net.sgd_step(ls.f_net.grad_params(x, cot), ls.lr_f):
        ls.anomalies += 1
        log.warning("non-finite transition gradient; update skipped")
    return loss


def hjb_residual(ls: LearnerState, zeta_k, u_k, zeta_next) -> float:
    zeta_k = np.asarray(zeta_k, dtype=float)
    f_hat = ls.predict_f(zeta_k, u_k)
    d_next = drive(np.asarray(zeta_next, dtype=float)[:N_INTERNAL], ls.eps_smooth)
    return float(d_next + ls.j_grad(zeta_k) @ f_hat + math.log(ls.gamma) * ls.j_value(zeta_k))


def update_j(ls: LearnerState, zeta_k, u_k, zeta_next) -> float:
    """One SGD step on the squared HJB residual w.r.t. the deviation net only.

    The residual contains dJ/dzeta, so its parameter gradient goes through the
    mixed second derivative of the net. The transition model is held fixed.
    Returns the pre-step squared residual.
    """
    zeta_k = np.asarray(zeta_k, dtype=float)
    sc = ls.scales
    f_hat = ls.predict_f(zeta_k, u_k)
    d_next = drive(np.asarray(zeta_next, dtype=float)[:N_INTERNAL], ls.eps_smooth)
    x = zeta_k / sc.zeta
    v = f_hat / sc.zeta
    y, ydot = ls.j_net.jvp(x, v)
    log_g = math.log(ls.gamma)
    resid = d_next + sc.j * ydot[0] + log_g * sc.j * y[0]
    loss = resid * resid
    if not math.isfinite(loss):
        ls.anomalies += 1
        log.warning("non-finite HJB residual; update skipped")
        return float(loss)
    grads = ls.j_net.grad_params_jvp(x, v, [2.0 * resid * log_g * sc.j], [2.0 * resid * sc.j])
    if not ls.j_net.sgd_step(grads, ls.lr_j):
        ls.anomalies += 1
        log.warning("non-finite HJB gradient; update skipped")
    return float(loss)


# ----------------------------------------------------------------------
# main loop


def train(world: WorldState, ls: LearnerState, steps: int, cfg: RunConfig,
          eps_start: float | None = None, eps_end: float | None = None,
          runlog: RunLog | None = None) -> tuple[WorldState, LearnerState, RunLog]:
    """Run the learning loop for ``steps`` iterations of one continuous lifetime."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    eps_start = cfg.eps_start if eps_start is None else eps_start
    eps_end = cfg.eps_end if eps_end is None else eps_end
    runlog = RunLog(steps) if runlog is None else runlog
    dt = cfg.dt
    zeta = np.asarray(world.zeta, dtype=float)
    d_prev = drive(zeta[:N_INTERNAL], ls.eps_smooth)
    for k in range(steps):
        ls.epsilon = epsilon_at(k, steps, eps_start, eps_end)
        action = select_action(ls, world, dt, cfg)
        u = controls(zeta, [int(action)], cfg)[0]
        nxt_state = step(world, action, cfg, dt)
        nxt = np.asarray(nxt_state.zeta, dtype=float)
        loss_f = update_f(ls, zeta, u, nxt, dt)
        loss_j = update_j(ls, zeta, u, nxt)
        d_next = drive(nxt[:N_INTERNAL], ls.eps_smooth)
        ls.step_count += 1
        runlog.append(ls.step_count, nxt_state.clock, nxt, action, d_next,
                      -(d_next - d_prev) / dt, loss_f, loss_j, ls.epsilon)
        world, zeta, d_prev = nxt_state, nxt, d_next
    if ls.anomalies:
        runlog.anomalies.append(f"{ls.anomalies} numeric anomalies skipped")
    return world, ls, runlog
