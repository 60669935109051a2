"""Self-checks bundled by ``hrrl verify``.

* sign suites for the constant-consumption reward and drive,
* finite-difference checks of the network derivatives,
* the V/J identity and policy-ordering check on oracle rollouts.

The reward and drive used by the sign suites are parameters so a tampered
version can be injected to confirm the suites actually detect faults.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .approx import FeedForwardNet
from .config import RunConfig
from .core import N_STATE, constant_control_drive, constant_control_reward
from . import oracle

FD_STEP = 1e-5
ZERO_TOL = 1e-9
DENOM_FLOOR = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  {self.detail}".rstrip()


# ----------------------------------------------------------------------
# sign suites


def _sign_ok(value: float, want: int) -> bool:
    if abs(value) <= ZERO_TOL:
        return True
    return value * want > 0


def _draw(rng, n_total):
    delta0 = rng.uniform(-3.0, 3.0, size=(n_total, 2))
    m = rng.uniform(0.1, 2.0, size=n_total)
    t = rng.uniform(0.0, 1.0, size=n_total)
    return delta0, m, t


def _collect(rng, accept, n: int, max_rounds: int = 1000):
    """Draw tuples until ``n`` satisfy ``accept(delta0, m, t)``."""
    out = []
    for _ in range(max_rounds):
        for d0, m, t in zip(*_draw(rng, 4 * n)):
            if accept(d0, m, t):
                out.append((d0, float(m), float(t)))
                if len(out) == n:
                    return out
    raise RuntimeError("could not draw enough samples for a sign case")


def sign_suite(seed: int = 0, n: int = 200,
               reward_fn: Callable = constant_control_reward,
               drive_fn: Callable = constant_control_drive) -> list[CheckResult]:
    """Six cases, each checked on ``n`` sampled (delta0, m, t) tuples.

    * reward vs |delta0_1|: <= 0 for delta0_1 >= 0, >= 0 for delta0_1 <= 0
    * reward vs |delta0_2|: sign follows delta0_1 + t m
    * drive vs consumed amount t m: sign follows delta0_1 + t m
    """
    rng = np.random.default_rng([seed, 14])
    h = FD_STEP

    def denom_ok(d0, m, t):
        return drive_fn(t, m, d0) > DENOM_FLOOR

    def d_abs1(d0, m, t):
        s = 1.0 if d0[0] >= 0 else -1.0
        up, dn = d0.copy(), d0.copy()
        up[0] += s * h
        dn[0] -= s * h
        return (reward_fn(t, m, up) - reward_fn(t, m, dn)) / (2 * h)

    def d_abs2(d0, m, t):
        s = 1.0 if d0[1] >= 0 else -1.0
        up, dn = d0.copy(), d0.copy()
        up[1] += s * h
        dn[1] -= s * h
        return (reward_fn(t, m, up) - reward_fn(t, m, dn)) / (2 * h)

    def d_amount(d0, m, t):
        # drive as a function of the consumed amount a = t m, m held fixed
        a = t * m
        return (drive_fn((a + h) / m, m, d0) - drive_fn((a - h) / m, m, d0)) / (2 * h)

    cases = [
        ("reward_vs_abs_delta1[d1>=0]", lambda d0, m, t: d0[0] >= 0, d_abs1, -1),
        ("reward_vs_abs_delta1[d1<=0]", lambda d0, m, t: d0[0] <= 0, d_abs1, +1),
        ("reward_vs_abs_delta2[d1+tm<=0]", lambda d0, m, t: d0[0] + t * m <= 0, d_abs2, -1),
        ("reward_vs_abs_delta2[d1+tm>=0]", lambda d0, m, t: d0[0] + t * m >= 0, d_abs2, +1),
        ("drive_vs_consumed[d1+tm<=0]", lambda d0, m, t: d0[0] + t * m <= 0, d_amount, -1),
        ("drive_vs_consumed[d1+tm>=0]", lambda d0, m, t: d0[0] + t * m >= 0, d_amount, +1),
    ]
    results = []
    for name, cond, deriv, want in cases:
        # keep away from the singular point and from t = 0 for the amount derivative
        samples = _collect(rng, lambda d0, m, t: cond(d0, m, t) and denom_ok(d0, m, t)
                           and denom_ok(d0, m, t + h / m) and denom_ok(d0, m, max(t - h / m, 0.0))
                           and t * m > h, n)
        bad = sum(not _sign_ok(deriv(d0, m, t), want) for d0, m, t in samples)
        results.append(CheckResult(f"sign:{name}", bad == 0, f"{n - bad}/{n}"))
    return results


# ----------------------------------------------------------------------
# gradient checks


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def _fd_params(net: FeedForwardNet, fn, h: float = 1e-6) -> np.ndarray:
    theta = net.get_flat()
    out = np.empty(theta.size)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        net.set_flat(theta)
        up = fn()
        theta[i] = old - h
        net.set_flat(theta)
        dn = fn()
        theta[i] = old
        out[i] = (up - dn) / (2 * h)
    net.set_flat(theta)
    return out


def net_gradient_errors(net: FeedForwardNet, rng: np.random.Generator, mixed: bool = False) -> dict[str, float]:
    """Relative errors of grad_params, grad_input and (optionally) the mixed derivative."""
    x = rng.normal(size=net.n_in)
    cot = rng.normal(size=net.n_out)
    errs = {}
    analytic = np.concatenate([g.ravel() for g in net.grad_params(x, cot)])
    errs["grad_params"] = _rel_err(analytic, _fd_params(net, lambda: float(cot @ net.forward(x))))

    h = 1e-6
    fd_in = np.empty((net.n_out, net.n_in))
    for j in range(net.n_in):
        e = np.zeros(net.n_in)
        e[j] = h
        fd_in[:, j] = (net.forward(x + e) - net.forward(x - e)) / (2 * h)
    errs["grad_input"] = _rel_err(net.grad_input(x), fd_in)

    if mixed:
        v = rng.normal(size=net.n_in)
        cy = rng.normal(size=net.n_out)
        ct = rng.normal(size=net.n_out)
        analytic = np.concatenate([g.ravel() for g in net.grad_params_jvp(x, v, cy, ct)])
        fd = _fd_params(net, lambda: float(cy @ net.forward(x) + ct @ (net.grad_input(x) @ v)))
        errs["mixed"] = _rel_err(analytic, fd)
    return errs


def gradient_checks(cfg: RunConfig, n_nets: int = 20, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng([seed, 4])
    shapes = {
        "f_net": [2 * N_STATE, *cfg.f_hidden, N_STATE],
        "j_net": [N_STATE, *cfg.j_hidden, 1],
    }
    worst: dict[str, float] = {}
    for label, sizes in shapes.items():
        for _ in range(n_nets):
            net = FeedForwardNet.init(sizes, rng)
            # non-zero biases so every code path is exercised
            for b in net.biases:
                b[:] = rng.normal(scale=0.3, size=b.shape)
            for k, e in net_gradient_errors(net, rng, mixed=label == "j_net").items():
                key = f"{label}.{k}"
                worst[key] = max(worst.get(key, 0.0), e)
    out = []
    for key, e in worst.items():
        tol = 1e-3 if key.endswith("mixed") else 1e-4
        out.append(CheckResult(f"grad:{key}", e <= tol, f"max rel err {e:.2e} (tol {tol:g})"))
    return out


# ----------------------------------------------------------------------
# identity and ordering


def default_samples(cfg: RunConfig, n_starts: int = 20, seed: int = 0):
    """(start, policy) pairs: every start under Rest, a seeded random policy and a script."""
    rng = np.random.default_rng([seed, 7])
    starts = oracle.sample_start_states(rng, n_starts, cfg)
    policies = [oracle.RestPolicy(), oracle.RandomPolicy(seed), oracle.ScriptPolicy()]
    samples, start_ids = [], []
    for i, s in enumerate(starts):
        for p in policies:
            samples.append((s, p))
            start_ids.append(i)
    return samples, start_ids


def identity_checks(cfg: RunConfig, gammas: Sequence[float] = (0.5, 0.95), dt_oracle: float | None = None,
                    n_starts: int = 20, seed: int = 0, rel_tol: float = 1e-3, v_gap: float = 1e-2,
                    **kw) -> tuple[list[CheckResult], list[oracle.IdentityReport]]:
    dt_oracle = cfg.dt_oracle if dt_oracle is None else dt_oracle
    samples, start_ids = default_samples(cfg, n_starts, seed)
    reports = oracle.identity_reports(samples, gammas, dt_oracle, cfg, **kw)
    out = []
    for rep in reports:
        worst = max(r.gap / (1.0 + abs(r.V)) for r in rep.rows)
        out.append(CheckResult(f"identity:gamma={rep.gamma:g}", rep.within(rel_tol),
                               f"max gap/(1+|V|) {worst:.2e} (tol {rel_tol:g})"))
        q, bad = oracle.ordering_violations(rep, start_ids, v_gap)
        out.append(CheckResult(f"ordering:gamma={rep.gamma:g}", bad == 0 and q > 0,
                               f"{q - bad}/{q} qualifying pairs reversed"))
    return out, reports


def run_all(cfg: RunConfig, reward_fn: Callable = constant_control_reward,
            drive_fn: Callable = constant_control_drive, n_nets: int = 20,
            gammas: Sequence[float] = (0.5, 0.95), n_starts: int = 20) -> list[CheckResult]:
    results = sign_suite(reward_fn=reward_fn, drive_fn=drive_fn)
    results += gradient_checks(cfg, n_nets)
    results += identity_checks(cfg, gammas, n_starts=n_starts)[0]
    return results


def all_passed(results: Sequence[CheckResult]) -> bool:
    return all(r.passed for r in results)
