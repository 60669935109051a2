import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hrrl import oracle
from hrrl.config import RunConfig
from hrrl.core import Zeta, drive
from hrrl.world import Action, WorldBatch, WorldState, admissible_actions, initial_state, points_in_polygon

CFG = RunConfig()


def ws(delta=(0,) * 6, pos=(5.0, 3.25), heading=0.0, lock=0.0, clock=0.0):
    return WorldState(Zeta.from_parts(delta, (*pos, heading)), lock, clock)


def frozen_world(batch, actions, cfg, dt):
    return WorldBatch(batch.zeta.copy(), batch.sleep_lock, batch.clock + dt)


def decaying_world(batch, actions, cfg, dt):
    """delta' = -delta, integrated exactly."""
    z = batch.zeta.copy()
    z[:, :6] *= math.exp(-dt)
    return WorldBatch(z, batch.sleep_lock, batch.clock + dt)


def ones(delta):
    return np.ones(delta.shape[0])


# ---------------------------------------------------------------- horizon and bounds

def test_drive_bound():
    assert oracle.drive_bound(CFG) == pytest.approx(math.sqrt(9**2 + 8**2 + 7**2 + 6**2 + 2 * 12**2))


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.95])
def test_horizon_meets_tolerance(gamma):
    T = oracle.horizon(gamma, 1e-6, CFG)
    tail = gamma**T * oracle.drive_bound(CFG) / -math.log(gamma)
    assert tail == pytest.approx(1e-6, rel=1e-9)


# ---------------------------------------------------------------- stubbed integrals

@pytest.mark.parametrize("quad", ["left", "trapezoid"])
def test_constant_drive_geometric_integral(quad):
    g = 0.95
    J = oracle.evaluate_J(initial_state(CFG), oracle.RestPolicy(), g, 1e-2, 1e-6, CFG,
                          drive_fn=ones, step_fn=frozen_world, quadrature=quad)
    exact = 1 / -math.log(g)
    assert exact == pytest.approx(19.4957, abs=1e-4)
    # left sum overshoots by about h/2; the trapezoid rule is second order
    tol = 1e-2 if quad == "left" else 1e-5
    assert J == pytest.approx(exact, abs=tol)
    V = oracle.evaluate_V(initial_state(CFG), oracle.RestPolicy(), g, 1e-2, 1e-6, CFG,
                          drive_fn=ones, step_fn=frozen_world, quadrature=quad)
    assert V == 0.0


def test_zero_drive_gives_zero():
    J = oracle.evaluate_J(initial_state(CFG), oracle.RestPolicy(), 0.9, 1e-2, 1e-6, CFG, step_fn=frozen_world)
    assert J == 0.0


def test_decreasing_drive_positive_value():
    g, d0 = 0.8, 2.0
    start = ws((d0, 0, 0, 0, 0, 0))
    V = oracle.evaluate_V(start, oracle.RestPolicy(), g, 1e-3, 1e-8, CFG, step_fn=decaying_world)
    J = oracle.evaluate_J(start, oracle.RestPolicy(), g, 1e-3, 1e-8, CFG, step_fn=decaying_world)
    # d(t) = d0 e^-t: J = d0/(1 - ln g), V = d0 + ln g J
    assert V > 0
    assert J == pytest.approx(d0 / (1 - math.log(g)), rel=1e-6)
    assert V == pytest.approx(d0 / (1 - math.log(g)), rel=1e-5)


def test_constant_drive_report_gap_vanishes():
    rep = oracle.lemma1_report([(initial_state(CFG), oracle.RestPolicy())], 0.95, 1e-2, CFG,
                               drive_fn=ones, step_fn=frozen_world)
    assert len(rep.rows) == 1
    # V = 0 and d0 + ln(g) J = 1 - J/J_exact: trapezoid error only
    assert rep.max_gap < 1e-6


# ---------------------------------------------------------------- true world

def test_left_rule_converges_first_order():
    start = ws((0.5, -1, 0.3, -2, 2, 3), pos=(2.0, 2.0), heading=0.3)
    pol = oracle.ScriptPolicy()
    g = 0.5
    Js = [oracle.evaluate_J(start, pol, g, h, 1e-6, CFG, quadrature="left") for h in (1e-2, 5e-3)]
    # left-sum error bound: h/2 * max|d (g^t d)/dt| integrated, generously d_max
    C = oracle.drive_bound(CFG)
    assert abs(Js[0] - Js[1]) < C * 1e-2


def test_identity_gap_order():
    start = ws((0.5, -1, 0.3, -2, 2, 3), pos=(2.0, 2.0), heading=0.3)
    pol = oracle.RestPolicy()
    gaps = []
    for h in (4e-3, 2e-3, 1e-3):
        rep = oracle.lemma1_report([(start, pol)], 0.5, h, CFG, quadrature="left")
        gaps.append(rep.max_gap)
    orders = [math.log2(a / b) for a, b in zip(gaps, gaps[1:])]
    assert all(o >= 0.9 for o in orders)


def test_bounds_on_j():
    starts = oracle.sample_start_states(np.random.default_rng(0), 6, CFG)
    g = 0.5
    res = oracle.integrate(starts, [oracle.RandomPolicy(3)] * 6, [g], 1e-3, 1e-6, CFG)
    assert np.all(res.J >= 0)
    assert np.all(res.J <= oracle.drive_bound(CFG) / -math.log(g) + 1e-6)
    np.testing.assert_allclose(res.d0, [drive(s.zeta.delta) for s in starts])


def test_integrate_matches_single_runs():
    starts = oracle.sample_start_states(np.random.default_rng(1), 3, CFG)
    pols = [oracle.RestPolicy(), oracle.RandomPolicy(2), oracle.ScriptPolicy()]
    both = oracle.integrate(starts, pols, [0.5], 2e-3, 1e-4, CFG)
    for i, (s, p) in enumerate(zip(starts, pols)):
        assert both.J[i, 0] == oracle.evaluate_J(s, p, 0.5, 2e-3, 1e-4, CFG)


def test_report_csv():
    starts = oracle.sample_start_states(np.random.default_rng(2), 2, CFG)
    rep = oracle.lemma1_report([(s, oracle.RestPolicy()) for s in starts], 0.5, 2e-3, CFG, horizon_tol=1e-3)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "sample_id,policy_id,V,J,d0,gap"
    assert len(lines) == 3
    row = lines[1].split(",")
    assert row[:2] == ["0", "rest"]
    assert float(row[2]) == rep.rows[0].V  # 17 significant digits round-trip
    assert rep.max_gap == max(r.gap for r in rep.rows)


def test_ordering_violations_counts_pairs():
    rows = [oracle.IdentityRow(0, "a", 1.0, 5.0, 0.0, 0.0), oracle.IdentityRow(1, "b", 0.5, 6.0, 0.0, 0.0),
            oracle.IdentityRow(2, "c", 0.499, 5.5, 0.0, 0.0)]
    rep = oracle.IdentityReport(0.9, rows)
    # (a,b) and (a,c) qualify and are reversed; (b,c) has a V gap below tolerance
    assert oracle.ordering_violations(rep, [0, 0, 0], 1e-2) == (2, 0)
    rows[0].J = 7.0
    assert oracle.ordering_violations(rep, [0, 0, 0], 1e-2) == (2, 2)
    # different starts are never compared
    assert oracle.ordering_violations(rep, [0, 1, 2], 1e-2) == (0, 0)


def test_bad_arguments():
    s = initial_state(CFG)
    with pytest.raises(ValueError):
        oracle.evaluate_J(s, oracle.RestPolicy(), 1.0, 1e-3, 1e-6, CFG)
    with pytest.raises(ValueError):
        oracle.evaluate_J(s, oracle.RestPolicy(), 0.5, 1e-3, 1e-6, CFG, quadrature="simpson")
    with pytest.raises(ValueError):
        oracle.lemma1_report([], 0.5, 1e-3, CFG)


# ---------------------------------------------------------------- policies

policies = [oracle.RestPolicy(), oracle.RandomPolicy(0), oracle.RandomPolicy(7, hold=0.3), oracle.ScriptPolicy()]


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_policies_return_admissible(seed):
    starts = oracle.sample_start_states(np.random.default_rng(seed), 5, CFG)
    starts += [ws(lock=0.5), ws((0, 0, 0, 0, 9, 0)), ws((0, 0, 0, 0, 0, 10)), ws(pos=(6.5, 0.75))]
    wb = WorldBatch.from_states(starts)
    for p in policies:
        acts = p.batch(wb, CFG)
        for s, a in zip(starts, acts):
            assert Action(int(a)) in admissible_actions(s, CFG)
            assert p(s, CFG) is Action(int(a))


def test_rest_policy_falls_back_to_sleep():
    assert oracle.RestPolicy()(ws(), CFG) is Action.REST
    assert oracle.RestPolicy()(ws(lock=1.0), CFG) is Action.SLEEP


def test_random_policy_pure_and_piecewise_constant():
    p = oracle.RandomPolicy(4, hold=0.5)
    s = ws(pos=(1.5, 4.25))
    assert p(s, CFG) is oracle.RandomPolicy(4, hold=0.5)(s, CFG)
    same = {p(ws(pos=(1.5, 4.25), clock=c), CFG) for c in np.linspace(1.0, 1.49, 20)}
    assert len(same) == 1
    draws = [p(ws(pos=(1.5, 4.25), clock=0.5 * k), CFG) for k in range(3000)]
    counts = np.bincount([int(a) for a in draws], minlength=10)
    allowed = [int(a) for a in admissible_actions(s, CFG)]
    assert set(np.flatnonzero(counts)) == set(allowed)
    assert counts[allowed].min() > 3000 / len(allowed) * 0.8


def test_script_policy_cycles():
    p = oracle.ScriptPolicy([(Action.WALK, 1.0), (Action.TURN_LEFT, 0.5)])
    assert p(ws(clock=0.2), CFG) is Action.WALK
    assert p(ws(clock=1.2), CFG) is Action.TURN_LEFT
    assert p(ws(clock=1.6), CFG) is Action.WALK
    # walk blocked by fatigue: falls back to rest
    assert p(ws((0, 0, 0, 0, 9, 0), clock=0.2), CFG) is Action.REST
    with pytest.raises(ValueError):
        oracle.ScriptPolicy([(Action.WALK, 0.0)])


# ---------------------------------------------------------------- sampling and stats

def test_sample_start_states():
    starts = oracle.sample_start_states(np.random.default_rng(0), 50, CFG)
    assert len(starts) == 50
    z = np.array([s.zeta for s in starts])
    assert points_in_polygon(z[:, 6:8], CFG.arena).all()
    assert (z[:, 5] < CFG.forced_sleep).all() and (z[:, 4] < CFG.walk_block).all()
    assert all(s.sleep_lock == 0 and s.clock == 0 for s in starts)
    x = z[:, :4] + np.array(CFG.x_star[:4])
    assert (x >= 0).all() and (x <= CFG.x_max).all()


def test_rollout_stats_rest_never_consumes():
    starts = [ws(pos=(1.5, 4.25)), ws()]
    stats = oracle.rollout_stats(starts, oracle.RestPolicy(), 200, CFG)
    assert all(s.consume_events == (0, 0, 0, 0) for s in stats)
    assert all(s.sleep_episodes == 0 for s in stats)
    assert oracle.rollout_stats([], oracle.RestPolicy(), 10, CFG) == []


def test_rollout_stats_counts_events():
    # consume for 1 time unit, rest 1, repeat: 20 steps each at dt 0.05
    p = oracle.ScriptPolicy([(Action.CONSUME_1, 1.0), (Action.REST, 0.5), (Action.SLEEP, 0.5)])
    st_ = oracle.rollout_stats([ws((-1, 0, 0, 0, 0, 2), pos=(1.5, 4.25))], p, 160, CFG)[0]
    assert st_.consume_events == (4, 0, 0, 0)
    assert st_.sleep_episodes == 4
