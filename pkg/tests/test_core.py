import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hrrl.core import (
    SingularityError,
    Zeta,
    constant_control_drive,
    constant_control_reward,
    drive,
    drive_batch,
    reward_from_transition,
    value_from_deviation,
)

finite = st.floats(-50, 50, allow_nan=False)
delta6 = st.lists(finite, min_size=6, max_size=6)


def test_drive_examples():
    assert drive([0.0] * 6) == 0.0
    assert drive([3, 4, 0, 0, 0, 0]) == 5.0
    assert drive([1, 1, 1, 1, 0, 0], 1e-8) == math.sqrt(4 + 1e-8)


def test_drive_rejects_negative_eps():
    with pytest.raises(ValueError):
        drive([1.0], -1e-3)


def test_drive_smoothing_positive_at_set_point():
    assert drive([0.0] * 6, 1e-8) == pytest.approx(1e-4)


@given(delta6, st.permutations(range(6)))
def test_drive_permutation_and_sign_invariant(d, perm):
    base = drive(d)
    assert drive([d[i] for i in perm]) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert drive([-v for v in d]) == base


@given(delta6, delta6)
def test_drive_triangle_inequality(a, b):
    s = [x + y for x, y in zip(a, b)]
    assert drive(s) <= drive(a) + drive(b) + 1e-9


@given(st.lists(delta6, min_size=1, max_size=8), st.floats(0, 1))
def test_drive_batch_matches_scalar(rows, eps):
    arr = np.array(rows)
    np.testing.assert_allclose(drive_batch(arr, eps), [drive(r, eps) for r in rows], rtol=1e-12)


def test_reward_examples():
    d = [0.3, -1.0, 0, 0, 0, 0]
    assert reward_from_transition(d, d, 0.1) == 0.0
    # drive 2 -> 1 over dt 0.5
    assert reward_from_transition([2, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0], 0.5) == 2.0


@pytest.mark.parametrize("dt", [0.0, -0.1])
def test_reward_rejects_nonpositive_dt(dt):
    with pytest.raises(ValueError):
        reward_from_transition([1.0], [0.5], dt)


@given(delta6, delta6, st.floats(1e-3, 10))
def test_reward_positive_iff_drive_decreased(a, b, dt):
    r = reward_from_transition(a, b, dt)
    if drive(b) < drive(a):
        assert r > 0
    elif drive(b) > drive(a):
        assert r < 0
    else:
        assert r == 0


def test_constant_control_drive_examples():
    assert constant_control_drive(0.0, 1.0, [3.0, 4.0]) == 5.0
    assert constant_control_drive(1.0, 1.0, [-2.0, 0.0]) == 1.0
    assert constant_control_drive(2.0, 1.0, [-2.0, 0.0]) == 0.0


@given(st.floats(0, 5), st.floats(-3, 3), st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_constant_control_drive_is_drive_of_shifted_state(t, m, d0):
    shifted = np.array(d0, dtype=float)
    shifted[0] += t * m
    assert constant_control_drive(t, m, d0) == pytest.approx(drive(shifted), rel=1e-9, abs=1e-6)


def test_constant_control_reward_examples():
    assert constant_control_reward(0.0, 1.0, [-2.0, 0.0]) == 1.0
    assert constant_control_reward(1.0, 1.0, [-2.0, 0.0]) == 1.0
    for t in (0.0, 0.7, 3.0):
        assert constant_control_reward(t, 0.0, [-2.0, 1.0]) == 0.0


def test_constant_control_reward_singular_at_set_point():
    with pytest.raises(SingularityError):
        constant_control_reward(2.0, 1.0, [-2.0, 0.0])


def test_discretized_reward_converges_first_order():
    # exact trajectory delta(t) = delta0 + t*m*e1; one-step reward vs closed form
    d0 = np.array([-2.5, 1.0, 0.5])
    m, t = 0.8, 0.4
    exact = constant_control_reward(t, m, d0)
    errs = []
    for dt in (1e-2, 1e-3, 1e-4):
        a = d0 + np.array([t * m, 0, 0])
        b = d0 + np.array([(t + dt) * m, 0, 0])
        errs.append(abs(reward_from_transition(a, b, dt) - exact))
    assert errs[0] > errs[1] > errs[2]
    for coarse, fine in zip(errs, errs[1:]):
        assert 5 < coarse / fine < 20  # about a factor 10 per decade


def test_value_from_deviation():
    assert value_from_deviation(2.5, 0.0, 0.9) == 2.5
    j = 1.0 / -math.log(0.95)
    assert value_from_deviation(1.0, j, 0.95) == pytest.approx(0.0, abs=1e-12)
    for g in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            value_from_deviation(1.0, 1.0, g)


@given(st.lists(finite, min_size=9, max_size=9))
def test_zeta_roundtrip(vals):
    z = Zeta.from_array(vals)
    assert Zeta.from_array(z.as_array()) == z
    assert Zeta.from_parts(z.delta, z.external) == z
    assert list(z.as_array()) == vals


def test_zeta_layout():
    z = Zeta.from_parts([0, 0, 0, -4, 0, 0], [1.5, 2.5, 0.0])
    assert z.as_array().tolist() == [0, 0, 0, -4, 0, 0, 1.5, 2.5, 0.0]
    with pytest.raises(ValueError):
        Zeta.from_array([0.0] * 8)
