import numpy as np
import pytest

from hrrl import verify
from hrrl.approx import FeedForwardNet
from hrrl.config import RunConfig
from hrrl.core import constant_control_drive, constant_control_reward

CFG = RunConfig()


def test_sign_suites_pass():
    results = verify.sign_suite()
    assert len(results) == 6
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
    assert all(r.detail == "200/200" for r in results)


def test_tampered_reward_detected():
    def flipped(t, m, d0):
        return -constant_control_reward(t, m, d0)

    results = {r.name: r.passed for r in verify.sign_suite(reward_fn=flipped)}
    assert not results["sign:reward_vs_abs_delta1[d1>=0]"]
    assert not results["sign:reward_vs_abs_delta1[d1<=0]"]
    # the drive suites use the untouched drive
    assert results["sign:drive_vs_consumed[d1+tm<=0]"]


def test_tampered_drive_detected():
    results = verify.sign_suite(drive_fn=lambda t, m, d0: constant_control_drive(t, m, d0) + 0.1 * t * m)
    assert not all(r.passed for r in results if r.name.startswith("sign:drive"))


def test_gradient_checks_pass_small():
    cfg = CFG.replace(f_hidden=(7, 5), j_hidden=(6, 4))
    results = verify.gradient_checks(cfg, n_nets=3)
    assert {r.name for r in results} == {"grad:f_net.grad_params", "grad:f_net.grad_input",
                                         "grad:j_net.grad_params", "grad:j_net.grad_input", "grad:j_net.mixed"}
    assert all(r.passed for r in results)


def test_gradient_checks_catch_broken_mixed_term(monkeypatch):
    orig = FeedForwardNet.grad_params_jvp

    def broken(self, x, v, cot_y, cot_ydot):
        # drop the tangent's contribution: a plausible implementation slip
        return orig(self, x, np.zeros_like(np.asarray(v, dtype=float)), cot_y, cot_ydot)

    monkeypatch.setattr(FeedForwardNet, "grad_params_jvp", broken)
    cfg = CFG.replace(f_hidden=(4,), j_hidden=(5, 3))
    results = {r.name: r.passed for r in verify.gradient_checks(cfg, n_nets=2)}
    assert not results["grad:j_net.mixed"]
    assert results["grad:j_net.grad_params"]


def test_identity_checks_small():
    results, reports = verify.identity_checks(CFG, gammas=(0.5,), n_starts=3, dt_oracle=1e-3)
    assert [r.name for r in results] == ["identity:gamma=0.5", "ordering:gamma=0.5"]
    assert results[0].passed
    assert len(reports[0].rows) == 9


def test_identity_check_fails_with_coarse_left_rule():
    results, _ = verify.identity_checks(CFG, gammas=(0.5,), n_starts=2, dt_oracle=2e-2, quadrature="left")
    assert not results[0].passed


def test_check_result_line():
    assert verify.CheckResult("x", True, "ok").line() == "PASS  x  ok"
    assert verify.CheckResult("y", False).line() == "FAIL  y"
