import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hrrl.runlog import COLUMNS, RunLog, fmt
from hrrl.world import Action


def add(log, step, action=Action.REST, x=0.0):
    log.append(step, 0.05 * step, np.full(9, x), action, 1.0 + x, -x, 1e-3, 2e-3, 0.5)


def test_append_grows_and_reads_back():
    log = RunLog(2)
    for k in range(1, 11):
        add(log, k, x=k / 10)
    assert len(log) == 10
    rec = log.record(-1)
    assert rec.step == 10 and rec.zeta == (1.0,) * 9 and rec.action is Action.REST
    assert [r.step for r in log] == list(range(1, 11))
    with pytest.raises(IndexError):
        log.record(10)


def test_steps_strictly_increase():
    log = RunLog()
    add(log, 3)
    with pytest.raises(ValueError):
        add(log, 3)
    with pytest.raises(ValueError):
        add(log, 2)


def test_csv_header_and_thinning():
    log = RunLog()
    for k in range(1, 8):
        add(log, k, Action.CONSUME_2)
    buf = io.StringIO()
    assert log.write_csv(buf, every=3) == 3
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == list(COLUMNS)
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "4", "7"]
    assert lines[1].split(",")[COLUMNS.index("action")] == "CONSUME_2"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x
