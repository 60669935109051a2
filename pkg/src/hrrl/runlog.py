"""Append-only per-step training records and their CSV form."""

from __future__ import annotations

import csv
import io
from typing import NamedTuple

import numpy as np

from .world import Action

ZETA_COLUMNS = ("d1", "d2", "d3", "d4", "d5", "d6", "pos_x", "pos_y", "heading")
COLUMNS = ("step", "clock", *ZETA_COLUMNS, "action", "drive", "reward", "loss_f", "loss_j", "epsilon")


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


class StepRecord(NamedTuple):
    step: int
    clock: float
    zeta: tuple[float, ...]
    action: Action
    drive: float
    reward: float
    loss_f: float
    loss_j: float
    epsilon: float


class RunLog:
    """Column-oriented storage; records can only be appended."""

    def __init__(self, capacity: int = 1024):
        capacity = max(int(capacity), 1)
        self._n = 0
        self.step = np.zeros(capacity, dtype=np.int64)
        self.clock = np.zeros(capacity)
        self.zeta = np.zeros((capacity, 9))
        self.action = np.zeros(capacity, dtype=np.int64)
        self.drive = np.zeros(capacity)
        self.reward = np.zeros(capacity)
        self.loss_f = np.zeros(capacity)
        self.loss_j = np.zeros(capacity)
        self.epsilon = np.zeros(capacity)
        self.anomalies: list[str] = []

    def __len__(self) -> int:
        return self._n

    def _grow(self) -> None:
        for name in ("step", "clock", "zeta", "action", "drive", "reward", "loss_f", "loss_j", "epsilon"):
            arr = getattr(self, name)
            new = np.zeros((2 * arr.shape[0],) + arr.shape[1:], dtype=arr.dtype)
            new[: self._n] = arr[: self._n]
            setattr(self, name, new)

    def append(self, step, clock, zeta, action, drive, reward, loss_f, loss_j, epsilon) -> None:
        if self._n and step <= self.step[self._n - 1]:
            raise ValueError("step index must increase strictly")
        if self._n == self.step.shape[0]:
            self._grow()
        i = self._n
        self.step[i] = step
        self.clock[i] = clock
        self.zeta[i] = zeta
        self.action[i] = int(action)
        self.drive[i] = drive
        self.reward[i] = reward
        self.loss_f[i] = loss_f
        self.loss_j[i] = loss_j
        self.epsilon[i] = epsilon
        self._n += 1

    def column(self, name: str) -> np.ndarray:
        return getattr(self, name)[: self._n]

    def record(self, i: int) -> StepRecord:
        if not -self._n <= i < self._n:
            raise IndexError(i)
        i %= self._n
        return StepRecord(int(self.step[i]), float(self.clock[i]), tuple(self.zeta[i].tolist()),
                          Action(int(self.action[i])), float(self.drive[i]), float(self.reward[i]),
                          float(self.loss_f[i]), float(self.loss_j[i]), float(self.epsilon[i]))

    def __iter__(self):
        return (self.record(i) for i in range(self._n))

    def write_csv(self, fh: io.TextIOBase, every: int = 1) -> int:
        """Write the header and every ``every``-th record; returns rows written."""
        every = max(int(every), 1)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        names = [a.name for a in Action]
        rows = 0
        for i in range(0, self._n, every):
            w.writerow([
                str(int(self.step[i])), fmt(self.clock[i]), *(fmt(v) for v in self.zeta[i]),
                names[self.action[i]], fmt(self.drive[i]), fmt(self.reward[i]),
                fmt(self.loss_f[i]), fmt(self.loss_j[i]), fmt(self.epsilon[i]),
            ])
            rows += 1
        return rows
