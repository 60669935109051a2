"""Dense tanh networks with hand-written backprop.

Besides the usual parameter gradients, the learner needs the Jacobian of
the output with respect to the input and the parameter gradient of a
directional derivative ``dJ/dx . v``. The latter is computed by carrying a
tangent alongside the forward pass and back-propagating through both.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np


def _act(z):
    return np.tanh(z)


class NetFormatError(ValueError):
    pass


class FeedForwardNet:
    """tanh hidden layers, identity output layer."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        sizes = [self.weights[0].shape[1]]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or w.shape[1] != sizes[-1] or b.shape[0] != w.shape[0]:
                raise ValueError("inconsistent layer shapes")
            sizes.append(w.shape[0])
        self.layer_sizes = tuple(sizes)

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator | int) -> FeedForwardNet:
        """Glorot-uniform weights, zero biases."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int]) -> FeedForwardNet:
        return cls([np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])],
                   [np.zeros(o) for o in layer_sizes[1:]])

    def copy(self) -> FeedForwardNet:
        return FeedForwardNet(self.weights, self.biases)

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Live parameter arrays, ordered [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"input length {x.shape[-1]} != {self.n_in}")
        return x

    # ------------------------------------------------------------------
    # evaluation

    def forward(self, x) -> np.ndarray:
        """Rows of a 2-D input are evaluated independently."""
        a = self._check_input(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == last else _act(z)
        return a

    def _trace(self, x):
        """Inputs to every layer plus hidden activations."""
        acts = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(w @ a + b)
            acts.append(a)
        y = self.weights[-1] @ a + self.biases[-1]
        return acts, y

    def grad_params(self, x, output_cotangent) -> list[np.ndarray]:
        """Gradient of ``cot . forward(x)`` w.r.t. [W0, b0, W1, b1, ...]."""
        x = self._check_input(x)
        cot = np.asarray(output_cotangent, dtype=float)
        if x.ndim != 1 or cot.shape != (self.n_out,):
            raise ValueError("grad_params expects a single input and an output-sized cotangent")
        acts, _ = self._trace(x)
        grads: list[np.ndarray] = []
        g = cot
        for k in range(len(self.weights) - 1, -1, -1):
            a_in = acts[k]
            grads.append(g)  # bias
            grads.append(g[:, None] * a_in)
            if k:
                g = (self.weights[k].T @ g) * (1.0 - a_in * a_in)
        grads.reverse()
        return grads

    def grad_input(self, x) -> np.ndarray:
        """Jacobian of forward at x, shape (n_out, n_in)."""
        x = self._check_input(x)
        if x.ndim != 1:
            raise ValueError("grad_input expects a single input vector")
        acts, _ = self._trace(x)
        jac = self.weights[-1]
        for k in range(len(self.weights) - 1, 0, -1):
            a = acts[k]
            jac = (jac * (1.0 - a * a)) @ self.weights[k - 1]
        return jac

    def grad_input_batch(self, x) -> np.ndarray:
        """Per-row Jacobians of a 2-D input, shape (n, n_out, n_in)."""
        x = self._check_input(x)
        if x.ndim != 2:
            raise ValueError("grad_input_batch expects rows of inputs")
        acts = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(a @ w.T + b)
            acts.append(a)
        jac = np.broadcast_to(self.weights[-1], (x.shape[0],) + self.weights[-1].shape)
        for k in range(len(self.weights) - 1, 0, -1):
            a = acts[k]
            jac = (jac * (1.0 - a * a)[:, None, :]) @ self.weights[k - 1]
        return jac

    def jvp(self, x, v) -> tuple[np.ndarray, np.ndarray]:
        """(forward(x), Jacobian(x) @ v)."""
        y, ydot, _ = self._jvp_trace(self._check_input(x), np.asarray(v, dtype=float))
        return y, ydot

    def _jvp_trace(self, x, v):
        if x.ndim != 1 or v.shape != x.shape:
            raise ValueError("jvp expects matching single input and tangent")
        acts, tans, zdots = [x], [v], [None]
        a, t = x, v
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(w @ a + b)
            zd = w @ t
            t = (1.0 - a * a) * zd
            acts.append(a)
            tans.append(t)
            zdots.append(zd)
        y = self.weights[-1] @ a + self.biases[-1]
        ydot = self.weights[-1] @ t
        return y, ydot, (acts, tans, zdots)

    def grad_params_jvp(self, x, v, cot_y, cot_ydot) -> list[np.ndarray]:
        """Parameter gradient of ``cot_y . y + cot_ydot . (J(x) v)``.

        The second term is the mixed input/parameter derivative needed when a
        loss contains the input gradient of the network.
        """
        x = self._check_input(x)
        v = np.asarray(v, dtype=float)
        _, _, (acts, tans, zdots) = self._jvp_trace(x, v)
        gy = np.asarray(cot_y, dtype=float).reshape(self.n_out)
        gt = np.asarray(cot_ydot, dtype=float).reshape(self.n_out)
        grads: list[np.ndarray] = []
        for k in range(len(self.weights) - 1, -1, -1):
            a_in, t_in = acts[k], tans[k]
            grads.append(gy)
            grads.append(gy[:, None] * a_in + gt[:, None] * t_in)
            if k:
                w = self.weights[k]
                abar = w.T @ gy
                tbar = w.T @ gt
                # a = tanh(z), t = tanh'(z) * zdot
                d1 = 1.0 - a_in * a_in
                d2 = -2.0 * a_in * d1
                gy = abar * d1 + tbar * d2 * zdots[k]
                gt = tbar * d1
        grads.reverse()
        return grads

    # ------------------------------------------------------------------
    # training

    def sgd_step(self, grads: Sequence[np.ndarray], learning_rate: float) -> bool:
        """In-place descent step; returns False (and changes nothing) on non-finite gradients."""
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        params = self.params()
        if len(grads) != len(params):
            raise ValueError("gradient list does not match parameters")
        total = 0.0
        for p, g in zip(params, grads):
            if g.shape != p.shape:
                raise ValueError("gradient shape mismatch")
            total += float(g.sum())
        # NaN/inf propagate through the sum; an overflowing sum of finite
        # entries falls through to the exact check
        if not np.isfinite(total) and not all(np.isfinite(g).all() for g in grads):
            return False
        for p, g in zip(params, grads):
            p -= learning_rate * g
        return True

    # ------------------------------------------------------------------
    # flat views, used by finite-difference checks

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError("flat parameter vector has wrong length")
        i = 0
        for p in self.params():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    # ------------------------------------------------------------------
    # serialization: count-prefixed int32 layer sizes, then per layer the
    # row-major weights followed by the biases, all little-endian

    def to_bytes(self) -> bytes:
        head = struct.pack("<i", len(self.layer_sizes))
        head += struct.pack(f"<{len(self.layer_sizes)}i", *self.layer_sizes)
        body = b"".join(
            np.ascontiguousarray(w, dtype="<f8").tobytes() + np.ascontiguousarray(b, dtype="<f8").tobytes()
            for w, b in zip(self.weights, self.biases)
        )
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> FeedForwardNet:
        try:
            (count,) = struct.unpack_from("<i", data, 0)
            if not 2 <= count <= 64:
                raise NetFormatError(f"implausible layer count {count}")
            sizes = struct.unpack_from(f"<{count}i", data, 4)
        except struct.error as exc:
            raise NetFormatError(f"truncated header: {exc}") from None
        if any(s < 1 for s in sizes):
            raise NetFormatError("layer sizes must be positive")
        offset = 4 + 4 * count
        expected = offset + 8 * sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
        if len(data) != expected:
            raise NetFormatError(f"expected {expected} bytes, found {len(data)}")
        ws, bs = [], []
        for i, o in zip(sizes[:-1], sizes[1:]):
            ws.append(np.frombuffer(data, "<f8", o * i, offset).reshape(o, i).astype(float))
            offset += 8 * o * i
            bs.append(np.frombuffer(data, "<f8", o, offset).astype(float))
            offset += 8 * o
        return cls(ws, bs)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> FeedForwardNet:
        return cls.from_bytes(Path(path).read_bytes())
