"""A plain LSTM layer with batched forward and backpropagation through time.

Gate rows in ``W``/``b`` are stacked in the order input, forget, output,
candidate.  Each gate block is ``H x (input_dim + H)`` acting on the
concatenation ``[x_t, h_{t-1}]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GATES = ("i", "f", "o", "g")


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmParams:
    W: np.ndarray  # (4H, I + H)
    b: np.ndarray  # (4H,)

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.hidden_dim

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator,
             forget_bias: float = 1.0) -> "LstmParams":
        k = 1.0 / np.sqrt(hidden_dim)
        W = rng.uniform(-k, k, (4 * hidden_dim, input_dim + hidden_dim))
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim:2 * hidden_dim] = forget_bias
        return cls(W, b)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        return cls(np.zeros((4 * hidden_dim, input_dim + hidden_dim)), np.zeros(4 * hidden_dim))

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Views ``(W_gate, b_gate)`` of one gate block."""
        H = self.hidden_dim
        k = GATES.index(name)
        return self.W[k * H:(k + 1) * H], self.b[k * H:(k + 1) * H]

    def copy(self) -> "LstmParams":
        return LstmParams(self.W.copy(), self.b.copy())


def lstm_step(layer: LstmParams, x: np.ndarray, state: tuple[np.ndarray, np.ndarray]):
    """One recurrence step; ``x`` may be ``(I,)`` or batched ``(B, I)``."""
    h, c = state
    if x.shape[-1] != layer.input_dim or h.shape[-1] != layer.hidden_dim:
        raise ValueError(f"dimension mismatch: layer is {layer.input_dim}->{layer.hidden_dim}, "
                         f"got x {x.shape} and h {h.shape}")
    H = layer.hidden_dim
    z = np.concatenate([x, h], axis=-1) @ layer.W.T + layer.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    o = sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


@dataclass
class LstmTrace:
    xh: np.ndarray  # (B, T, I + H) concatenated inputs
    gates: np.ndarray  # (B, T, 4H) post-activation i, f, o, g
    c: np.ndarray  # (B, T + 1, H), c[:, 0] is the initial cell
    h: np.ndarray  # (B, T, H)


def lstm_forward(layer: LstmParams, X: np.ndarray) -> LstmTrace:
    """Run over ``X`` of shape ``(B, T, I)`` from a zero state."""
    B, T, _ = X.shape
    H, I = layer.hidden_dim, layer.input_dim
    if X.shape[2] != I:
        raise ValueError(f"expected input dim {I}, got {X.shape[2]}")
    xh = np.zeros((B, T, I + H))
    gates = np.zeros((B, T, 4 * H))
    c = np.zeros((B, T + 1, H))
    hs = np.zeros((B, T, H))
    h = np.zeros((B, H))
    WT = layer.W.T
    for t in range(T):
        xh[:, t, :I] = X[:, t]
        xh[:, t, I:] = h
        z = xh[:, t] @ WT + layer.b
        gt = gates[:, t]
        gt[:, :3 * H] = sigmoid(z[:, :3 * H])
        gt[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        c[:, t + 1] = gt[:, H:2 * H] * c[:, t] + gt[:, :H] * gt[:, 3 * H:]
        h = gt[:, 2 * H:3 * H] * np.tanh(c[:, t + 1])
        hs[:, t] = h
    return LstmTrace(xh, gates, c, hs)


def lstm_backward(layer: LstmParams, trace: LstmTrace, dH: np.ndarray):
    """BPTT given ``dH`` = dLoss/dh_t from outside the recurrence, ``(B, T, H)``.

    Returns ``(dX, dW, db)``.
    """
    B, T, H = dH.shape
    I = layer.input_dim
    W = layer.W
    dW = np.zeros_like(W)
    db = np.zeros_like(layer.b)
    dX = np.zeros((B, T, I))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dz = np.zeros((B, 4 * H))
    for t in range(T - 1, -1, -1):
        gt = trace.gates[:, t]
        i, f, o, g = gt[:, :H], gt[:, H:2 * H], gt[:, 2 * H:3 * H], gt[:, 3 * H:]
        tc = np.tanh(trace.c[:, t + 1])
        dh = dH[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * trace.c[:, t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - g * g)
        dW += dz.T @ trace.xh[:, t]
        db += dz.sum(axis=0)
        dxh = dz @ W
        dX[:, t] = dxh[:, :I]
        dh_next = dxh[:, I:]
        dc_next = dc * f
    return dX, dW, db
