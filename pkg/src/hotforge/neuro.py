"""Minimal deterministic neural-network engine on float64 numpy arrays.

Five layer types (Linear, ReLU, Dropout, Conv1D, GRU), mean-absolute-error
loss, Adam with bias correction, a seeded training loop and a central
finite-difference gradient checker. Layers keep their parameters and
gradient accumulators; composite models chain layer forward/backward calls
explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Linear", "ReLU", "Dropout", "Conv1D", "GRU",
    "ShapeError", "mae_loss", "AdamState", "adam_step", "Adam",
    "TrainHistory", "train", "gradient_check",
]


class ShapeError(ValueError):
    """Input shape incompatible with a layer's specification."""


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def xavier_uniform(shape, rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base: parameters as (name, array) pairs with aligned grad buffers."""

    def params(self) -> list:
        return []

    def grads(self) -> list:
        return []

    def zero_grads(self) -> None:
        for g in self.grads():
            g[...] = 0.0

    def spec(self) -> dict:
        return {"kind": type(self).__name__}


class Linear(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        self.n_in, self.n_out = n_in, n_out
        if rng is None:
            self.W = np.zeros((n_out, n_in))
        else:
            self.W = xavier_uniform((n_out, n_in), rng, n_in, n_out)
        self.b = np.zeros(n_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    def forward(self, x, mode="eval", rng=None):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"Linear({self.n_in}->{self.n_out}) got input {x.shape}")
        return x @ self.W.T + self.b, x

    def backward(self, dy, cache):
        x = cache
        self.gW += dy.T @ x
        self.gb += dy.sum(axis=0)
        return dy @ self.W

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def grads(self):
        return [self.gW, self.gb]

    def spec(self):
        return {"kind": "Linear", "in": self.n_in, "out": self.n_out}


class ReLU(Layer):
    def forward(self, x, mode="eval", rng=None):
        return np.maximum(x, 0.0), x

    def backward(self, dy, cache):
        return dy * (cache > 0.0)


class Dropout(Layer):
    def __init__(self, p: float = 0.1):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p

    def forward(self, x, mode="eval", rng=None):
        if mode != "train" or self.p == 0.0:
            return x, None
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * mask, mask

    def backward(self, dy, cache):
        return dy if cache is None else dy * cache

    def spec(self):
        return {"kind": "Dropout", "p": self.p}


class Conv1D(Layer):
    """Cross-correlating 1-D convolution over the last axis, kernel 3 default."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1,
                 padding: int = 1, rng: np.random.Generator | None = None):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan_in = in_ch * kernel
        if rng is None:
            self.W = np.zeros((out_ch, in_ch, kernel))
        else:
            self.W = xavier_uniform((out_ch, in_ch, kernel), rng, fan_in, out_ch * kernel)
        self.b = np.zeros(out_ch)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    def _l_out(self, length: int) -> int:
        return (length + 2 * self.padding - self.kernel) // self.stride + 1

    def forward(self, x, mode="eval", rng=None):
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise ShapeError(f"Conv1D({self.in_ch}->{self.out_ch}) got input {x.shape}")
        bsz, _, length = x.shape
        l_out = self._l_out(length)
        xp = np.pad(x, ((0, 0), (0, 0), (self.padding, self.padding)))
        # columns: (batch, l_out, in_ch * kernel)
        cols = np.empty((bsz, l_out, self.in_ch * self.kernel))
        for o in range(l_out):
            s = o * self.stride
            cols[:, o, :] = xp[:, :, s:s + self.kernel].reshape(bsz, -1)
        y = cols @ self.W.reshape(self.out_ch, -1).T + self.b
        return y.transpose(0, 2, 1), (cols, x.shape)

    def backward(self, dy, cache):
        cols, x_shape = cache
        bsz, _, length = x_shape
        l_out = dy.shape[2]
        dyt = dy.transpose(0, 2, 1)                      # (batch, l_out, out_ch)
        wf = self.W.reshape(self.out_ch, -1)
        self.gW += (dyt.reshape(-1, self.out_ch).T @ cols.reshape(-1, wf.shape[1])).reshape(self.W.shape)
        self.gb += dyt.sum(axis=(0, 1))
        dcols = dyt @ wf                                 # (batch, l_out, in_ch*kernel)
        dxp = np.zeros((bsz, self.in_ch, length + 2 * self.padding))
        for o in range(l_out):
            s = o * self.stride
            dxp[:, :, s:s + self.kernel] += dcols[:, o, :].reshape(bsz, self.in_ch, self.kernel)
        if self.padding:
            return dxp[:, :, self.padding:-self.padding]
        return dxp

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def grads(self):
        return [self.gW, self.gb]

    def spec(self):
        return {"kind": "Conv1D", "in": self.in_ch, "out": self.out_ch,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding}


class GRU(Layer):
    """Gated recurrent unit over (batch, steps, features), all states returned.

    Gate order in the stacked weights is reset, update, candidate; the update
    gate scales the previous hidden state, so zero weights give h' = 0.5 h.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator | None = None):
        self.input_size, self.hidden_size = input_size, hidden_size
        h = hidden_size
        if rng is None:
            self.W_ih = np.zeros((3 * h, input_size))
            self.W_hh = np.zeros((3 * h, h))
        else:
            scale = 1.0 / math.sqrt(h)
            self.W_ih = rng.uniform(-scale, scale, size=(3 * h, input_size))
            self.W_hh = rng.uniform(-scale, scale, size=(3 * h, h))
        self.b_ih = np.zeros(3 * h)
        self.b_hh = np.zeros(3 * h)
        self.gW_ih = np.zeros_like(self.W_ih)
        self.gW_hh = np.zeros_like(self.W_hh)
        self.gb_ih = np.zeros_like(self.b_ih)
        self.gb_hh = np.zeros_like(self.b_hh)

    def forward(self, x, mode="eval", rng=None):
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(f"GRU({self.input_size}->{self.hidden_size}) got input {x.shape}")
        bsz, steps, _ = x.shape
        h = np.zeros((bsz, self.hidden_size))
        hs = self.hidden_size
        out = np.empty((bsz, steps, hs))
        caches = []
        for t in range(steps):
            xt = x[:, t, :]
            gi = xt @ self.W_ih.T + self.b_ih
            gh = h @ self.W_hh.T + self.b_hh
            r = _sigmoid(gi[:, :hs] + gh[:, :hs])
            z = _sigmoid(gi[:, hs:2 * hs] + gh[:, hs:2 * hs])
            ghn = gh[:, 2 * hs:]
            n = np.tanh(gi[:, 2 * hs:] + r * ghn)
            h_new = (1.0 - z) * n + z * h
            caches.append((xt, h, r, z, n, ghn))
            out[:, t, :] = h_new
            h = h_new
        return out, caches

    def backward(self, dy, caches):
        bsz, steps, hs = dy.shape
        dx = np.empty((bsz, steps, self.input_size))
        dh_next = np.zeros((bsz, hs))
        for t in range(steps - 1, -1, -1):
            xt, h_prev, r, z, n, ghn = caches[t]
            dh = dy[:, t, :] + dh_next
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z
            dn_pre = dn * (1.0 - n * n)
            dr = dn_pre * ghn
            dghn = dn_pre * r
            dr_pre = dr * r * (1.0 - r)
            dz_pre = dz * z * (1.0 - z)
            dgi = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
            dgh = np.concatenate([dr_pre, dz_pre, dghn], axis=1)
            self.gW_ih += dgi.T @ xt
            self.gW_hh += dgh.T @ h_prev
            self.gb_ih += dgi.sum(axis=0)
            self.gb_hh += dgh.sum(axis=0)
            dx[:, t, :] = dgi @ self.W_ih
            dh_next = dh_prev + dgh @ self.W_hh
        return dx

    def params(self):
        return [("W_ih", self.W_ih), ("W_hh", self.W_hh),
                ("b_ih", self.b_ih), ("b_hh", self.b_hh)]

    def grads(self):
        return [self.gW_ih, self.gW_hh, self.gb_ih, self.gb_hh]

    def spec(self):
        return {"kind": "GRU", "in": self.input_size, "hidden": self.hidden_size}


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error and its (sub)gradient, with sign(0) = 0."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.abs(diff)))
    return loss, np.sign(diff) / diff.size


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params: list) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list, grads: list, state: AdamState, lr: float = 0.001,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, applied to the arrays in place."""
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, params: list, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState.for_params(params)

    def step(self, grads: list) -> None:
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainHistory:
    train_mae: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)


def train(model, train_inputs: tuple, train_targets: np.ndarray,
          val_inputs: tuple | None = None, val_targets: np.ndarray | None = None,
          epochs: int = 1, batch_size: int = 128, lr: float = 0.001,
          seed: int = 0) -> TrainHistory:
    """Seeded mini-batch Adam training against the MAE loss.

    The model protocol: forward(inputs, mode, rng) -> prediction,
    backward(dloss), zero_grads(), parameter_arrays(), gradient_arrays().
    Shuffling and dropout derive from one generator keyed to the seed, so a
    fixed seed reproduces the run exactly. Raises on non-finite loss.
    """
    n = train_targets.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    opt = Adam(model.parameter_arrays(), lr=lr)
    history = TrainHistory()
    for epoch in range(epochs):
        order = rng.permutation(n)
        seen = 0
        loss_sum = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch_in = tuple(a[idx] for a in train_inputs)
            pred = model.forward(batch_in, mode="train", rng=rng)
            loss, dloss = mae_loss(pred, train_targets[idx])
            if not math.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {start // batch_size}")
            model.zero_grads()
            model.backward(dloss)
            opt.step(model.gradient_arrays())
            loss_sum += loss * idx.size
            seen += idx.size
        history.train_mae.append(loss_sum / seen)
        if val_inputs is not None and val_targets is not None and val_targets.shape[0]:
            pred = model.forward(val_inputs, mode="eval", rng=None)
            history.val_mae.append(float(np.mean(np.abs(pred - val_targets))))
    return history


def gradient_check(model, inputs: tuple, targets: np.ndarray, n_samples: int = 200,
                   h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between backprop and central finite differences.

    Train-mode forwards are made repeatable by recreating the dropout
    generator identically for every evaluation.
    """
    rng = np.random.default_rng(seed)

    def fwd():
        return model.forward(inputs, mode="train", rng=np.random.default_rng(seed + 1))

    pred = fwd()
    _, dloss = mae_loss(pred, targets)
    model.zero_grads()
    model.backward(dloss)
    params = model.parameter_arrays()
    grads = [g.copy() for g in model.gradient_arrays()]

    worst = 0.0
    sizes = np.array([p.size for p in params])
    probs = sizes / sizes.sum()
    for _ in range(n_samples):
        k = rng.choice(len(params), p=probs)
        flat = rng.integers(params[k].size)
        p = params[k].reshape(-1)
        orig = p[flat]
        p[flat] = orig + h
        lp, _ = mae_loss(fwd(), targets)
        p[flat] = orig - h
        lm, _ = mae_loss(fwd(), targets)
        p[flat] = orig
        fd = (lp - lm) / (2.0 * h)
        bp = grads[k].reshape(-1)[flat]
        err = abs(fd - bp) / max(abs(fd), abs(bp), 1e-8)
        worst = max(worst, err)
    return worst
