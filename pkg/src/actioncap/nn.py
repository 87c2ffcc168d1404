"""Minimal numerical layer for the sequence models.

Plain-numpy building blocks: a named parameter store with Adam-style
updates, a single-layer LSTM with hand-derived backpropagation through
time, softmax cross-entropy, inverted dropout, and a central
finite-difference gradient checker used as the correctness oracle for
every analytic gradient in the package.

All kernels are pure functions over explicit state; nothing touches
global RNGs. Training code runs in float32 by default, gradient checks
in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Sigmoid computed via exp(-|x|); never overflows."""
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                 dtype=np.float32) -> np.ndarray:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class LstmState:
    """Hidden and cell vectors of one LSTM; dims always match."""

    hidden: np.ndarray
    cell: np.ndarray

    def __post_init__(self) -> None:
        if self.hidden.shape != self.cell.shape:
            raise ConfigError(
                f"hidden/cell shape mismatch: {self.hidden.shape} vs {self.cell.shape}")


class ParamStore:
    """Named parameter tensors with gradient and Adam moment buffers.

    One store is confined to a single training run; independent runs use
    independent stores and may execute in parallel.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def accumulate_grad(self, name: str, grad: np.ndarray) -> None:
        buf = self.grads[name]
        if grad.shape != buf.shape:
            raise ConfigError(
                f"gradient shape {grad.shape} != parameter shape {buf.shape} for {name!r}")
        buf += grad

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def global_grad_norm(self) -> float:
        total = 0.0
        for g in self.grads.values():
            total += float(np.vdot(g, g).real)
        return float(np.sqrt(total))

    def clip_gradients(self, max_norm: float) -> float:
        """Scale all gradients so the global norm is at most max_norm."""
        norm = self.global_grad_norm()
        if norm > max_norm and norm > 0.0:
            scale = self.dtype.type(max_norm / norm)
            for g in self.grads.values():
                g *= scale
        return norm

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            self.params[k][...] = v


def optimizer_step(store: ParamStore, lr: float, weight_decay: float = 0.0,
                   beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                   eps: float = ADAM_EPS) -> None:
    """Adam update with decoupled weight decay, in place.

    Gradients are left untouched; callers zero them explicitly. With zero
    gradients and decay d each step multiplies a parameter by (1 - lr*d).
    """
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.params.items():
        g = store.grads[name]
        if name not in store._m:
            store._m[name] = np.zeros_like(p)
            store._v[name] = np.zeros_like(p)
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        if weight_decay != 0.0:
            update = update + weight_decay * p
        p -= store.dtype.type(lr) * update


def softmax_xent(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against a target index.

    Returns (loss, grad) with grad = softmax(logits) - onehot(target); the
    gradient components always sum to zero.
    """
    logits = np.asarray(logits)
    if not (0 <= target < logits.shape[-1]):
        raise ConfigError(f"target {target} out of range for {logits.shape[-1]} logits")
    losses, grads = softmax_xent_batch(logits[None, :], np.array([target]))
    return float(losses[0]), grads[0]


def softmax_xent_batch(logits: np.ndarray,
                       targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise softmax cross-entropy; grads are for the summed loss."""
    if np.any(targets < 0) or np.any(targets >= logits.shape[1]):
        raise ConfigError("target index out of vocabulary range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    rows = np.arange(logits.shape[0])
    losses = np.log(denom[:, 0]) - shifted[rows, targets]
    grads = exp / denom
    grads[rows, targets] -= 1.0
    return losses, grads


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator,
            training: bool) -> np.ndarray:
    """Inverted dropout: zero entries with prob `rate`, scale survivors.

    Identity at inference time or when rate == 0. The mask consumes one
    draw from `rng` per entry, so seeded streams stay reproducible.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    return x * keep * x.dtype.type(1.0 / (1.0 - rate))


class Lstm:
    """Single-layer LSTM bound to named tensors in a ParamStore.

    Weight layout: wx (input, 4H), wh (H, 4H), b (4H,), gate blocks
    ordered [input | forget | output | candidate] so the three sigmoid
    gates occupy one contiguous slab. Forget-gate bias starts at +1.
    """

    def __init__(self, store: ParamStore, prefix: str, input_size: int,
                 hidden_size: int, rng: np.random.Generator):
        self.store = store
        self.prefix = prefix
        self.input_size = input_size
        self.hidden_size = hidden_size
        h = hidden_size
        self.wx = store.add(f"{prefix}.wx", uniform_init(rng, (input_size, 4 * h),
                                                         input_size, store.dtype))
        self.wh = store.add(f"{prefix}.wh", uniform_init(rng, (h, 4 * h), h, store.dtype))
        bias = np.zeros(4 * h, dtype=store.dtype)
        bias[h:2 * h] = 1.0
        self.b = store.add(f"{prefix}.b", bias)

    def zero_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        h = np.zeros((batch, self.hidden_size), dtype=self.store.dtype)
        return h, h.copy()

    def _gates(self, pre: np.ndarray) -> np.ndarray:
        h = self.hidden_size
        act = np.empty_like(pre)
        act[:, :3 * h] = stable_sigmoid(pre[:, :3 * h])
        act[:, 3 * h:] = np.tanh(pre[:, 3 * h:])
        return act

    def step(self, x: np.ndarray, state: tuple[np.ndarray, np.ndarray]
             ) -> tuple[np.ndarray, np.ndarray]:
        """One cell update for a (batch, input) slice; no cache kept."""
        h_prev, c_prev = state
        if x.shape[-1] != self.input_size:
            raise ConfigError(
                f"input dim {x.shape[-1]} != declared input size {self.input_size}")
        if h_prev.shape[-1] != self.hidden_size:
            raise ConfigError(
                f"state dim {h_prev.shape[-1]} != hidden size {self.hidden_size}")
        act = self._gates(x @ self.wx + h_prev @ self.wh + self.b)
        hs = self.hidden_size
        i, f, o, g = (act[:, :hs], act[:, hs:2 * hs], act[:, 2 * hs:3 * hs], act[:, 3 * hs:])
        c = f * c_prev + i * g
        return o * np.tanh(c), c

    def forward(self, xs: np.ndarray, state0: tuple[np.ndarray, np.ndarray] | None = None,
                mask: np.ndarray | None = None):
        """Run the cell over a (T, B, input) sequence.

        `mask` (T, B) freezes state at padded steps, so the state after the
        last step is each sequence's state at its true length. Returns
        (hs, (h_T, c_T), cache) with hs of shape (T, B, H).
        """
        T, B, D = xs.shape
        if D != self.input_size:
            raise ConfigError(f"input dim {D} != declared input size {self.input_size}")
        hsz = self.hidden_size
        dt = self.store.dtype
        if state0 is None:
            state0 = self.zero_state(B)

        xw = xs.reshape(T * B, D) @ self.wx  # one fused GEMM for all steps
        xw = xw.reshape(T, B, 4 * hsz)
        xw += self.b

        h_all = np.empty((T + 1, B, hsz), dtype=dt)
        c_all = np.empty((T + 1, B, hsz), dtype=dt)
        h_all[0] = state0[0]
        c_all[0] = state0[1]
        act_all = np.empty((T, B, 4 * hsz), dtype=dt)
        tc_all = np.empty((T, B, hsz), dtype=dt)

        for t in range(T):
            act = self._gates(xw[t] + h_all[t] @ self.wh)
            act_all[t] = act
            i, f, o, g = (act[:, :hsz], act[:, hsz:2 * hsz],
                          act[:, 2 * hsz:3 * hsz], act[:, 3 * hsz:])
            c_new = f * c_all[t] + i * g
            tc = np.tanh(c_new)
            tc_all[t] = tc
            h_new = o * tc
            if mask is not None:
                m = mask[t][:, None]
                h_all[t + 1] = m * h_new + (1.0 - m) * h_all[t]
                c_all[t + 1] = m * c_new + (1.0 - m) * c_all[t]
            else:
                h_all[t + 1] = h_new
                c_all[t + 1] = c_new

        cache = (xs, mask, h_all, c_all, act_all, tc_all)
        return h_all[1:], (h_all[T], c_all[T]), cache

    def backward(self, cache, d_hs: np.ndarray | None,
                 d_h_final: np.ndarray | None = None,
                 d_c_final: np.ndarray | None = None):
        """Backprop through a cached forward; accumulates parameter grads.

        d_hs carries per-step gradients (zeros allowed), d_h_final/d_c_final
        extra gradient on the final state. Returns (d_xs, d_h0, d_c0).
        """
        xs, mask, h_all, c_all, act_all, tc_all = cache
        T, B, D = xs.shape
        hsz = self.hidden_size
        dt = self.store.dtype

        dg_all = np.empty((T, B, 4 * hsz), dtype=dt)
        dh_carry = np.zeros((B, hsz), dtype=dt)
        dc_carry = np.zeros((B, hsz), dtype=dt)
        if d_h_final is not None:
            dh_carry += d_h_final
        if d_c_final is not None:
            dc_carry += d_c_final

        for t in range(T - 1, -1, -1):
            dh = dh_carry
            if d_hs is not None:
                dh = dh + d_hs[t]
            dc = dc_carry
            if mask is not None:
                m = mask[t][:, None]
                dh_pass = dh * (1.0 - m)
                dc_pass = dc * (1.0 - m)
                dh = dh * m
                dc = dc * m
            else:
                dh_pass = None
                dc_pass = None

            act = act_all[t]
            i, f, o, g = (act[:, :hsz], act[:, hsz:2 * hsz],
                          act[:, 2 * hsz:3 * hsz], act[:, 3 * hsz:])
            tc = tc_all[t]
            c_prev = c_all[t]

            do = dh * tc
            dc_total = dc + dh * o * (1.0 - tc * tc)
            dg = dg_all[t]
            dg[:, :hsz] = dc_total * g * (i * (1.0 - i))            # input gate
            dg[:, hsz:2 * hsz] = dc_total * c_prev * (f * (1.0 - f))  # forget gate
            dg[:, 2 * hsz:3 * hsz] = do * (o * (1.0 - o))           # output gate
            dg[:, 3 * hsz:] = dc_total * i * (1.0 - g * g)          # candidate

            dc_carry = dc_total * f
            dh_carry = dg @ self.wh.T
            if dh_pass is not None:
                dh_carry += dh_pass
                dc_carry += dc_pass

        dg_flat = dg_all.reshape(T * B, 4 * hsz)
        self.store.accumulate_grad(f"{self.prefix}.wx",
                                   xs.reshape(T * B, D).T @ dg_flat)
        self.store.accumulate_grad(f"{self.prefix}.wh",
                                   h_all[:T].reshape(T * B, hsz).T @ dg_flat)
        self.store.accumulate_grad(f"{self.prefix}.b", dg_flat.sum(axis=0))
        d_xs = (dg_flat @ self.wx.T).reshape(T, B, D)
        return d_xs, dh_carry, dc_carry


def lstm_step(layer: Lstm, x: np.ndarray, prev: LstmState) -> LstmState:
    """Single-vector convenience wrapper around Lstm.step."""
    x = np.asarray(x, dtype=layer.store.dtype)
    if x.ndim != 1:
        raise ConfigError("lstm_step expects a 1-D input vector")
    h, c = layer.step(x[None, :], (prev.hidden[None, :], prev.cell[None, :]))
    return LstmState(hidden=h[0], cell=c[0])


def grad_check(loss_fn: Callable[[bool], float], store: ParamStore,
               eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn(compute_grads)` must return a scalar loss from the store's
    current parameters and, when compute_grads is True, accumulate the
    analytic gradients into the store. The closure must be deterministic;
    a drifting loss invalidates the check and raises. Run stores in
    float64: central differences at eps=1e-5 drown in float32 rounding.
    """
    l1 = loss_fn(False)
    l2 = loss_fn(False)
    if l1 != l2:
        raise ConfigError(
            f"loss closure is non-deterministic ({l1!r} vs {l2!r}); gradient check invalid")

    store.zero_grads()
    analytic_loss = loss_fn(True)
    if not np.isfinite(analytic_loss):
        raise ConfigError("loss is not finite; gradient check invalid")
    analytic = {k: g.copy() for k, g in store.grads.items()}

    max_err = 0.0
    for name, p in store.params.items():
        flat = p.reshape(-1)
        ana = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = loss_fn(False)
            flat[idx] = orig - eps
            lm = loss_fn(False)
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * eps)
            err = abs(ana[idx] - numeric) / max(abs(ana[idx]), abs(numeric), 1e-8)
            max_err = max(max_err, err)
    return max_err
