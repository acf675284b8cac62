"""Numeric kernels: layers with hand-derived backward passes, ADAM, RNG and
finite-difference oracles.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Layer functions
accept either a single sample or a leading batch axis; the backward of each
layer takes the upstream gradient and whatever the forward returned as cache.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError

FLOAT = np.float64


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    arr = np.asarray(x, dtype=FLOAT)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


class RngStream:
    """Seedable random stream backed by numpy's PCG64 bit generator.

    PCG64 output for a given seed is identical on every platform numpy
    supports. Normal variates come from numpy's ziggurat sampler
    (``Generator.standard_normal``). Substreams are derived with
    ``SeedSequence`` spawn keys so that per-sample streams are independent of
    evaluation order.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in _key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key))
        )
        self.draws = 0

    def substream(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(key))

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        self.draws += 1
        return self._gen.standard_normal(size) * scale

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        self.draws += 1
        return self._gen.uniform(low, high, size)

    def random(self, size=None) -> np.ndarray:
        self.draws += 1
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        self.draws += 1
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key}, draws={self.draws})"


def glorot_uniform(rng: RngStream, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


# ---------------------------------------------------------------- dense / relu


def dense_forward(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``W @ x + b`` for a vector ``x`` of shape (in,) or a batch (n, in)."""
    if weights.ndim != 2:
        raise DimensionError(f"weights must be a matrix, got shape {weights.shape}")
    out_dim, in_dim = weights.shape
    if bias.shape != (out_dim,):
        raise DimensionError(f"bias has shape {bias.shape}, expected ({out_dim},)")
    if x.shape[-1] != in_dim or x.ndim not in (1, 2):
        raise DimensionError(f"input has shape {x.shape}, expected (..., {in_dim})")
    return x @ weights.T + bias


def dense_backward(
    weights: np.ndarray, x: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (dW, db, dx). Batch gradients are summed over the batch."""
    if grad_out.shape[:-1] != x.shape[:-1] or grad_out.shape[-1] != weights.shape[0]:
        raise DimensionError(
            f"upstream gradient has shape {grad_out.shape}, expected {x.shape[:-1] + (weights.shape[0],)}"
        )
    if x.ndim == 1:
        dw = np.outer(grad_out, x)
        db = grad_out.copy()
    else:
        dw = grad_out.T @ x
        db = grad_out.sum(axis=0)
    return dw, db, grad_out @ weights


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is taken as 0
    return np.where(x > 0, grad_out, 0.0)


# ------------------------------------------------------------------- conv/pool


def _batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise DimensionError(f"expected a {ndim}-d sample or {ndim + 1}-d batch, got shape {x.shape}")


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1, no padding.

    ``x`` is (C, H, W) or (N, C, H, W); ``kernels`` is (K, C, kh, kw).
    """
    xb, single = _batched(x, 3)
    if kernels.ndim != 4:
        raise DimensionError(f"kernels must be (K, C, kh, kw), got {kernels.shape}")
    k, c, kh, kw = kernels.shape
    _, xc, h, w = xb.shape
    if xc != c:
        raise DimensionError(f"input has {xc} channels, kernels expect {c}")
    if kh > h or kw > w:
        raise DimensionError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    if bias.shape != (k,):
        raise DimensionError(f"bias has shape {bias.shape}, expected ({k},)")
    win = sliding_window_view(xb, (kh, kw), axis=(2, 3))  # N,C,Ho,Wo,kh,kw
    out = np.tensordot(win, kernels, axes=([1, 4, 5], [1, 2, 3]))  # N,Ho,Wo,K
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    return out[0] if single else np.ascontiguousarray(out)


def conv2d_backward(
    x: np.ndarray, kernels: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (dK, db, dx) for :func:`conv2d_forward`."""
    xb, single = _batched(x, 3)
    gb, _ = _batched(grad_out, 3)
    k, c, kh, kw = kernels.shape
    win = sliding_window_view(xb, (kh, kw), axis=(2, 3))
    dk = np.tensordot(gb, win, axes=([0, 2, 3], [0, 2, 3]))  # K,C,kh,kw
    db = gb.sum(axis=(0, 2, 3))
    padded = np.pad(gb, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    gwin = sliding_window_view(padded, (kh, kw), axis=(2, 3))  # N,K,H,W,kh,kw
    flipped = kernels[:, :, ::-1, ::-1]
    dx = np.tensordot(gwin, flipped, axes=([1, 4, 5], [0, 2, 3]))  # N,H,W,C
    dx = dx.transpose(0, 3, 1, 2)
    return dk, db, (dx[0] if single else np.ascontiguousarray(dx))


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping 2x2 max pooling over the last two axes.

    Odd spatial sizes drop the last row/column. Ties go to the first
    row-major position in the window. Returns (pooled, argmax) where argmax
    holds the in-window index 0..3.
    """
    if x.ndim < 2:
        raise DimensionError(f"maxpool needs at least 2 dims, got shape {x.shape}")
    h2, w2 = x.shape[-2] // 2, x.shape[-1] // 2
    if h2 == 0 or w2 == 0:
        raise DimensionError(f"spatial size {x.shape[-2:]} too small to pool")
    lead = x.shape[:-2]
    t = x[..., : 2 * h2, : 2 * w2].reshape(lead + (h2, 2, w2, 2))
    t = np.moveaxis(t, -3, -2).reshape(lead + (h2, w2, 4))
    idx = np.argmax(t, axis=-1)
    pooled = np.take_along_axis(t, idx[..., None], axis=-1)[..., 0]
    return pooled, idx


def maxpool2x2_backward(
    grad_out: np.ndarray, argmax: np.ndarray, input_shape: Sequence[int]
) -> np.ndarray:
    lead = tuple(input_shape[:-2])
    h2, w2 = argmax.shape[-2:]
    onehot = (argmax[..., None] == np.arange(4)) * grad_out[..., None]
    t = onehot.reshape(lead + (h2, w2, 2, 2))
    t = np.moveaxis(t, -2, -3).reshape(lead + (2 * h2, 2 * w2))
    grad_in = np.zeros(tuple(input_shape), dtype=FLOAT)
    grad_in[..., : 2 * h2, : 2 * w2] = t
    return grad_in


# --------------------------------------------------------------------- dropout


def dropout(
    x: np.ndarray, p: float, rng: RngStream | None, training: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout. Returns (output, scaled keep-mask or None)."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise ParameterError("training-mode dropout needs an RngStream")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(mask: np.ndarray | None, grad_out: np.ndarray) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


# ------------------------------------------------------------------------ ADAM


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, learning_rate: float = 1e-3, **kw) -> "AdamState":
        if learning_rate <= 0:
            raise ParameterError(f"learning rate must be positive, got {learning_rate}")
        return cls(np.zeros_like(params, dtype=FLOAT), np.zeros_like(params, dtype=FLOAT),
                   0, learning_rate, **kw)


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update. Inputs are not modified."""
    if params.shape != grads.shape:
        raise DimensionError(f"params {params.shape} and grads {grads.shape} differ")
    if state.first_moment.shape != params.shape:
        raise DimensionError(
            f"optimizer state shaped {state.first_moment.shape}, params {params.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(m, v, t, state.learning_rate, state.beta1, state.beta2, state.epsilon)
    return new_params, new_state


@dataclass
class Adam:
    """ADAM over a list of parameter arrays, updated in place."""

    learning_rate: float = 1e-3
    states: list[AdamState] = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if not self.states:
            self.states = [AdamState.zeros_like(p, self.learning_rate) for p in params]
        if len(params) != len(self.states) or len(grads) != len(params):
            raise DimensionError("parameter list changed between optimizer steps")
        for i, (p, g) in enumerate(zip(params, grads)):
            new_p, self.states[i] = adam_step(self.states[i], p, g)
            p[...] = new_p


# ---------------------------------------------------------------- grad oracles


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = np.array(x, dtype=FLOAT)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def finite_diff_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=FLOAT)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.reshape(-1)[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))).reshape(-1) / (2.0 * h))
    return np.stack(cols, axis=1)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)``; 0 when both are zero."""
    a, b = np.asarray(a, dtype=FLOAT), np.asarray(b, dtype=FLOAT)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
