"""Overcomplete denoising contractive auto-encoder over pose vectors.

Encoding layers are ``h_j = relu(W_j h_{j-1} + b_j)``; decoding uses the
tied transposes ``W_j.T`` with separate decode biases. Intermediate decode
layers mirror the ReLU of the encoder and the last one (back to pose space)
is linear.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import container
from .errors import DimensionError, ParameterError
from .numerics import Adam, RngStream, glorot_uniform, relu
from .pose import as_pose

log = logging.getLogger(__name__)

KIND = "autoencoder"


@dataclass
class AutoEncoderParams:
    enc_weights: list[np.ndarray]
    enc_biases: list[np.ndarray]
    dec_biases: list[np.ndarray]
    require_overcomplete: bool = True

    def __post_init__(self):
        if not self.enc_weights:
            raise DimensionError("an auto-encoder needs at least one layer")
        if not len(self.enc_weights) == len(self.enc_biases) == len(self.dec_biases):
            raise DimensionError("weights, encode biases and decode biases differ in layer count")
        prev = self.enc_weights[0].shape[1]
        for j, (w, be, bd) in enumerate(zip(self.enc_weights, self.enc_biases, self.dec_biases)):
            if w.ndim != 2 or w.shape[1] != prev:
                raise DimensionError(f"layer {j + 1} weight {w.shape} does not accept input of size {prev}")
            if be.shape != (w.shape[0],):
                raise DimensionError(f"layer {j + 1} encode bias {be.shape}, expected ({w.shape[0]},)")
            if bd.shape != (w.shape[1],):
                raise DimensionError(f"layer {j + 1} decode bias {bd.shape}, expected ({w.shape[1]},)")
            prev = w.shape[0]
        if self.require_overcomplete and self.latent_dim <= self.input_dim:
            raise DimensionError(
                f"middle layer ({self.latent_dim}) must be larger than the pose dimension ({self.input_dim})"
            )

    @property
    def n_layers(self) -> int:
        return len(self.enc_weights)

    @property
    def input_dim(self) -> int:
        return self.enc_weights[0].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.enc_weights[-1].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [w.shape[0] for w in self.enc_weights]

    def dec_weight(self, j: int) -> np.ndarray:
        """Decode weight of layer ``j`` (0-based): the transpose of its encode weight."""
        return self.enc_weights[j].T

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, be, bd in zip(self.enc_weights, self.enc_biases, self.dec_biases):
            out += [w, be, bd]
        return out

    def copy(self) -> "AutoEncoderParams":
        return AutoEncoderParams(
            [w.copy() for w in self.enc_weights],
            [b.copy() for b in self.enc_biases],
            [b.copy() for b in self.dec_biases],
            self.require_overcomplete,
        )

    @classmethod
    def initialize(
        cls, input_dim: int, layer_sizes: Sequence[int], rng: RngStream, require_overcomplete: bool = True
    ) -> "AutoEncoderParams":
        """Glorot-uniform weights, zero biases."""
        ws, bes, bds = [], [], []
        prev = input_dim
        for size in layer_sizes:
            ws.append(glorot_uniform(rng, size, prev))
            bes.append(np.zeros(size))
            bds.append(np.zeros(prev))
            prev = size
        return cls(ws, bes, bds, require_overcomplete)

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for j, (w, be, bd) in enumerate(zip(self.enc_weights, self.enc_biases, self.dec_biases)):
            arrays[f"enc_w.{j}"] = w
            arrays[f"enc_b.{j}"] = be
            arrays[f"dec_b.{j}"] = bd
        return arrays

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], require_overcomplete: bool = True) -> "AutoEncoderParams":
        n = sum(1 for k in arrays if k.startswith("enc_w."))
        try:
            return cls(
                [arrays[f"enc_w.{j}"].copy() for j in range(n)],
                [arrays[f"enc_b.{j}"].copy() for j in range(n)],
                [arrays[f"dec_b.{j}"].copy() for j in range(n)],
                require_overcomplete,
            )
        except KeyError as exc:
            raise DimensionError(f"auto-encoder arrays incomplete: missing {exc}") from exc

    def save(self, path, meta: dict[str, object] | None = None) -> str:
        header = {"layers": "-".join(map(str, self.layer_sizes)), "input_dim": self.input_dim,
                  "require_overcomplete": self.require_overcomplete}
        header.update(meta or {})
        return container.save_model(path, KIND, self.to_arrays(), header)

    @classmethod
    def load(cls, path) -> "AutoEncoderParams":
        kind, arrays, meta = container.load_model(path)
        if kind != KIND:
            raise DimensionError(f"{path} holds a {kind!r} model, not an auto-encoder")
        return cls.from_arrays(arrays, meta.get("require_overcomplete", "True") == "True")


@dataclass
class AeTrainConfig:
    lam: float = 0.1
    noise_sigmas: tuple[float, ...] = (40.0,)
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        self.noise_sigmas = tuple(float(s) for s in self.noise_sigmas)
        if self.lam < 0:
            raise ParameterError(f"contractive weight must be >= 0, got {self.lam}")
        if any(s < 0 for s in self.noise_sigmas):
            raise ParameterError(f"noise sigmas must be >= 0, got {self.noise_sigmas}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("learning_rate > 0, batch_size >= 1 and epochs >= 0 are required")


# ------------------------------------------------------------------ forward map


def corrupt(pose: np.ndarray, sigma: float, rng: RngStream, root_relative: bool = True) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise to every coordinate, then re-zero the root."""
    if sigma < 0:
        raise ParameterError(f"noise sigma must be >= 0, got {sigma}")
    pose = np.asarray(pose, dtype=np.float64)
    noisy = pose + rng.normal(pose.shape, scale=sigma)
    if root_relative:
        noisy[..., :3] = 0.0
    return noisy


def _check_input(params: AutoEncoderParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.input_dim:
        raise DimensionError(f"input shaped {x.shape}, auto-encoder expects (..., {params.input_dim})")
    return x


def _encode_trace(params: AutoEncoderParams, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    pres, acts = [], [x]
    for w, b in zip(params.enc_weights, params.enc_biases):
        z = acts[-1] @ w.T + b
        pres.append(z)
        acts.append(relu(z))
    return pres, acts


def _decode_trace(params: AutoEncoderParams, h: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    # index k of the returned lists refers to encode layer k (0-based)
    L = params.n_layers
    pres: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    ins: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    x = h
    for j in reversed(range(L)):
        ins[j] = x
        z = x @ params.enc_weights[j] + params.dec_biases[j]
        pres[j] = z
        x = relu(z) if j > 0 else z
    return pres, ins


def encode(params: AutoEncoderParams, pose: np.ndarray) -> np.ndarray:
    x = _check_input(params, pose)
    return _encode_trace(params, x)[1][-1]


def decode(params: AutoEncoderParams, code: np.ndarray) -> np.ndarray:
    h = np.asarray(code, dtype=np.float64)
    if h.ndim not in (1, 2) or h.shape[-1] != params.latent_dim:
        raise DimensionError(f"code shaped {h.shape}, auto-encoder expects (..., {params.latent_dim})")
    pres, _ = _decode_trace(params, h)
    return pres[0]


def reconstruct(params: AutoEncoderParams, pose: np.ndarray) -> np.ndarray:
    return decode(params, encode(params, pose))


# ---------------------------------------------------------- contractive penalty


def _penalty_batch(params: AutoEncoderParams, x: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Sum over the batch of ||dg/dx||_F^2 and its gradient w.r.t. encode weights.

    The Jacobian at x is D_L W_L ... D_1 W_1 with D_j the 0/1 activity mask
    of layer j. Masks are locally constant in the parameters, so biases get
    no gradient.
    """
    pres, _ = _encode_trace(params, x)
    masks = [(z > 0).astype(np.float64) for z in pres]
    ws = params.enc_weights
    if params.n_layers == 1:
        counts = masks[0].sum(axis=0)
        row_sq = np.einsum("ij,ij->i", ws[0], ws[0])
        return float(counts @ row_sq), [2.0 * counts[:, None] * ws[0]]
    prods = [masks[0][:, :, None] * ws[0][None]]
    for j in range(1, params.n_layers):
        prods.append(masks[j][:, :, None] * np.matmul(ws[j], prods[-1]))
    jac = prods[-1]
    value = float(np.sum(jac * jac))
    grads: list[np.ndarray] = [None] * params.n_layers  # type: ignore[list-item]
    u = masks[-1][:, :, None] * jac
    for j in reversed(range(params.n_layers)):
        if j == 0:
            grads[0] = 2.0 * u.sum(axis=0)
        else:
            # sum_n u_n @ prods_n^T as one matrix product
            a, b = u.shape[1], prods[j - 1].shape[1]
            grads[j] = 2.0 * (u.transpose(1, 0, 2).reshape(a, -1) @ prods[j - 1].transpose(1, 0, 2).reshape(b, -1).T)
            u = masks[j - 1][:, :, None] * np.matmul(ws[j].T, u)
    return value, grads


def contractive_penalty(params: AutoEncoderParams, pose: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Squared Frobenius norm of the encoder Jacobian at ``pose``.

    Returns the value and its gradient in :meth:`AutoEncoderParams.parameters`
    order. A batch input gives the sum over samples.
    """
    x = _check_input(params, pose)
    value, wgrads = _penalty_batch(params, np.atleast_2d(x))
    grads = []
    for j, gw in enumerate(wgrads):
        grads += [gw, np.zeros_like(params.enc_biases[j]), np.zeros_like(params.dec_biases[j])]
    return value, grads


def encoder_jacobian(params: AutoEncoderParams, pose: np.ndarray) -> np.ndarray:
    x = _check_input(params, pose)
    pres, _ = _encode_trace(params, x)
    jac = np.eye(params.input_dim)
    for z, w in zip(pres, params.enc_weights):
        jac = (z > 0)[:, None] * (w @ jac)
    return jac


# ------------------------------------------------------------------------ loss


def ae_loss(
    params: AutoEncoderParams,
    clean_batch: np.ndarray,
    rng: RngStream,
    config: AeTrainConfig,
    sigma: float | None = None,
    root_relative: bool = True,
) -> tuple[float, list[np.ndarray]]:
    """Summed denoising reconstruction error plus weighted contractive penalty.

    The encoder sees the corrupted batch; the target and the penalty use the
    clean batch. ``sigma`` defaults to the first-layer noise level. Gradients
    are sums over the batch, in :meth:`AutoEncoderParams.parameters` order;
    the decode contribution to each tied weight is folded into it.
    """
    y = _check_input(params, clean_batch)
    y = np.atleast_2d(y)
    if y.shape[0] == 0:
        raise ParameterError("ae_loss needs a non-empty batch")
    sigma = config.noise_sigmas[0] if sigma is None else sigma
    noisy = corrupt(y, sigma, rng, root_relative) if sigma > 0 else y

    pres, acts = _encode_trace(params, noisy)
    dpres, dins = _decode_trace(params, acts[-1])
    resid = dpres[0] - y
    loss = float(np.sum(resid * resid))

    L = params.n_layers
    gw = [np.zeros_like(w) for w in params.enc_weights]
    gbe = [None] * L
    gbd = [None] * L
    g = 2.0 * resid
    for j in range(L):
        if j > 0:
            g = np.where(dpres[j] > 0, g, 0.0)
        # z = x @ W + b_dec  =>  dW += x^T g
        gw[j] += dins[j].T @ g
        gbd[j] = g.sum(axis=0)
        g = g @ params.enc_weights[j].T
    for j in reversed(range(L)):
        g = np.where(pres[j] > 0, g, 0.0)
        gw[j] += g.T @ acts[j]
        gbe[j] = g.sum(axis=0)
        g = g @ params.enc_weights[j]

    if config.lam > 0:
        pen, pgrads = _penalty_batch(params, y)
        loss += config.lam * pen
        for j in range(L):
            gw[j] += config.lam * pgrads[j]

    grads = []
    for j in range(L):
        grads += [gw[j], gbe[j], gbd[j]]
    return loss, grads


def mean_reconstruction_error(params: AutoEncoderParams, clean: np.ndarray, noisy: np.ndarray | None = None) -> float:
    """Mean per-joint Euclidean error (mm) of reconstructing ``clean`` from ``noisy``."""
    from .eval import mpjpe_batch

    rec = reconstruct(params, clean if noisy is None else noisy)
    return float(np.mean(mpjpe_batch(rec, clean)))


# -------------------------------------------------------------------- training


@dataclass
class TrainLog:
    epochs: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def add(self, epoch: int, loss: float) -> None:
        self.epochs.append(epoch)
        self.losses.append(loss)


def _eval_objective(params, data, config, sigma, root_relative, eval_rng_key) -> float:
    rng = RngStream(config.seed, eval_rng_key)
    total = 0.0
    for start in range(0, len(data), 512):
        total += ae_loss(params, data[start : start + 512], rng, config, sigma, root_relative)[0]
    return total / len(data)


def _fit(
    params: AutoEncoderParams,
    data: np.ndarray,
    config: AeTrainConfig,
    sigma: float,
    root_relative: bool,
    rng: RngStream,
    keep_best: bool,
    eval_key: tuple[int, ...],
    log_: TrainLog | None,
) -> AutoEncoderParams:
    params = params.copy()
    if config.epochs == 0:
        return params
    opt = Adam(config.learning_rate)
    best, best_val = None, np.inf
    if keep_best:
        best, best_val = params.copy(), _eval_objective(params, data, config, sigma, root_relative, eval_key)
    n = len(data)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = data[order[start : start + config.batch_size]]
            loss, grads = ae_loss(params, batch, rng, config, sigma, root_relative)
            total += loss
            opt.step(params.parameters(), [g / len(batch) for g in grads])
        if log_ is not None:
            log_.add(epoch + 1, total / n)
        if keep_best:
            val = _eval_objective(params, data, config, sigma, root_relative, eval_key)
            if val <= best_val:
                best, best_val = params.copy(), val
    return best if keep_best else params


def train_dae(
    data: np.ndarray,
    hidden_dim: int,
    sigma: float,
    config: AeTrainConfig,
    layer_index: int = 0,
    root_relative: bool = True,
    require_overcomplete: bool = True,
    log_: TrainLog | None = None,
) -> AutoEncoderParams:
    """Train a single-layer denoising contractive auto-encoder on ``data``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0:
        raise DimensionError(f"training data must be a non-empty (n, d) array, got {data.shape}")
    root = RngStream(config.seed).substream(1, layer_index)
    params = AutoEncoderParams.initialize(
        data.shape[1], [hidden_dim], root.substream(0), require_overcomplete
    )
    return _fit(params, data, config, sigma, root_relative, root.substream(1), False, (), log_)


def pretrain_layerwise(
    poses: np.ndarray,
    layer_sizes: Sequence[int],
    config: AeTrainConfig,
    require_overcomplete: bool = True,
    log_: TrainLog | None = None,
) -> AutoEncoderParams:
    """Greedy layer-wise pretraining.

    Layer 1 is a DAE on the poses with ``noise_sigmas[0]``; layer j is a DAE
    on the clean codes of layer j-1 with ``noise_sigmas[j-1]``.
    """
    poses = as_pose(poses)
    if poses.ndim != 2 or len(poses) == 0:
        raise DimensionError("pretraining needs a non-empty batch of poses")
    if len(config.noise_sigmas) != len(layer_sizes):
        raise ParameterError(
            f"{len(layer_sizes)} layers but {len(config.noise_sigmas)} noise sigmas"
        )
    ws, bes, bds = [], [], []
    inputs = poses
    for j, size in enumerate(layer_sizes):
        sub = train_dae(
            inputs, size, config.noise_sigmas[j], config,
            layer_index=j, root_relative=(j == 0), require_overcomplete=False, log_=log_,
        )
        ws.append(sub.enc_weights[0])
        bes.append(sub.enc_biases[0])
        bds.append(sub.dec_biases[0])
        inputs = encode(sub, inputs)
    return AutoEncoderParams(ws, bes, bds, require_overcomplete)


def finetune_ae(
    params: AutoEncoderParams, poses: np.ndarray, config: AeTrainConfig, log_: TrainLog | None = None
) -> AutoEncoderParams:
    """Train the whole auto-encoder end to end on ``ae_loss``.

    The objective is measured on the full training set with a fixed noise
    draw at entry and after each epoch; the best parameters seen are
    returned, so the training objective never rises.
    """
    poses = as_pose(poses)
    if poses.ndim != 2 or poses.shape[1] != params.input_dim:
        raise DimensionError(f"poses shaped {poses.shape} do not match auto-encoder input {params.input_dim}")
    rng = RngStream(config.seed).substream(2, 1)
    return _fit(params, poses, config, config.noise_sigmas[0], True, rng, True, (2, 2), log_)


def code_sparsity(params: AutoEncoderParams, poses: np.ndarray) -> float:
    """Mean fraction of exactly-zero latent entries."""
    return float(np.mean(encode(params, poses) == 0.0))
