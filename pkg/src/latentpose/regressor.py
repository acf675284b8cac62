"""Image regressors: the CNN mapping images to latent codes, decoder stacking
and end-to-end fine-tuning, plus the CNN-Direct, CNN-ExtraFC and CNN-PCA
baselines.

Every model here is a :class:`StackedNetworkParams`: a convolutional body
(:class:`ImageEncoderParams`) followed by a possibly empty head of dense
layers. The latent pipeline's head is the auto-encoder decoder, CNN-PCA's is
the frozen PCA reprojection, and CNN-Direct/ExtraFC have none.

The body's last layer is ``shift + scale * (W a + b)`` where ``shift`` and
``scale`` are constants fixed from the training targets when the body is
created; only ``W`` and ``b`` are learned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import container
from .autoencoder import AutoEncoderParams, encode
from .errors import DimensionError, ParameterError
from .eval import mpjpe_batch
from .numerics import (
    Adam,
    RngStream,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dropout,
    dropout_backward,
    glorot_uniform,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
)

log = logging.getLogger(__name__)


@dataclass
class CnnShape:
    image_size: int = 32
    in_channels: int = 1
    channels: tuple[int, ...] = (8, 16, 32)
    kernels: tuple[int, ...] = (5, 3, 3)
    fc: tuple[int, ...] = (128, 128, 64)

    def __post_init__(self):
        self.channels, self.kernels, self.fc = tuple(self.channels), tuple(self.kernels), tuple(self.fc)
        if len(self.channels) != len(self.kernels):
            raise ParameterError("one kernel size per convolutional layer is required")
        if any(c < 1 for c in (*self.channels, *self.fc)):
            raise ParameterError("channel counts and dense widths must be positive")
        self.flat_dim  # validates spatial sizes

    @property
    def flat_dim(self) -> int:
        size = self.image_size
        for k in self.kernels:
            size = size - k + 1
            if size < 2:
                raise ParameterError(f"image size {self.image_size} too small for kernels {self.kernels}")
            size //= 2
        return self.channels[-1] * size * size


@dataclass
class RegTrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 60
    dropout_p: float = 0.5
    seed: int = 0
    augment: bool = False

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("learning_rate > 0, batch_size >= 1 and epochs >= 0 are required")


def crop_size(image_size: int) -> int:
    """Random-crop side length: 112/128 of the image, rounded."""
    return int(round(image_size * 112 / 128))


def random_crops(images: np.ndarray, rng: RngStream) -> np.ndarray:
    n, _, h, w = images.shape
    c = crop_size(h)
    offs = rng.integers(0, h - c + 1, size=(n, 2))
    return np.stack([images[i, :, r : r + c, s : s + c] for i, (r, s) in enumerate(offs)])


def center_crops(images: np.ndarray) -> np.ndarray:
    h = images.shape[-1]
    c = crop_size(h)
    o = (h - c) // 2
    return images[..., o : o + c, o : o + c]


# ------------------------------------------------------------------ parameters


@dataclass
class ImageEncoderParams:
    conv_k: list[np.ndarray]
    conv_b: list[np.ndarray]
    fc_w: list[np.ndarray]
    fc_b: list[np.ndarray]
    out_w: np.ndarray
    out_b: np.ndarray
    out_shift: np.ndarray
    out_scale: float = 1.0
    image_size: int = 32

    @property
    def out_dim(self) -> int:
        return self.out_w.shape[0]

    @property
    def in_channels(self) -> int:
        return self.conv_k[0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for k, b in zip(self.conv_k, self.conv_b):
            out += [k, b]
        for w, b in zip(self.fc_w, self.fc_b):
            out += [w, b]
        return out + [self.out_w, self.out_b]

    def copy(self) -> "ImageEncoderParams":
        return ImageEncoderParams(
            [k.copy() for k in self.conv_k], [b.copy() for b in self.conv_b],
            [w.copy() for w in self.fc_w], [b.copy() for b in self.fc_b],
            self.out_w.copy(), self.out_b.copy(), self.out_shift.copy(), self.out_scale, self.image_size,
        )

    @classmethod
    def initialize(
        cls, shape: CnnShape, out_dim: int, rng: RngStream,
        out_shift: np.ndarray | None = None, out_scale: float = 1.0,
    ) -> "ImageEncoderParams":
        conv_k, conv_b, fc_w, fc_b = [], [], [], []
        cin = shape.in_channels
        for cout, k in zip(shape.channels, shape.kernels):
            conv_k.append(_conv_init(rng, cout, cin, k))
            conv_b.append(np.zeros(cout))
            cin = cout
        prev = shape.flat_dim
        for width in shape.fc:
            fc_w.append(glorot_uniform(rng, width, prev))
            fc_b.append(np.zeros(width))
            prev = width
        out_w = glorot_uniform(rng, out_dim, prev)
        shift = np.zeros(out_dim) if out_shift is None else np.asarray(out_shift, float).copy()
        if shift.shape != (out_dim,):
            raise DimensionError(f"output shift shaped {shift.shape}, expected ({out_dim},)")
        return cls(conv_k, conv_b, fc_w, fc_b, out_w, np.zeros(out_dim), shift, float(out_scale), shape.image_size)

    def to_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        a = {}
        for i, (k, b) in enumerate(zip(self.conv_k, self.conv_b)):
            a[f"{prefix}conv_k.{i}"], a[f"{prefix}conv_b.{i}"] = k, b
        for i, (w, b) in enumerate(zip(self.fc_w, self.fc_b)):
            a[f"{prefix}fc_w.{i}"], a[f"{prefix}fc_b.{i}"] = w, b
        a[f"{prefix}out_w"], a[f"{prefix}out_b"] = self.out_w, self.out_b
        a[f"{prefix}out_shift"] = self.out_shift
        a[f"{prefix}out_scale"] = np.array([self.out_scale])
        a[f"{prefix}image_size"] = np.array([float(self.image_size)])
        return a

    @classmethod
    def from_arrays(cls, a: dict[str, np.ndarray], prefix: str = "") -> "ImageEncoderParams":
        nc = sum(1 for k in a if k.startswith(f"{prefix}conv_k."))
        nf = sum(1 for k in a if k.startswith(f"{prefix}fc_w."))
        return cls(
            [a[f"{prefix}conv_k.{i}"].copy() for i in range(nc)], [a[f"{prefix}conv_b.{i}"].copy() for i in range(nc)],
            [a[f"{prefix}fc_w.{i}"].copy() for i in range(nf)], [a[f"{prefix}fc_b.{i}"].copy() for i in range(nf)],
            a[f"{prefix}out_w"].copy(), a[f"{prefix}out_b"].copy(), a[f"{prefix}out_shift"].copy(),
            float(a[f"{prefix}out_scale"][0]), int(a[f"{prefix}image_size"][0]),
        )


def _conv_init(rng: RngStream, cout: int, cin: int, k: int) -> np.ndarray:
    limit = np.sqrt(6.0 / ((cin + cout) * k * k))
    return rng.uniform(-limit, limit, size=(cout, cin, k, k))


@dataclass
class StackedNetworkParams:
    """A CNN body followed by dense head layers (weights stored untied)."""

    encoder: ImageEncoderParams
    head_w: list[np.ndarray] = field(default_factory=list)
    head_b: list[np.ndarray] = field(default_factory=list)
    head_relu: list[bool] = field(default_factory=list)
    head_trainable: bool = True
    kind: str = "direct"

    def __post_init__(self):
        prev = self.encoder.out_dim
        for i, (w, b) in enumerate(zip(self.head_w, self.head_b)):
            if w.shape[1] != prev or b.shape != (w.shape[0],):
                raise DimensionError(f"head layer {i} shaped {w.shape} does not follow a {prev}-d input")
            prev = w.shape[0]
        if not len(self.head_w) == len(self.head_b) == len(self.head_relu):
            raise DimensionError("head weights, biases and activations differ in length")

    @property
    def out_dim(self) -> int:
        return self.head_w[-1].shape[0] if self.head_w else self.encoder.out_dim

    def parameters(self, head: bool | None = None) -> list[np.ndarray]:
        out = self.encoder.parameters()
        if self.head_trainable if head is None else head:
            for w, b in zip(self.head_w, self.head_b):
                out += [w, b]
        return out

    def copy(self) -> "StackedNetworkParams":
        return StackedNetworkParams(self.encoder.copy(), [w.copy() for w in self.head_w],
                                    [b.copy() for b in self.head_b], list(self.head_relu),
                                    self.head_trainable, self.kind)

    def save(self, path, meta: dict[str, object] | None = None) -> str:
        arrays = self.encoder.to_arrays("enc.")
        for i, (w, b) in enumerate(zip(self.head_w, self.head_b)):
            arrays[f"head_w.{i}"], arrays[f"head_b.{i}"] = w, b
        header = {"head_relu": ",".join("1" if r else "0" for r in self.head_relu),
                  "head_trainable": int(self.head_trainable)}
        header.update(meta or {})
        return container.save_model(path, f"stacked:{self.kind}", arrays, header)

    @classmethod
    def load(cls, path) -> "StackedNetworkParams":
        kind, arrays, meta = container.load_model(path)
        if not kind.startswith("stacked:"):
            raise DimensionError(f"{path} holds a {kind!r} model, not an image regressor")
        n = sum(1 for k in arrays if k.startswith("head_w."))
        relus = [t == "1" for t in meta.get("head_relu", "").split(",") if t]
        return cls(ImageEncoderParams.from_arrays(arrays, "enc."),
                   [arrays[f"head_w.{i}"].copy() for i in range(n)], [arrays[f"head_b.{i}"].copy() for i in range(n)],
                   relus, meta.get("head_trainable", "1") == "1", kind.split(":", 1)[1])


# --------------------------------------------------------------- forward/back


def _check_images(params: ImageEncoderParams, images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != params.in_channels:
        raise DimensionError(f"images shaped {np.shape(images)}, expected (n, {params.in_channels}, H, W)")
    if x.shape[-2:] != (params.image_size, params.image_size):
        raise DimensionError(f"images are {x.shape[-2]}x{x.shape[-1]}, network expects {params.image_size}x{params.image_size}")
    return x


def _cnn_forward(params: ImageEncoderParams, x: np.ndarray, dropout_p: float, rng, training: bool):
    cache = {"conv": [], "fc": []}
    a = x
    for k, b in zip(params.conv_k, params.conv_b):
        z = conv2d_forward(a, k, b)
        r = relu(z)
        pooled, idx = maxpool2x2(r)
        cache["conv"].append((a, z, idx, r.shape))
        a = pooled
    cache["flat_shape"] = a.shape
    a = a.reshape(len(a), -1)
    expected = params.fc_w[0].shape[1] if params.fc_w else params.out_w.shape[1]
    if a.shape[1] != expected:
        raise DimensionError(f"images of size {x.shape[-2:]} give {a.shape[1]} features, network expects a different size")
    for w, b in zip(params.fc_w, params.fc_b):
        z = a @ w.T + b
        h, mask = dropout(relu(z), dropout_p, rng, training)
        cache["fc"].append((a, z, mask))
        a = h
    cache["out_in"] = a
    out = params.out_shift + params.out_scale * (a @ params.out_w.T + params.out_b)
    return out, cache


def _cnn_backward(params: ImageEncoderParams, cache, grad_out: np.ndarray) -> list[np.ndarray]:
    g = grad_out * params.out_scale
    d_ow, d_ob, g = dense_backward(params.out_w, cache["out_in"], g)
    fc_grads = []
    for (a, z, mask), w in zip(reversed(cache["fc"]), reversed(params.fc_w)):
        g = relu_backward(z, dropout_backward(mask, g))
        dw, db, g = dense_backward(w, a, g)
        fc_grads.append((dw, db))
    g = g.reshape(cache["flat_shape"])
    conv_grads = []
    for (a, z, idx, rshape), k in zip(reversed(cache["conv"]), reversed(params.conv_k)):
        g = relu_backward(z, maxpool2x2_backward(g, idx, rshape))
        dk, db, g = conv2d_backward(a, k, g)
        conv_grads.append((dk, db))
    grads = []
    for dk, db in reversed(conv_grads):
        grads += [dk, db]
    for dw, db in reversed(fc_grads):
        grads += [dw, db]
    return grads + [d_ow, d_ob]


def cnn_forward(
    params: ImageEncoderParams, image: np.ndarray, training: bool = False,
    dropout_p: float = 0.0, rng: RngStream | None = None,
) -> np.ndarray:
    """Latent prediction for one image (C, H, W) or a batch (n, C, H, W)."""
    single = np.ndim(image) == 3
    out, _ = _cnn_forward(params, _check_images(params, image), dropout_p, rng, training)
    return out[0] if single else out


def _net_forward(net: StackedNetworkParams, x, dropout_p, rng, training):
    out, cache = _cnn_forward(net.encoder, x, dropout_p, rng, training)
    head_cache = []
    for w, b, use_relu in zip(net.head_w, net.head_b, net.head_relu):
        # same operand layout as autoencoder.decode, so a fresh stack reproduces it bit for bit
        z = out @ np.ascontiguousarray(w.T) + b
        head_cache.append((out, z))
        out = relu(z) if use_relu else z
    return out, (cache, head_cache)


def _net_backward(net: StackedNetworkParams, caches, grad_out, head: bool) -> list[np.ndarray]:
    cache, head_cache = caches
    g = grad_out
    head_grads = []
    for (a, z), w, use_relu in zip(reversed(head_cache), reversed(net.head_w), reversed(net.head_relu)):
        if use_relu:
            g = relu_backward(z, g)
        dw, db, g = dense_backward(w, a, g)
        head_grads.append((dw, db))
    grads = _cnn_backward(net.encoder, cache, g)
    if head:
        for dw, db in reversed(head_grads):
            grads += [dw, db]
    return grads


def network_forward(net: StackedNetworkParams, images, training=False, dropout_p=0.0, rng=None) -> np.ndarray:
    x = _check_images(net.encoder, images)
    return _net_forward(net, x, dropout_p, rng, training)[0]


def squared_loss(
    net: StackedNetworkParams, images: np.ndarray, targets: np.ndarray,
    training: bool = False, dropout_p: float = 0.0, rng: RngStream | None = None, head: bool | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Summed ``||f(x_i) - t_i||^2`` and its gradient in ``net.parameters(head)`` order."""
    head = net.head_trainable if head is None else head
    x = _check_images(net.encoder, images)
    targets = np.atleast_2d(targets)
    if targets.shape != (len(x), net.out_dim):
        raise DimensionError(f"targets shaped {targets.shape}, expected ({len(x)}, {net.out_dim})")
    out, caches = _net_forward(net, x, dropout_p, rng, training)
    resid = out - targets
    return float(np.sum(resid * resid)), _net_backward(net, caches, 2.0 * resid, head)


def predict_pose(net: StackedNetworkParams, image: np.ndarray) -> np.ndarray:
    """Inference-mode pose prediction with the root re-zeroed."""
    single = np.ndim(image) == 3
    out = network_forward(net, image)
    if out.shape[-1] % 3:
        raise DimensionError(f"network output of size {out.shape[-1]} is not a pose")
    out = out.copy()
    out[:, :3] = 0.0
    return out[0] if single else out


def predict_batched(net: StackedNetworkParams, images: np.ndarray, chunk: int = 256) -> np.ndarray:
    return np.concatenate([predict_pose(net, images[i : i + chunk]) for i in range(0, len(images), chunk)])


# -------------------------------------------------------------------- training


@dataclass
class RegLog:
    rows: list[tuple[int, float, float | None]] = field(default_factory=list)

    def add(self, epoch: int, train_loss: float, eval_mpjpe: float | None = None) -> None:
        self.rows.append((epoch, train_loss, eval_mpjpe))

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,eval_mpjpe"]
        for e, l, m in self.rows:
            lines.append(f"{e},{l:.6f},{'' if m is None else f'{m:.6f}'}")
        return "\n".join(lines) + "\n"


def _train_images(images, config: RegTrainConfig, rng: RngStream):
    return random_crops(images, rng) if config.augment else images


def _eval_images(images, config: RegTrainConfig):
    return center_crops(images) if config.augment else images


def _fit_network(
    net: StackedNetworkParams,
    images: np.ndarray,
    targets: np.ndarray,
    config: RegTrainConfig,
    stream: RngStream,
    log_: RegLog | None = None,
    select_on: np.ndarray | None = None,
) -> StackedNetworkParams:
    """Minibatch ADAM on the summed squared loss (gradients divided by batch size).

    With ``select_on`` (ground-truth poses for ``images``), the inference-mode
    training MPJPE is measured at entry and after every epoch and the best
    parameters seen are returned.
    """
    net = net.copy()
    if config.epochs == 0:
        return net
    n = len(images)
    if n == 0 or len(targets) != n:
        raise DimensionError("training needs matching non-empty image and target sets")
    opt = Adam(config.learning_rate)
    eval_x = _eval_images(images, config)
    best, best_val = None, np.inf
    if select_on is not None:
        best_val = float(np.mean(mpjpe_batch(predict_batched(net, eval_x), select_on)))
        best = net.copy()
    for epoch in range(config.epochs):
        order = stream.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = _train_images(images[idx], config, stream)
            loss, grads = squared_loss(net, x, targets[idx], True, config.dropout_p, stream)
            total += loss
            opt.step(net.parameters(), [g / len(idx) for g in grads])
        score = None
        if select_on is not None:
            score = float(np.mean(mpjpe_batch(predict_batched(net, eval_x), select_on)))
            if score <= best_val:
                best, best_val = net.copy(), score
        if log_ is not None:
            log_.add(epoch + 1, total / n, score)
    return best if select_on is not None else net


def target_normalizer(targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-dimension mean and one global RMS spread of the centred targets."""
    mean = targets.mean(axis=0)
    rms = float(np.sqrt(np.mean((targets - mean) ** 2)))
    return mean, (rms if rms > 0 else 1.0)


def init_image_encoder(shape: CnnShape, targets: np.ndarray, seed: int, stream: int = 0) -> ImageEncoderParams:
    mean, scale = target_normalizer(np.atleast_2d(targets))
    return ImageEncoderParams.initialize(shape, targets.shape[1], RngStream(seed).substream(10, stream), mean, scale)


def latent_targets(ae: AutoEncoderParams, poses: np.ndarray) -> np.ndarray:
    return encode(ae, poses)


def train_latent_regression(
    cnn: ImageEncoderParams,
    ae: AutoEncoderParams,
    images: np.ndarray,
    poses: np.ndarray,
    config: RegTrainConfig,
    log_: RegLog | None = None,
) -> ImageEncoderParams:
    """Regress images onto the frozen auto-encoder's codes of their poses."""
    if cnn.out_dim != ae.latent_dim:
        raise DimensionError(f"CNN predicts {cnn.out_dim} values, auto-encoder latent size is {ae.latent_dim}")
    targets = latent_targets(ae, poses)
    net = StackedNetworkParams(cnn, kind="latent")
    fitted = _fit_network(net, images, targets, config, RngStream(config.seed).substream(11, 0), log_)
    return fitted.encoder


def stack_decoder(cnn: ImageEncoderParams, ae: AutoEncoderParams) -> StackedNetworkParams:
    """Append copies of the auto-encoder's decoding layers to the CNN."""
    if cnn.out_dim != ae.latent_dim:
        raise DimensionError(f"CNN predicts {cnn.out_dim} values, auto-encoder latent size is {ae.latent_dim}")
    head_w, head_b, head_relu = [], [], []
    for j in reversed(range(ae.n_layers)):
        head_w.append(np.array(ae.dec_weight(j), copy=True, order="C"))
        head_b.append(ae.dec_biases[j].copy())
        head_relu.append(j > 0)
    return StackedNetworkParams(cnn.copy(), head_w, head_b, head_relu, True, "ours")


def finetune_stacked(
    params: StackedNetworkParams,
    images: np.ndarray,
    poses: np.ndarray,
    config: RegTrainConfig,
    log_: RegLog | None = None,
) -> StackedNetworkParams:
    """End-to-end pose-loss training of every layer, decoder included.

    Training-set MPJPE is tracked per epoch and the best parameters are
    returned, so it never ends above its starting value.
    """
    net = params.copy()
    net.head_trainable = True
    return _fit_network(net, images, poses, config, RngStream(config.seed).substream(12, 0), log_, select_on=poses)


def train_direct_baseline(
    images: np.ndarray, poses: np.ndarray, config: RegTrainConfig, shape: CnnShape,
    log_: RegLog | None = None, extra_dim: int | None = None,
) -> StackedNetworkParams:
    """CNN-Direct: the same CNN body regressing the 3J pose vector."""
    if extra_dim is not None:
        shape = CnnShape(shape.image_size, shape.in_channels, shape.channels, shape.kernels, (*shape.fc, extra_dim))
    stream = 2 if extra_dim is not None else 1
    enc = init_image_encoder(_cropped_shape(shape, config), poses, config.seed, stream)
    net = StackedNetworkParams(enc, kind="extrafc" if extra_dim is not None else "direct")
    return _fit_network(net, images, poses, config, RngStream(config.seed).substream(13, stream), log_)


def train_extrafc_baseline(
    images: np.ndarray, poses: np.ndarray, config: RegTrainConfig, shape: CnnShape,
    extra_dim: int = 2000, log_: RegLog | None = None,
) -> StackedNetworkParams:
    """CNN-ExtraFC: CNN-Direct with one more ReLU dense layer of ``extra_dim``."""
    if extra_dim < 1:
        raise ParameterError(f"extra_dim must be positive, got {extra_dim}")
    return train_direct_baseline(images, poses, config, shape, log_, extra_dim)


def _cropped_shape(shape: CnnShape, config: RegTrainConfig) -> CnnShape:
    if not config.augment:
        return shape
    return CnnShape(crop_size(shape.image_size), shape.in_channels, shape.channels, shape.kernels, shape.fc)


def new_latent_cnn(shape: CnnShape, ae: AutoEncoderParams, poses: np.ndarray, config: RegTrainConfig) -> ImageEncoderParams:
    """Randomly initialised CNN whose output matches ``ae``'s latent size."""
    return init_image_encoder(_cropped_shape(shape, config), latent_targets(ae, poses), config.seed, 0)


# -------------------------------------------------------------------------- PCA


@dataclass
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray  # (k, D), orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return len(self.components)

    def project(self, poses: np.ndarray) -> np.ndarray:
        return (np.asarray(poses) - self.mean) @ self.components.T

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs) @ self.components + self.mean


def fit_pca(poses: np.ndarray, k: int) -> PcaBasis:
    """Principal directions via SVD of the centred data, by descending variance.

    Each direction's sign is fixed so its largest-magnitude entry is positive.
    """
    x = np.atleast_2d(np.asarray(poses, float))
    n, d = x.shape
    if not 1 <= k <= d:
        raise ParameterError(f"k must lie in 1..{d}, got {k}")
    if n < k + 1:
        raise ParameterError(f"PCA with k={k} needs at least {k + 1} samples, got {n}")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=True)
    var = np.zeros(d)
    var[: len(s)] = s**2 / (n - 1)
    comps = vt[:k].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    comps *= np.sign(comps[np.arange(k), pivot])[:, None]
    return PcaBasis(mean, comps, var[:k])


def pca_network(enc: ImageEncoderParams, basis: PcaBasis) -> StackedNetworkParams:
    return StackedNetworkParams(enc, [basis.components.T.copy()], [basis.mean.copy()], [False], False, "pca")


def train_pca_baseline(
    images: np.ndarray, poses: np.ndarray, config: RegTrainConfig, shape: CnnShape, k: int,
    finetune_config: RegTrainConfig | None = None, log_: RegLog | None = None,
) -> StackedNetworkParams:
    """CNN-PCA: regress k PCA coefficients through a frozen reprojection layer.

    The loss is taken in pose space; with orthonormal components it equals the
    coefficient loss up to a constant. ``finetune_config`` optionally unfreezes
    the reprojection for a second stage.
    """
    basis = fit_pca(poses, k)
    enc = init_image_encoder(_cropped_shape(shape, config), basis.project(poses), config.seed, 3)
    net = pca_network(enc, basis)
    net = _fit_network(net, images, poses, config, RngStream(config.seed).substream(14, 0), log_)
    if finetune_config is not None and finetune_config.epochs > 0:
        net.head_trainable = True
        net = _fit_network(net, images, poses, finetune_config, RngStream(finetune_config.seed).substream(14, 1),
                           log_, select_on=poses)
    return net
