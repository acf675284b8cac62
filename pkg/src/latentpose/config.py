"""Experiment configuration: a flat ``key = value`` text format.

Keys are grouped into sections by prefix (``data.``, ``ae.``, ``cnn.``,
``train.``, ``baseline.``). Lists are comma-separated. ``#`` starts a
comment. Unknown keys are rejected. Example::

    seed = 0
    ae.layers = 300,300
    ae.noise_sigmas = 40,20
    train.dropout = 0.5
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .autoencoder import AeTrainConfig
from .errors import ConfigError, LatentPoseError
from .regressor import CnnShape, RegTrainConfig
from .synthdata import CameraConfig


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace("-", ",").split(",") if t.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace("-", ",").split(",") if t.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _join(values) -> str:
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in values)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = ""

    data_n_train: int = 200
    data_n_test: int = 50
    data_seed: int = 0
    data_image_size: int = 32
    data_mm_per_pixel: float = 75.0
    data_thickness: float = 1.0
    data_image_dtype: str = "d"

    ae_layers: tuple[int, ...] = (300, 300)
    ae_noise_sigmas: tuple[float, ...] = (40.0, 20.0)
    ae_lambda: float = 0.1
    ae_learning_rate: float = 1e-3
    ae_batch_size: int = 128
    ae_pretrain_epochs: int = 300
    ae_finetune_epochs: int = 50
    ae_allow_undercomplete: bool = False

    cnn_channels: tuple[int, ...] = (8, 16, 32)
    cnn_kernels: tuple[int, ...] = (5, 3, 3)
    cnn_fc: tuple[int, ...] = (128, 128, 64)

    train_learning_rate: float = 1e-3
    train_batch_size: int = 128
    train_dropout: float = 0.5
    train_augment: bool = False
    train_latent_epochs: int = 150
    train_finetune_epochs: int = 100
    train_direct_epochs: int = 250

    baseline_extra_dim: int = 2000
    baseline_pca_k: int = 40

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            if len(self.ae_noise_sigmas) != len(self.ae_layers):
                raise ConfigError(
                    f"ae.noise_sigmas has {len(self.ae_noise_sigmas)} entries for {len(self.ae_layers)} layers"
                )
            if not self.ae_layers or any(s < 1 for s in self.ae_layers):
                raise ConfigError("ae.layers must list positive layer sizes")
            if self.data_n_train < 1 or self.data_n_test < 1:
                raise ConfigError("data.n_train and data.n_test must be positive")
            if self.data_image_dtype not in ("d", "B"):
                raise ConfigError("data.image_dtype must be 'd' (float64) or 'B' (uint8)")
            if self.baseline_pca_k < 1 or self.baseline_extra_dim < 1:
                raise ConfigError("baseline.pca_k and baseline.extra_dim must be positive")
            for name in ("ae_pretrain_epochs", "ae_finetune_epochs", "train_latent_epochs",
                         "train_finetune_epochs", "train_direct_epochs"):
                if getattr(self, name) < 0:
                    raise ConfigError(f"{name.replace('_', '.', 1)} must be >= 0")
            self.camera()
            self.cnn_shape()
            self.ae_config(0)
            self.reg_config(0)
        except LatentPoseError as exc:
            raise ConfigError(str(exc)) from exc

    # ----------------------------------------------------------- derived
    def camera(self) -> CameraConfig:
        return CameraConfig((0, 2), self.data_image_size, self.data_mm_per_pixel, self.data_thickness)

    def cnn_shape(self) -> CnnShape:
        return CnnShape(self.data_image_size, 1, self.cnn_channels, self.cnn_kernels, self.cnn_fc)

    def ae_config(self, epochs: int) -> AeTrainConfig:
        return AeTrainConfig(self.ae_lambda, self.ae_noise_sigmas, self.ae_learning_rate,
                             self.ae_batch_size, epochs, self.seed)

    def reg_config(self, epochs: int) -> RegTrainConfig:
        return RegTrainConfig(self.train_learning_rate, self.train_batch_size, epochs,
                              self.train_dropout, self.seed, self.train_augment)

    # ------------------------------------------------------------- text
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            key = _key(f.name)
            if isinstance(v, tuple):
                text = _join(v)
            elif isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        text = "".join(l + "\n" for l in self.to_text().splitlines() if not l.startswith("out ="))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
            raw[key.strip()] = value.strip()
        raw.update(overrides or {})
        known = {_key(f.name): f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            f = known[key]
            try:
                kwargs[f.name] = _convert(f.name, value, type(_defaults()[f.name]), _defaults()[f.name])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path, overrides: dict[str, str] | None = None) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, overrides)


_DEFAULTS: dict[str, object] | None = None


def _defaults() -> dict[str, object]:
    global _DEFAULTS
    if _DEFAULTS is None:
        base = ExperimentConfig()
        _DEFAULTS = {f.name: getattr(base, f.name) for f in fields(ExperimentConfig)}
    return _DEFAULTS


def _key(name: str) -> str:
    for prefix in ("data", "ae", "cnn", "train", "baseline"):
        if name.startswith(prefix + "_"):
            return f"{prefix}.{name[len(prefix) + 1:]}"
    return name


def _convert(name: str, value: str, typ, default):
    if typ is tuple:
        return _floats(value) if default and isinstance(default[0], float) else _ints(value)
    if typ is bool:
        return _bool(value)
    if typ is int:
        return int(value)
    if typ is float:
        return float(value)
    return value
