"""Staged training and evaluation shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import regressor as reg
from .autoencoder import AutoEncoderParams, TrainLog, finetune_ae, pretrain_layerwise
from .config import ExperimentConfig
from .eval import EvalReport, report
from .synthdata import PoseImageSet, SyntheticDataset, default_skeleton, generate_dataset, SubjectSpec

log = logging.getLogger(__name__)

STAGES = ("ae", "latent", "finetune", "direct", "pca", "extrafc")
# stage -> stages whose models it needs
DEPENDENCIES = {"ae": (), "latent": ("ae",), "finetune": ("ae", "latent"),
                "direct": (), "pca": (), "extrafc": ()}


def make_dataset(cfg: ExperimentConfig, seed: int | None = None) -> SyntheticDataset:
    return generate_dataset(default_skeleton(), cfg.camera(), cfg.data_n_train, cfg.data_n_test,
                            SubjectSpec(), cfg.data_seed if seed is None else seed)


def eval_images(cfg: ExperimentConfig, images: np.ndarray) -> np.ndarray:
    return reg.center_crops(images) if cfg.train_augment else images


def train_ae(cfg: ExperimentConfig, train: PoseImageSet, log_: TrainLog | None = None) -> AutoEncoderParams:
    """Greedy layer-wise pretraining followed by whole-network fine-tuning."""
    ae = pretrain_layerwise(train.poses, cfg.ae_layers, cfg.ae_config(cfg.ae_pretrain_epochs),
                            require_overcomplete=not cfg.ae_allow_undercomplete, log_=log_)
    if cfg.ae_finetune_epochs:
        ae = finetune_ae(ae, train.poses, cfg.ae_config(cfg.ae_finetune_epochs), log_=log_)
    return ae


def train_latent(cfg: ExperimentConfig, ae: AutoEncoderParams, train: PoseImageSet,
                 log_: reg.RegLog | None = None) -> reg.ImageEncoderParams:
    rc = cfg.reg_config(cfg.train_latent_epochs)
    cnn = reg.new_latent_cnn(cfg.cnn_shape(), ae, train.poses, rc)
    return reg.train_latent_regression(cnn, ae, train.images, train.poses, rc, log_)


def finetune(cfg: ExperimentConfig, cnn: reg.ImageEncoderParams, ae: AutoEncoderParams, train: PoseImageSet,
             log_: reg.RegLog | None = None) -> reg.StackedNetworkParams:
    stacked = reg.stack_decoder(cnn, ae)
    return reg.finetune_stacked(stacked, train.images, train.poses, cfg.reg_config(cfg.train_finetune_epochs), log_)


def train_direct(cfg, train: PoseImageSet, log_=None) -> reg.StackedNetworkParams:
    return reg.train_direct_baseline(train.images, train.poses, cfg.reg_config(cfg.train_direct_epochs),
                                     cfg.cnn_shape(), log_)


def train_extrafc(cfg, train: PoseImageSet, log_=None) -> reg.StackedNetworkParams:
    return reg.train_extrafc_baseline(train.images, train.poses, cfg.reg_config(cfg.train_direct_epochs),
                                      cfg.cnn_shape(), cfg.baseline_extra_dim, log_)


def train_pca(cfg, train: PoseImageSet, log_=None) -> reg.StackedNetworkParams:
    return reg.train_pca_baseline(train.images, train.poses, cfg.reg_config(cfg.train_direct_epochs),
                                  cfg.cnn_shape(), cfg.baseline_pca_k, log_=log_)


@dataclass
class PipelineResult:
    ae: AutoEncoderParams | None = None
    cnn: reg.ImageEncoderParams | None = None
    models: dict[str, reg.StackedNetworkParams] = field(default_factory=dict)
    report: EvalReport | None = None
    train_mpjpe: dict[str, float] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)


def evaluate_models(cfg, models: dict[str, reg.StackedNetworkParams], split: PoseImageSet, model) -> EvalReport:
    x = eval_images(cfg, split.images)
    results = {name: (reg.predict_batched(net, x), split.poses, split.actions) for name, net in models.items()}
    return report(results, model)


def run_pipeline(cfg: ExperimentConfig, dataset: SyntheticDataset,
                 methods: tuple[str, ...] = ("ours_noft", "ours", "direct")) -> PipelineResult:
    """Train the requested methods on ``dataset.train`` and evaluate on ``dataset.test``.

    Method names: ``ours`` (fine-tuned latent pipeline), ``ours_noft``
    (stacked but not fine-tuned), ``direct``, ``extrafc``, ``pca``.
    """
    res = PipelineResult()
    train = dataset.train
    t = time.perf_counter()
    if {"ours", "ours_noft"} & set(methods):
        res.ae = train_ae(cfg, train)
        res.seconds["ae"] = time.perf_counter() - t
        t = time.perf_counter()
        res.cnn = train_latent(cfg, res.ae, train)
        res.seconds["latent"] = time.perf_counter() - t
        stacked = reg.stack_decoder(res.cnn, res.ae)
        if "ours_noft" in methods:
            res.models["ours_noft"] = stacked
        if "ours" in methods:
            t = time.perf_counter()
            res.models["ours"] = reg.finetune_stacked(stacked, train.images, train.poses,
                                                      cfg.reg_config(cfg.train_finetune_epochs))
            res.seconds["finetune"] = time.perf_counter() - t
    for name, fn in (("direct", train_direct), ("extrafc", train_extrafc), ("pca", train_pca)):
        if name in methods:
            t = time.perf_counter()
            res.models[name] = fn(cfg, train)
            res.seconds[name] = time.perf_counter() - t
    res.report = evaluate_models(cfg, res.models, dataset.test, dataset.model)
    tr = evaluate_models(cfg, res.models, train, dataset.model)
    res.train_mpjpe = {m: tr.mpjpe(m) for m in res.models}
    return res
