"""Command-line entry point: ``latentpose <command> [options]``.

Commands
  gen-data   generate the synthetic dataset into ``<out>/data``
  train      run one stage (``--stage ae|latent|finetune|direct|pca|extrafc``)
  eval       evaluate trained models on the test split
  sweep      run the pipeline once per auto-encoder layer configuration

Output root: ``--out``, else ``out`` from the config, else
``$LATENTPOSE_OUT/<config hash>`` (``runs/<config hash>`` when unset).

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline
from . import regressor as reg
from .autoencoder import AutoEncoderParams, TrainLog
from .config import ExperimentConfig
from .container import file_sha256
from .errors import ConfigError, LatentPoseError
from .eval import fmt, matrix_csv, mpjpe_table_csv, report_csv, write_heatmap
from .synthdata import load_dataset, save_dataset

log = logging.getLogger("latentpose")

ENV_OUT = "LATENTPOSE_OUT"
METHOD_FILES = {"ours": "finetune", "direct": "direct", "pca": "pca", "extrafc": "extrafc"}
SWEEP_COLUMNS = "value,status,mpjpe_mm,lower_sum,upper_sum,full_sum,seconds,error"


class UsageError(Exception):
    """Bad invocation or missing prerequisite; maps to exit code 1."""


# ------------------------------------------------------------------- helpers


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.out:
        return Path(cfg.out)
    return Path(os.environ.get(ENV_OUT, "runs")) / cfg.hash()


def _load_config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
        overrides["data.seed"] = str(args.seed)
    if args.config:
        return ExperimentConfig.load(args.config, overrides)
    return ExperimentConfig.from_text("", overrides)


def _write(path: Path, text: str, cfg: ExperimentConfig, **meta) -> None:
    """Write ``text`` plus a ``.meta`` sidecar carrying the config hash."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    lines = [f"config_hash={cfg.hash()}"] + [f"{k}={v}" for k, v in sorted(meta.items())]
    Path(str(path) + ".meta").write_text("\n".join(lines) + "\n")


def _guard(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise UsageError(f"{path} already exists; pass --force to overwrite")


def _model_path(out: Path, stage: str) -> Path:
    return out / "models" / f"{stage}.model"


def _require(out: Path, stage: str) -> None:
    missing = [d for d in pipeline.DEPENDENCIES[stage] if not _model_path(out, d).exists()]
    if missing:
        raise UsageError(
            f"stage {stage!r} needs the {missing[0]!r} model at {_model_path(out, missing[0])}; "
            f"run `latentpose train --stage {missing[0]}` first"
        )


def _dataset(out: Path):
    if not (out / "data" / "manifest.txt").exists():
        raise UsageError(f"no dataset under {out / 'data'}; run `latentpose gen-data` first")
    return load_dataset(out / "data")


def _meta(cfg: ExperimentConfig, ds, stage: str) -> dict[str, object]:
    return {"config_hash": cfg.hash(), "dataset_hash": ds.manifest.get("manifest_hash", ""), "stage": stage}


# ------------------------------------------------------------------ commands


def cmd_gen_data(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    target = out / "data"
    _guard(target, args.force)
    if target.exists():
        shutil.rmtree(target)
    ds = pipeline.make_dataset(cfg)
    ds.manifest["config_hash"] = cfg.hash()
    manifest = save_dataset(ds, target, cfg.data_image_dtype)
    (out / "config.txt").write_text(cfg.to_text() + f"# config_hash = {cfg.hash()}\n")
    print(f"wrote {len(ds.train)} train / {len(ds.test)} test samples to {target} "
          f"(manifest {manifest['manifest_hash'][:16]})")
    return 0


def _loss_csv_ae(pre: TrainLog, fine: TrainLog) -> str:
    lines = ["phase,epoch,train_loss"]
    for phase, lg in (("pretrain", pre), ("finetune", fine)):
        lines += [f"{phase},{e},{l:.6f}" for e, l in zip(lg.epochs, lg.losses)]
    return "\n".join(lines) + "\n"


def cmd_train(args, cfg: ExperimentConfig) -> int:
    stage = args.stage
    out = _out_dir(args, cfg)
    _require(out, stage)
    ds = _dataset(out)
    target = _model_path(out, stage)
    _guard(target, args.force)
    target.parent.mkdir(parents=True, exist_ok=True)
    meta = _meta(cfg, ds, stage)
    train = ds.train
    t = time.perf_counter()
    if stage == "ae":
        from .autoencoder import finetune_ae, pretrain_layerwise

        pre, fine = TrainLog(), TrainLog()
        ae = pretrain_layerwise(train.poses, cfg.ae_layers, cfg.ae_config(cfg.ae_pretrain_epochs),
                                require_overcomplete=not cfg.ae_allow_undercomplete, log_=pre)
        if cfg.ae_finetune_epochs:
            ae = finetune_ae(ae, train.poses, cfg.ae_config(cfg.ae_finetune_epochs), fine)
        ae.save(target, meta)
        loss_text = _loss_csv_ae(pre, fine)
    else:
        rlog = reg.RegLog()
        if stage == "latent":
            ae = AutoEncoderParams.load(_model_path(out, "ae"))
            cnn = pipeline.train_latent(cfg, ae, train, rlog)
            reg.StackedNetworkParams(cnn, kind="latent").save(target, meta)
        elif stage == "finetune":
            ae = AutoEncoderParams.load(_model_path(out, "ae"))
            cnn = reg.StackedNetworkParams.load(_model_path(out, "latent")).encoder
            pipeline.finetune(cfg, cnn, ae, train, rlog).save(target, meta)
        else:
            trainer = {"direct": pipeline.train_direct, "pca": pipeline.train_pca, "extrafc": pipeline.train_extrafc}
            trainer[stage](cfg, train, rlog).save(target, meta)
        loss_text = rlog.to_csv()
    _write(out / "logs" / f"{stage}_loss.csv", loss_text, cfg, stage=stage)
    print(f"stage {stage}: {target} ({time.perf_counter() - t:.1f} s, sha256 {file_sha256(target)[:16]})")
    return 0


def _available_models(out: Path, names: list[str] | None, ds) -> dict[str, reg.StackedNetworkParams]:
    models: dict[str, reg.StackedNetworkParams] = {}
    wanted = names or ["ours_noft", *METHOD_FILES]
    for name in wanted:
        if name == "gt":
            continue
        if name == "ours_noft":
            if _model_path(out, "ae").exists() and _model_path(out, "latent").exists():
                ae = AutoEncoderParams.load(_model_path(out, "ae"))
                cnn = reg.StackedNetworkParams.load(_model_path(out, "latent")).encoder
                models[name] = reg.stack_decoder(cnn, ae)
            elif names:
                raise UsageError("ours_noft needs the 'ae' and 'latent' models")
            continue
        if name == "untrained":
            models[name] = reg.train_direct_baseline(ds.train.images, ds.train.poses, reg.RegTrainConfig(epochs=0),
                                                     reg.CnnShape(ds.camera.image_size))
            continue
        if name not in METHOD_FILES:
            raise UsageError(f"unknown method {name!r}; choose from gt, untrained, ours_noft, {', '.join(METHOD_FILES)}")
        path = _model_path(out, METHOD_FILES[name])
        if path.exists():
            models[name] = reg.StackedNetworkParams.load(path)
        elif names:
            raise UsageError(f"no {name!r} model at {path}; run `latentpose train --stage {METHOD_FILES[name]}` first")
    return models


def cmd_eval(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    ds = _dataset(out)
    names = [n.strip() for n in args.models.split(",") if n.strip()] if args.models else None
    models = _available_models(out, names, ds)
    for name, net in models.items():
        if net.out_dim != ds.model.pose_dim:
            raise LatentPoseError(f"model {name!r} predicts {net.out_dim} values; the dataset skeleton has "
                                  f"{ds.model.pose_dim} coordinates")
    if not models and not (names and "gt" in names):
        raise UsageError("no trained models found; run `latentpose train` first")
    report_path = out / "report.csv"
    _guard(report_path, args.force)
    test = ds.test
    x = pipeline.eval_images(cfg, test.images)
    results = {}
    if names and "gt" in names:
        results["gt"] = (test.poses, test.poses, test.actions)
    for name, net in models.items():
        results[name] = (reg.predict_batched(net, x), test.poses, test.actions)
    from .eval import report

    rep = report(results, ds.model)
    meta = {"dataset_hash": ds.manifest.get("manifest_hash", "")}
    for name in models:
        if name in METHOD_FILES:
            meta[f"model.{name}"] = file_sha256(_model_path(out, METHOD_FILES[name]))
    _write(report_path, report_csv(rep.rows), cfg, **meta)
    actions = sorted(set(test.actions)) + ["all"]
    table = {m: {r.action: r.mpjpe_mm for r in rep.rows if r.method == m} for m in results}
    _write(out / "mpjpe_table.csv", mpjpe_table_csv(table, actions), cfg, **meta)
    for name, matrix in rep.ratio_matrices.items():
        _write(out / "ratios" / f"{name}.csv", matrix_csv(matrix, ds.model.limb_names), cfg, **meta)
        heat = out / "heatmaps" / f"{name}.pgm"
        heat.parent.mkdir(parents=True, exist_ok=True)
        write_heatmap(heat, matrix)
        with open(str(heat) + ".txt", "a") as fh:
            fh.write(f"config_hash={cfg.hash()}\n")
        if rep.flagged[name]:
            log.warning("%s: %d predictions had degenerate limbs", name, len(rep.flagged[name]))
    sys.stdout.write(report_csv(rep.rows))
    return 0


def _parse_layer_values(values: list[str]) -> list[tuple[int, ...]]:
    out = []
    for group in values:
        for item in group.split(";"):
            item = item.strip().strip("[]")
            if item:
                out.append(tuple(int(t) for t in item.replace("-", ",").split(",") if t.strip()))
    if not out:
        raise UsageError("sweep needs at least one value, e.g. --values 2000 --values 300,300")
    return out


def sweep_config(cfg: ExperimentConfig, layers: tuple[int, ...]) -> ExperimentConfig:
    """Config for one sweep point; noise levels halve per extra layer when the counts differ."""
    sigmas = cfg.ae_noise_sigmas
    if len(sigmas) != len(layers):
        sigmas = tuple(sigmas[0] / 2**j for j in range(len(layers)))
    return replace(cfg, ae_layers=tuple(layers), ae_noise_sigmas=sigmas)


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    if args.axis != "ae-layers":
        raise UsageError(f"unsupported sweep axis {args.axis!r} (only ae-layers)")
    values = _parse_layer_values(args.values or [])
    out = _out_dir(args, cfg)
    target = out / "sweep.csv"
    _guard(target, args.force)
    ds = pipeline.make_dataset(cfg)
    rows = [SWEEP_COLUMNS]
    failures = 0
    for layers in values:
        label = "-".join(map(str, layers))
        t = time.perf_counter()
        try:
            res = pipeline.run_pipeline(sweep_config(cfg, layers), ds, ("ours",))
            r = res.report.row("ours")
            rows.append(",".join([label, "ok", fmt(r.mpjpe_mm), fmt(r.lower_sum), fmt(r.upper_sum),
                                  fmt(r.full_sum), f"{time.perf_counter() - t:.1f}", ""]))
        except LatentPoseError as exc:
            failures += 1
            log.error("sweep value %s failed: %s", label, exc)
            msg = str(exc).replace(",", ";").replace("\n", " ")
            rows.append(",".join([label, "failed", "", "", "", "", f"{time.perf_counter() - t:.1f}", msg]))
    _write(target, "\n".join(rows) + "\n", cfg, values=";".join("-".join(map(str, v)) for v in values),
           dataset_seed=cfg.data_seed)
    print("\n".join(rows))
    return 2 if failures else 0


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (key = value lines)")
    common.add_argument("--out", help=f"output directory (default: ${ENV_OUT}/<config hash>)")
    common.add_argument("--seed", type=int, help="override the training and data seeds")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="latentpose", description="Structured 3D pose regression via latent codes.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate the synthetic dataset")
    p = sub.add_parser("train", parents=[common], help="train one stage")
    p.add_argument("--stage", required=True, choices=pipeline.STAGES)
    p = sub.add_parser("eval", parents=[common], help="evaluate models on the test split")
    p.add_argument("--models", help="comma-separated methods: gt, untrained, ours_noft, ours, direct, pca, extrafc")
    p = sub.add_parser("sweep", parents=[common], help="compare auto-encoder configurations")
    p.add_argument("--axis", default="ae-layers")
    p.add_argument("--values", action="append", help="layer sizes such as 2000 or 300,300; ';' separates values")
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"latentpose: error: {exc}", file=sys.stderr)
        return 1
    except (LatentPoseError, OSError, ValueError) as exc:
        print(f"latentpose: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
