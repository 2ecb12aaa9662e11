"""Command-line interface: gen-data, train, eval, adapt, analyze-cka."""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib

from ..meta import (
    AdaptConfig,
    TrainingAbort,
    build_optimizer,
    evaluate,
    meta_train_epoch,
)
from ..metrics import cka_profile
from ..model import LayerNumericError, init_params
from ..numerics import NonFiniteError
from ..tasks import MaskSpec, build_task, generate_phantom, load_image, write_kmr1
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    restore_params,
    save_checkpoint,
)
from .config import ConfigError, load_config, parse_config_text, schema_help

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2


def _phantom_seed(master_seed, contrast, index):
    tag = zlib.crc32(f"{contrast}".encode("utf-8"))
    return int((master_seed * 1_000_003 + tag) % (2 ** 31) + index)


def _task_seed(master_seed, contrast, mask_type, acceleration):
    tag = zlib.crc32(f"{contrast}|{mask_type}|{acceleration:g}".encode("utf-8"))
    return int((master_seed * 7_919 + tag) % (2 ** 31))


def cmd_gen_data(cfg, out_dir):
    """Write phantoms per contrast as KMR1 rasters plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "contrasts": list(cfg.contrasts),
        "image_size": cfg.image_size,
        "images_per_contrast": cfg.images_per_contrast,
        "seed": cfg.seed,
        "images": {},
    }
    for contrast in cfg.contrasts:
        names = []
        for i in range(cfg.images_per_contrast):
            image = generate_phantom(_phantom_seed(cfg.seed, contrast, i),
                                     contrast, cfg.image_size, cfg.image_size)
            name = f"{contrast}_{i:04d}.kmr1"
            write_kmr1(os.path.join(out_dir, name), image.to_channels().transpose(2, 0, 1))
            names.append(name)
        manifest["images"][contrast] = names
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def load_dataset(data_dir):
    """Read a gen-data directory back into per-contrast image lists."""
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"dataset manifest not found: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    pools = {}
    for contrast, names in manifest["images"].items():
        pools[contrast] = [load_image(os.path.join(data_dir, name))
                           for name in names]
    return manifest, pools


def build_tasks(cfg, pools, contrasts=None, mask_types=None,
                accelerations=None):
    """Cross-product of contrast x mask family x acceleration."""
    contrasts = contrasts or cfg.contrasts
    mask_types = mask_types or cfg.mask_types
    accelerations = accelerations or cfg.accelerations
    tasks = []
    for contrast in contrasts:
        if contrast not in pools:
            raise ConfigError(f"contrast {contrast!r} not in dataset")
        for mask_type in mask_types:
            for acc in accelerations:
                spec = MaskSpec(mask_type, acc, cfg.center_fraction)
                tasks.append(build_task(
                    pools[contrast], contrast, spec, cfg.split_ratio,
                    seed=_task_seed(cfg.seed, contrast, mask_type, acc),
                    noise_sigma=cfg.noise_sigma,
                    mask_policy=cfg.mask_policy))
    return tasks


def _write_train_log(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,task,support_loss,query_loss,wall_ms\n")
        for r in records:
            fh.write(f"{r.epoch},{r.task},{r.support_loss:.8f},"
                     f"{r.query_loss:.8f},{r.wall_ms:.3f}\n")


def cmd_train(cfg, out_dir, deterministic, resume=None):
    os.makedirs(out_dir, exist_ok=True)
    data_dir = cfg.data_dir or out_dir
    _, pools = load_dataset(data_dir)
    tasks = build_tasks(cfg, pools)
    model_cfg = cfg.model_config()
    train_cfg = cfg.train_config()
    params = init_params(train_cfg.strategy, model_cfg, cfg.seed, cfg.dtype)
    optimizer = build_optimizer(params, train_cfg)
    start_epoch = 0
    if resume is not None:
        strategy, _, arrays, epoch = load_checkpoint(resume)
        if strategy != train_cfg.strategy:
            raise CheckpointError(
                f"checkpoint strategy {strategy!r} != config strategy"
                f" {train_cfg.strategy!r}")
        restore_params(params, arrays, cfg.dtype)
        optimizer.load_state(arrays)
        start_epoch = epoch
    ckpt_path = os.path.join(out_dir, "model.kmck")
    records = []
    try:
        for epoch in range(start_epoch, train_cfg.epochs):
            records.extend(meta_train_epoch(
                tasks, params, train_cfg, model_cfg, optimizer, epoch,
                dtype=cfg.dtype, deterministic_timing=deterministic))
            done = epoch + 1
            if cfg.save_interval > 0 and done % cfg.save_interval == 0:
                save_checkpoint(ckpt_path, params, optimizer,
                                train_cfg.strategy, cfg.text, epoch=done)
    except TrainingAbort:
        _write_train_log(os.path.join(out_dir, "train_log.csv"), records)
        raise
    save_checkpoint(ckpt_path, params, optimizer, train_cfg.strategy,
                    cfg.text, epoch=train_cfg.epochs)
    _write_train_log(os.path.join(out_dir, "train_log.csv"), records)
    return EXIT_OK


def _load_model(cfg, checkpoint_path):
    strategy, config_text, arrays, _ = load_checkpoint(checkpoint_path)
    ckpt_cfg = parse_config_text(config_text)
    merged = dict(ckpt_cfg.values)
    # run-time keys follow the current config; architecture follows the
    # checkpoint so shapes always match
    for key in ("adapt_mode", "adapt_steps", "adapt_lr", "eval_contrasts",
                "eval_mask_types", "eval_accelerations", "cka_sample_budget",
                "data_dir", "seed", "precision"):
        merged[key] = cfg.values[key]
    run_cfg = parse_config_text("", overrides=merged)
    model_cfg = run_cfg.model_config()
    params = init_params(strategy, model_cfg, run_cfg.seed, run_cfg.dtype)
    restore_params(params, arrays, run_cfg.dtype)
    return strategy, run_cfg, model_cfg, params


def _write_eval_outputs(out_dir, results):
    csv_path = os.path.join(out_dir, "metrics.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("task,sample,psnr,ssim,zf_psnr,zf_ssim\n")
        for task_eval in results:
            for rec, zf in zip(task_eval.records, task_eval.zf_records):
                fh.write(f"{rec.task},{rec.sample},{rec.psnr:.6f},"
                         f"{rec.ssim:.6f},{zf.psnr:.6f},{zf.ssim:.6f}\n")
    summary = {}
    for task_eval in results:
        summary[task_eval.task] = {
            "psnr_mean": round(task_eval.psnr_mean, 6),
            "psnr_std": round(task_eval.psnr_std, 6),
            "ssim_mean": round(task_eval.ssim_mean, 6),
            "ssim_std": round(task_eval.ssim_std, 6),
            "zero_filled": {
                "psnr_mean": round(task_eval.zf_psnr_mean, 6),
                "ssim_mean": round(task_eval.zf_ssim_mean, 6),
            },
        }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_eval(cfg, out_dir, checkpoint_path, adapt=False):
    os.makedirs(out_dir, exist_ok=True)
    strategy, run_cfg, model_cfg, params = _load_model(cfg, checkpoint_path)
    data_dir = run_cfg.data_dir
    if not data_dir:
        raise ConfigError("config key 'data_dir' is required for evaluation")
    _, pools = load_dataset(data_dir)
    contrasts, mask_types, accelerations = run_cfg.eval_axes()
    tasks = build_tasks(run_cfg, pools, contrasts, mask_types, accelerations)
    adapt_cfg = run_cfg.adapt_config() if adapt else AdaptConfig(mode="on_the_fly")
    results = evaluate(tasks, params, strategy, model_cfg, adapt_cfg,
                       dtype=run_cfg.dtype)
    _write_eval_outputs(out_dir, results)
    return EXIT_OK


def cmd_analyze_cka(cfg, out_dir, checkpoint_path):
    os.makedirs(out_dir, exist_ok=True)
    strategy, run_cfg, model_cfg, params = _load_model(cfg, checkpoint_path)
    if strategy != "km_maml":
        raise ConfigError(
            f"similarity profile needs kernel modulation; checkpoint is {strategy!r}")
    data_dir = run_cfg.data_dir
    if not data_dir:
        raise ConfigError("config key 'data_dir' is required for analysis")
    _, pools = load_dataset(data_dir)
    contrasts, mask_types, accelerations = run_cfg.eval_axes()
    tasks = build_tasks(run_cfg, pools, contrasts, mask_types, accelerations)
    profile = cka_profile(params, tasks, model_cfg,
                          sample_budget=run_cfg.cka_sample_budget,
                          dtype=run_cfg.dtype)
    path = os.path.join(out_dir, "cka_profile.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("layer,mean_cka,std_cka\n")
        for name in profile.layers:
            fh.write(f"{name},{profile.mean[name]:.6f},{profile.std[name]:.6f}\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kmrecon",
        description="Kernel-modulated multimodal meta-learning for"
                    " undersampled image reconstruction.",
        epilog=schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--deterministic", action="store_true",
                        help="byte-reproducible outputs (timing columns zeroed)")
    parser.add_argument("--out", default=".", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", help="generate the phantom dataset")
    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on-the-fly")
    p_eval.add_argument("checkpoint")
    p_adapt = sub.add_parser("adapt", help="evaluate with test-time fine-tuning")
    p_adapt.add_argument("checkpoint")
    p_cka = sub.add_parser("analyze-cka",
                           help="pre/post-modulation similarity profile")
    p_cka.add_argument("checkpoint")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "gen-data":
            return cmd_gen_data(cfg, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.out, args.deterministic,
                             resume=args.resume)
        if args.command == "eval":
            return cmd_eval(cfg, args.out, args.checkpoint, adapt=False)
        if args.command == "adapt":
            return cmd_eval(cfg, args.out, args.checkpoint, adapt=True)
        if args.command == "analyze-cka":
            return cmd_analyze_cka(cfg, args.out, args.checkpoint)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingAbort, LayerNumericError, NonFiniteError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
