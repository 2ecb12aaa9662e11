"""Flat key=value run configuration.

One ``key = value`` pair per line; blank lines and ``#`` comments are
ignored.  Unknown keys are rejected by name.  Values override the defaults
listed in CONFIG_SCHEMA (also rendered into ``--help``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..meta.config import ADAPT_MODES, INNER_MODES, AdaptConfig, TrainConfig
from ..model.config import (
    BaseNetConfig,
    ContextEncoderConfig,
    HyperNetConfig,
    ModelConfig,
)
from ..model.params import STRATEGIES


class ConfigError(ValueError):
    """Invalid configuration; message names the offending key."""


def _parse_bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_int_list(text):
    return tuple(int(v.strip()) for v in text.split(",") if v.strip())


def _parse_float_list(text):
    return tuple(float(v.strip()) for v in text.split(",") if v.strip())


def _parse_str_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _parse_lambda(text):
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


# key -> (parser, default, help)
CONFIG_SCHEMA = {
    # data generation / task construction
    "contrasts": (_parse_str_list, ("T1", "T2"), "comma list of contrast tags"),
    "images_per_contrast": (int, 20, "phantoms generated per contrast"),
    "image_size": (int, 32, "phantom height and width"),
    "mask_types": (_parse_str_list, ("cartesian", "gaussian"),
                   "mask families in the task cross-product"),
    "accelerations": (_parse_float_list, (4.0, 8.0),
                      "acceleration factors in the task cross-product"),
    "center_fraction": (float, 0.08, "fully kept low-frequency fraction"),
    "split_ratio": (float, 0.5, "support fraction of each task"),
    "mask_policy": (str, "per_sample", "mask realization: per_sample or per_task"),
    "noise_sigma": (float, 0.0, "additive k-space noise std (0 = noiseless)"),
    "data_dir": (str, "", "dataset directory (gen-data output)"),
    # training
    "strategy": (str, "km_maml", f"one of {', '.join(STRATEGIES)}"),
    "epochs": (int, 200, "training epochs (full passes over tasks)"),
    "outer_lr": (float, 0.001, "outer/meta learning rate"),
    "inner_lr": (float, 0.001, "inner-loop learning rate"),
    "inner_steps": (int, 1, "inner-loop gradient steps"),
    "inner_mode": (str, "first_order", f"one of {', '.join(INNER_MODES)}"),
    "task_batch": (int, 3, "tasks per meta-update"),
    "support_batch": (int, 10, "support samples per task step"),
    "query_batch": (int, 10, "query samples per task step"),
    "precision": (str, "f32", "compute precision: f32 or f64"),
    "save_interval": (int, 50, "epochs between checkpoint writes"),
    # model
    "levels": (int, 3, "encoder/decoder depth"),
    "channels": (_parse_int_list, (8, 16, 32), "encoder widths per level"),
    "bottleneck_channels": (int, 64, "bottleneck width"),
    "kernel_size": (int, 3, "convolution kernel size"),
    "embed_dim": (int, 256, "context embedding length"),
    "hyper_bottleneck": (int, 64, "hypernetwork hidden width"),
    "rank": (int, 1, "modulation rank"),
    "ce_channels": (_parse_int_list, (8, 16), "context-encoder widths"),
    "aux_loss_weight": (float, 0.1, "context-autoencoder loss weight"),
    "df_lambda": (_parse_lambda, math.inf,
                  "data-fidelity weight; inf = hard replacement"),
    # adaptation / evaluation
    "adapt_mode": (str, "on_the_fly", f"one of {', '.join(ADAPT_MODES)}"),
    "adapt_steps": (int, 0, "fine-tuning gradient steps"),
    "adapt_lr": (float, 0.001, "fine-tuning learning rate"),
    "eval_contrasts": (_parse_str_list, (), "contrasts at evaluation"
                       " (defaults to contrasts)"),
    "eval_mask_types": (_parse_str_list, (), "mask families at evaluation"
                        " (defaults to mask_types)"),
    "eval_accelerations": (_parse_float_list, (), "accelerations at evaluation"
                           " (defaults to accelerations)"),
    "cka_sample_budget": (int, 8, "samples per task in the similarity profile"),
    # misc
    "seed": (int, 0, "master seed"),
}


@dataclass
class RunConfig:
    """Validated configuration with every key present."""

    values: dict = field(default_factory=dict)
    text: str = ""

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key)

    @property
    def dtype(self):
        return np.float32 if self.values["precision"] == "f32" else np.float64

    def model_config(self):
        v = self.values
        return ModelConfig(
            base=BaseNetConfig(levels=v["levels"], channels=v["channels"],
                               bottleneck_channels=v["bottleneck_channels"],
                               kernel_size=v["kernel_size"]),
            hyper=HyperNetConfig(embed_dim=v["embed_dim"],
                                 bottleneck=v["hyper_bottleneck"],
                                 rank=v["rank"]),
            ce=ContextEncoderConfig(channels=v["ce_channels"],
                                    kernel_size=v["kernel_size"]),
            aux_loss_weight=v["aux_loss_weight"],
            df_lambda=v["df_lambda"],
        )

    def train_config(self):
        v = self.values
        return TrainConfig(
            strategy=v["strategy"], outer_lr=v["outer_lr"],
            inner_lr=v["inner_lr"], inner_steps=v["inner_steps"],
            task_batch=v["task_batch"], support_batch=v["support_batch"],
            query_batch=v["query_batch"], epochs=v["epochs"],
            inner_mode=v["inner_mode"], seed=v["seed"])

    def adapt_config(self):
        v = self.values
        return AdaptConfig(mode=v["adapt_mode"], steps=v["adapt_steps"],
                           lr=v["adapt_lr"])

    def eval_axes(self):
        v = self.values
        return (v["eval_contrasts"] or v["contrasts"],
                v["eval_mask_types"] or v["mask_types"],
                v["eval_accelerations"] or v["accelerations"])


def parse_config_text(text, overrides=None):
    """Parse key=value lines into a RunConfig; unknown keys are errors."""
    values = {key: default for key, (_, default, _) in CONFIG_SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        parser = CONFIG_SCHEMA[key][0]
        try:
            values[key] = parser(value.strip())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key {key!r} (override)")
        values[key] = value
    _validate(values)
    return RunConfig(values=values, text=render_config(values))


def load_config(path, overrides=None):
    if path is None:
        return parse_config_text("", overrides)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), overrides)


def _validate(values):
    checks = [
        ("strategy", values["strategy"] in STRATEGIES),
        ("inner_mode", values["inner_mode"] in INNER_MODES),
        ("adapt_mode", values["adapt_mode"] in ADAPT_MODES),
        ("precision", values["precision"] in ("f32", "f64")),
        ("epochs", values["epochs"] >= 0),
        ("images_per_contrast", values["images_per_contrast"] >= 2),
        ("image_size", values["image_size"] >= 16),
        ("split_ratio", 0.0 < values["split_ratio"] < 1.0),
        ("levels", values["levels"] >= 1),
        ("channels", len(values["channels"]) == values["levels"]),
        ("rank", values["rank"] >= 1),
        ("accelerations", all(a >= 1 for a in values["accelerations"])),
        ("task_batch", values["task_batch"] >= 1),
        ("adapt_steps", values["adapt_steps"] >= 0),
        ("df_lambda", values["df_lambda"] > 0),
        ("contrasts", len(values["contrasts"]) >= 1),
        ("mask_types", all(m in ("cartesian", "gaussian")
                           for m in values["mask_types"])),
        ("mask_policy", values["mask_policy"] in ("per_sample", "per_task")),
    ]
    for key, ok in checks:
        if not ok:
            raise ConfigError(f"config key {key!r} has an invalid value"
                              f" {values[key]!r}")


def render_config(values):
    """Canonical key=value text for config snapshots."""
    lines = []
    for key in CONFIG_SCHEMA:
        value = values[key]
        if isinstance(value, tuple):
            text = ",".join(f"{v:g}" if isinstance(v, float) else str(v)
                            for v in value)
        elif isinstance(value, float):
            text = "inf" if math.isinf(value) else f"{value:g}"
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def schema_help():
    """Defaults table for --help."""
    lines = ["configuration keys (key = value per line):"]
    for key, (_, default, help_text) in CONFIG_SCHEMA.items():
        if isinstance(default, tuple):
            shown = ",".join(str(v) for v in default) or "(empty)"
        else:
            shown = default if default != "" else "(empty)"
        lines.append(f"  {key:<22} default: {shown!s:<16} {help_text}")
    return "\n".join(lines)
