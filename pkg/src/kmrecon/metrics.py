"""Image quality metrics and representational similarity analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model.base_net import base_forward
from .model.config import layer_table
from .model.pipeline import km_pipeline
from .numerics import Tensor

PSNR_CAP_DB = 100.0


def psnr(pred, target, data_range=None):
    """Peak signal-to-noise ratio in dB, capped at 100 for identical inputs.

    ``data_range`` defaults to the peak of the ground-truth magnitude.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"psnr: pred {pred.shape} vs target {target.shape}")
    mse = np.mean((pred - target) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    peak = float(target.max()) if data_range is None else float(data_range)
    return min(20.0 * np.log10(peak / np.sqrt(mse)), PSNR_CAP_DB)


def _gaussian_window(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, window):
    """Separable correlation with a 1-D window, valid region only."""
    size = window.size
    h, w = img.shape
    # rows
    out = np.zeros((h, w - size + 1))
    for k in range(size):
        out += window[k] * img[:, k:k + w - size + 1]
    # cols
    out2 = np.zeros((h - size + 1, out.shape[1]))
    for k in range(size):
        out2 += window[k] * out[k:k + h - size + 1, :]
    return out2


def ssim(pred, target, data_range=None, window_size=11, sigma=1.5,
         k1=0.01, k2=0.03):
    """Mean local structural similarity with a Gaussian window.

    Follows the original convention: 11x11 window, sigma 1.5, constants
    C1 = (k1 L)^2 and C2 = (k2 L)^2 with L the dynamic range (the peak of
    the ground truth unless fixed externally), evaluated on the valid
    sliding-window region.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"ssim: pred {pred.shape} vs target {target.shape}")
    if min(pred.shape) < window_size:
        raise ValueError(
            f"ssim: image {pred.shape} smaller than {window_size}x{window_size} window")
    level = float(target.max()) if data_range is None else float(data_range)
    c1 = (k1 * level) ** 2
    c2 = (k2 * level) ** 2
    win = _gaussian_window(window_size, sigma)
    mu_x = _filter_valid(pred, win)
    mu_y = _filter_valid(target, win)
    xx = _filter_valid(pred * pred, win) - mu_x ** 2
    yy = _filter_valid(target * target, win) - mu_y ** 2
    xy = _filter_valid(pred * target, win) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def linear_cka(x, y):
    """Linear centered kernel alignment between activation matrices
    (n, d1) and (n, d2); 1 for identical representations, invariant to
    orthogonal transforms and isotropic scaling."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"linear_cka: need (n, d) inputs with shared n,"
                         f" got {x.shape}, {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("linear_cka: need at least 2 examples")
    if np.array_equal(x, y):
        return 1.0
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    norm_x = np.linalg.norm(xc.T @ xc)
    norm_y = np.linalg.norm(yc.T @ yc)
    if norm_x == 0.0 or norm_y == 0.0:
        raise ValueError("linear_cka: zero-variance input")
    hsic = np.linalg.norm(xc.T @ yc) ** 2
    return float(hsic / (norm_x * norm_y))


@dataclass
class CkaProfile:
    """Per-layer mean/std of pre- vs post-modulation CKA across tasks,
    encoder -> bottleneck -> decoder order."""

    layers: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)


def _flatten_activations(act):
    """(n, h, w, c) -> (n*h*w, c): spatial positions fold into examples."""
    n, h, w, c = act.shape
    return act.reshape(n * h * w, c)


def cka_profile(params, tasks, model_cfg, sample_budget=8, dtype=np.float64):
    """Compare base-network activations with and without kernel modulation
    on identical inputs, one CKA score per layer per task."""
    if sample_budget < 2:
        raise ValueError("cka_profile: sample budget must be >= 2")
    if not tasks:
        raise ValueError("cka_profile: need at least one task")
    layer_names = [spec.name for spec in layer_table(model_cfg.base)]
    theta = {k: t.detach() for k, t in params.theta.items()}
    omega = {k: t.detach() for k, t in params.omega.items()}
    ce = {k: t.detach() for k, t in params.ce.items()}
    per_layer = {name: [] for name in layer_names}
    for task in tasks:
        samples = list(task.query)[:sample_budget]
        plain_acts = {name: [] for name in layer_names}
        mod_acts = {name: [] for name in layer_names}
        for sample in samples:
            x_t = Tensor(sample.x_us.to_channels(dtype)[None])
            y_t = Tensor(sample.y.to_channels(dtype)[None])
            kept = sample.mask.kept[None, :, :, None]
            taps_mod = {}
            km_pipeline(x_t, y_t, kept, theta, omega, ce, model_cfg,
                        taps=taps_mod)
            taps_plain = {}
            base_forward(x_t, theta, model_cfg.base, taps=taps_plain)
            for name in layer_names:
                plain_acts[name].append(_flatten_activations(taps_plain[name]))
                mod_acts[name].append(_flatten_activations(taps_mod[name]))
        for name in layer_names:
            x = np.concatenate(plain_acts[name], axis=0)
            y = np.concatenate(mod_acts[name], axis=0)
            per_layer[name].append(linear_cka(x, y))
    profile = CkaProfile(layers=layer_names)
    for name in layer_names:
        values = np.asarray(per_layer[name])
        profile.mean[name] = float(values.mean())
        profile.std[name] = float(values.std())
    return profile
