"""Composed reconstruction pipelines for each training strategy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Tensor, affine, reshape
from ..tasks.sampling import ComplexImage
from .base_net import base_forward
from .config import ModelConfig, layer_table
from .context_encoder import context_embed_batch
from .data_fidelity import data_fidelity
from .hypernet import apply_modulation, layer_modulations


@dataclass
class PipelineOutput:
    x_rec: Tensor
    x_cnn: Tensor
    gamma: Tensor = None
    ce_recon: Tensor = None
    modulation: dict = None


def modulated_theta(theta, modulation):
    """Replace every kernel tensor by its modulated copy; biases pass through."""
    out = dict(theta)
    for layer, mod in modulation.items():
        out[f"{layer}/w"] = apply_modulation(theta[f"{layer}/w"], mod.weight)
    return out


def km_pipeline(x_us, y, kept, theta, omega, ce, cfg: ModelConfig,
                gamma=None, lam=None, taps=None):
    """Context embedding -> per-layer factors -> kernel modulation -> base
    network -> data fidelity.  ``gamma`` may be supplied to reuse an
    embedding computed from other samples (the support batch)."""
    ce_recon = None
    if gamma is None:
        gamma, ce_recon = context_embed_batch(x_us, ce)
    modulation = layer_modulations(gamma, omega, layer_table(cfg.base),
                                   cfg.hyper.rank)
    theta_mod = modulated_theta(theta, modulation)
    x_cnn = base_forward(x_us, theta_mod, cfg.base, taps=taps)
    lam = cfg.df_lambda if lam is None else lam
    x_rec = data_fidelity(x_cnn, y, kept, lam)
    return PipelineOutput(x_rec=x_rec, x_cnn=x_cnn, gamma=gamma,
                          ce_recon=ce_recon, modulation=modulation)


def scale_pipeline(x_us, y, kept, theta, omega, ce, cfg: ModelConfig,
                   gamma=None, lam=None, taps=None):
    """Scalar-modulation baseline: the embedding drives one multiplier per
    base layer applied to that layer's activations."""
    ce_recon = None
    if gamma is None:
        gamma, ce_recon = context_embed_batch(x_us, ce)
    g2 = reshape(gamma, (1, gamma.shape[0])) if gamma.data.ndim == 1 else gamma
    scales = {}
    for spec in layer_table(cfg.base):
        tau = affine(g2, omega[f"{spec.name}/w"], omega[f"{spec.name}/b"])
        scales[spec.name] = reshape(tau, ())
    x_cnn = base_forward(x_us, theta, cfg.base, layer_scales=scales, taps=taps)
    lam = cfg.df_lambda if lam is None else lam
    x_rec = data_fidelity(x_cnn, y, kept, lam)
    return PipelineOutput(x_rec=x_rec, x_cnn=x_cnn, gamma=gamma,
                          ce_recon=ce_recon)


def plain_pipeline(x_us, y, kept, theta, cfg: ModelConfig, lam=None, taps=None):
    """Base network plus data fidelity, no modulation."""
    x_cnn = base_forward(x_us, theta, cfg.base, taps=taps)
    lam = cfg.df_lambda if lam is None else lam
    x_rec = data_fidelity(x_cnn, y, kept, lam)
    return PipelineOutput(x_rec=x_rec, x_cnn=x_cnn)


def reconstruct(x_us, y, mask, theta, omega, ce, cfg: ModelConfig,
                dtype=np.float64):
    """On-the-fly inference for one sample: embed the degraded input itself,
    modulate, run the base network, and hard-enforce the measurements.

    Accepts ComplexImage/KSpace/SamplingMask domain objects and returns the
    reconstructed ComplexImage.
    """
    x_t = Tensor(x_us.to_channels(dtype)[None])
    y_t = Tensor(y.to_channels(dtype)[None])
    kept = mask.kept[None, :, :, None]
    out = km_pipeline(x_t, y_t, kept, theta, omega, ce, cfg)
    return ComplexImage.from_channels(out.x_rec.data[0])
