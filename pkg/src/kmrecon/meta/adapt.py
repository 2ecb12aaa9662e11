"""Test-time adaptation: fine-tune the (modulated) base network or the
modulation network on a task's support samples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model.config import layer_table
from ..model.context_encoder import context_embed_batch
from ..model.hypernet import layer_modulations
from ..model.pipeline import plain_pipeline, scale_pipeline
from ..model.base_net import LayerNumericError
from ..numerics import NonFiniteError, Tensor, gradients, l1_loss
from .config import AdaptConfig
from .train import TrainingAbort, _batch_tensors, _detach_group, inner_adapt


@dataclass
class AdaptResult:
    """Outcome of test-time fine-tuning.

    ``theta`` holds adapted base weights (modulation baked in for the
    kernel-modulated model), ``omega`` adapted modulation weights; exactly
    one is set unless no adaptation ran.
    """

    mode: str
    steps: int
    trace: list = field(default_factory=list)
    theta: dict = None
    omega: dict = None


def modulated_theta_snapshot(support, params, model_cfg, dtype=np.float64):
    """theta_mod for a task: kernels scaled by the modulation weights from
    the support-batch embedding; biases copied through."""
    x_s, _, _, _ = _batch_tensors(support, dtype)
    ce_f = _detach_group(params.ce)
    omega_f = _detach_group(params.omega)
    gamma, _ = context_embed_batch(x_s, ce_f)
    modulation = layer_modulations(gamma, omega_f, layer_table(model_cfg.base),
                                   model_cfg.hyper.rank)
    phi = {}
    for spec in layer_table(model_cfg.base):
        w = params.theta[f"{spec.name}/w"].data
        weight = modulation[spec.name].weight.data
        phi[f"{spec.name}/w"] = Tensor(
            (w * weight[:, :, None, None]).astype(w.dtype), requires_grad=True)
        phi[f"{spec.name}/b"] = Tensor(
            params.theta[f"{spec.name}/b"].data.copy(), requires_grad=True)
    return phi


def _adapt_scale_heads(support, params, model_cfg, lr, steps, dtype):
    """Fine-tune the scalar modulation heads with the base network frozen."""
    x_s, y_s, kept_s, xfs_s = _batch_tensors(support, dtype)
    theta_f = _detach_group(params.theta)
    ce_f = _detach_group(params.ce)
    omega_u = {k: Tensor(t.data.copy(), requires_grad=True)
               for k, t in params.omega.items()}
    trace = []
    for u in range(steps):
        try:
            gamma, _ = context_embed_batch(x_s, ce_f)
            out = scale_pipeline(x_s, y_s, kept_s, theta_f, omega_u, ce_f,
                                 model_cfg, gamma=gamma)
            loss = l1_loss(out.x_rec, xfs_s)
        except (NonFiniteError, LayerNumericError) as exc:
            raise TrainingAbort(str(exc), step=u) from exc
        trace.append(loss.item())
        names = list(omega_u)
        grads = gradients(loss, [omega_u[n] for n in names])
        omega_u = {n: Tensor(omega_u[n].data - lr * g, requires_grad=True)
                   for n, g in zip(names, grads)}
    return omega_u, trace


def finetune(support, params, strategy, model_cfg, adapt_cfg: AdaptConfig,
             dtype=np.float64):
    """Dispatch on the adaptation mode.

    on_the_fly returns the parameters unchanged (inference modulates from
    each input itself).  adapt_base initializes the adapted copy at
    theta_mod (theta for unmodulated strategies) and takes gradient steps
    on it with the modulation frozen.  adapt_hypernet steps on the
    modulation network with the base network frozen.
    """
    if adapt_cfg.mode == "on_the_fly":
        return AdaptResult(mode="on_the_fly", steps=0)
    if not support:
        raise ValueError(f"{adapt_cfg.mode} requires a non-empty support set")

    if adapt_cfg.mode == "adapt_hypernet":
        if strategy == "km_maml":
            omega_adapted, trace = inner_adapt(
                support, params, model_cfg, adapt_cfg.lr, adapt_cfg.steps, dtype)
        elif strategy == "mmaml":
            omega_adapted, trace = _adapt_scale_heads(
                support, params, model_cfg, adapt_cfg.lr, adapt_cfg.steps, dtype)
        else:
            raise ValueError(
                f"strategy {strategy!r} has no modulation network to adapt")
        return AdaptResult(mode=adapt_cfg.mode, steps=adapt_cfg.steps,
                           trace=trace, omega=omega_adapted)

    # adapt_base
    if strategy == "km_maml":
        phi = modulated_theta_snapshot(support, params, model_cfg, dtype)
    else:
        phi = {k: Tensor(t.data.copy(), requires_grad=True)
               for k, t in params.theta.items()}
    x_s, y_s, kept_s, xfs_s = _batch_tensors(support, dtype)
    omega_f = _detach_group(params.omega)
    ce_f = _detach_group(params.ce)
    trace = []
    for u in range(adapt_cfg.steps):
        try:
            if strategy == "mmaml":
                gamma, _ = context_embed_batch(x_s, ce_f)
                out = scale_pipeline(x_s, y_s, kept_s, phi, omega_f, ce_f,
                                     model_cfg, gamma=gamma)
            else:
                out = plain_pipeline(x_s, y_s, kept_s, phi, model_cfg)
            loss = l1_loss(out.x_rec, xfs_s)
        except (NonFiniteError, LayerNumericError) as exc:
            raise TrainingAbort(str(exc), step=u) from exc
        trace.append(loss.item())
        names = list(phi)
        grads = gradients(loss, [phi[n] for n in names])
        phi = {n: Tensor(phi[n].data - adapt_cfg.lr * g, requires_grad=True)
               for n, g in zip(names, grads)}
    return AdaptResult(mode=adapt_cfg.mode, steps=adapt_cfg.steps, trace=trace,
                       theta=phi)
