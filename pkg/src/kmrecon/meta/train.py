"""Bi-level training loop: kernel-modulated meta-learning and the joint,
plain-MAML, and scalar-modulation baselines.

The inner loop takes plain gradient steps on the adapted group only; the
outer loop applies one Adam update per task mini-batch to every trainable
group jointly.  In first-order mode the adapted parameters are treated as
leaves for the outer gradient; unrolled mode back-propagates through the
inner updates using directional finite-difference Hessian products of the
support gradient.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..model.base_net import LayerNumericError
from ..model.context_encoder import context_embed_batch
from ..model.pipeline import km_pipeline, plain_pipeline, scale_pipeline
from ..numerics import NonFiniteError, Tensor, add, backward, gradients, l1_loss, scale
from ..tasks.sampling import collate
from .adam import AdamState
from .config import TrainConfig


class TrainingAbort(RuntimeError):
    """Non-finite loss; carries the epoch/task/step where it happened."""

    def __init__(self, detail, epoch=None, task=None, step=None):
        self.detail = detail
        self.epoch = epoch
        self.task = task
        self.step = step
        super().__init__(self._message())

    def _message(self):
        where = f"epoch={self.epoch} task={self.task} step={self.step}"
        return f"training aborted ({where}): {self.detail}"


@dataclass
class TaskLogRecord:
    epoch: int
    strategy: str
    task: str
    support_loss: float
    query_loss: float
    wall_ms: float


def _detach_group(group):
    return {k: t.detach() for k, t in group.items()}


def _clone_leaves(group):
    return {k: Tensor(t.data.copy(), requires_grad=True) for k, t in group.items()}


def _batch_tensors(samples, dtype):
    x, y, kept, x_fs = collate(samples, dtype)
    return Tensor(x), Tensor(y), kept, Tensor(x_fs)


def sample_batch(samples, batch_size, rng):
    """Draw up to ``batch_size`` samples without replacement; the whole
    partition when it is no larger than the batch."""
    samples = list(samples)
    if len(samples) <= batch_size:
        return samples
    idx = rng.choice(len(samples), size=batch_size, replace=False)
    return [samples[i] for i in sorted(idx)]


def _sgd_update(leaves, grads_list, lr):
    names = list(leaves)
    return {n: Tensor(leaves[n].data - lr * g, requires_grad=True)
            for n, g in zip(names, grads_list)}


def _route_leaf_grads(leaves, meta_group):
    """First-order outer update: deposit adapted-leaf gradients onto the
    corresponding meta tensors."""
    for name, leaf in leaves.items():
        if leaf.grad is None:
            continue
        meta = meta_group[name]
        meta.grad = leaf.grad.copy() if meta.grad is None else meta.grad + leaf.grad


def inner_adapt(support, params, model_cfg, lr, steps, dtype=np.float32):
    """Task-specific adaptation of the modulation hypernetworks.

    The base network and context encoder stay frozen; the embedding is
    recomputed from the support inputs at every step.  Returns the adapted
    weights (fresh leaves) and the per-step support loss trace.
    """
    if not support:
        raise ValueError("inner_adapt needs a non-empty support batch")
    x_s, y_s, kept_s, xfs_s = _batch_tensors(support, dtype)
    theta_f = _detach_group(params.theta)
    ce_f = _detach_group(params.ce)
    omega_u = _clone_leaves(params.omega)
    trace = []
    for u in range(steps):
        try:
            gamma, _ = context_embed_batch(x_s, ce_f)
            out = km_pipeline(x_s, y_s, kept_s, theta_f, omega_u, ce_f,
                              model_cfg, gamma=gamma)
            loss = l1_loss(out.x_rec, xfs_s)
        except (NonFiniteError, LayerNumericError) as exc:
            raise TrainingAbort(str(exc), step=u) from exc
        trace.append(loss.item())
        names = list(omega_u)
        grads = gradients(loss, [omega_u[n] for n in names])
        omega_u = _sgd_update(omega_u, grads, lr)
    return omega_u, trace


def _adapt_theta_inner(support_tensors, params, model_cfg, lr, steps,
                       strategy):
    """Inner loop for the baselines that adapt the base network itself."""
    x_s, y_s, kept_s, xfs_s = support_tensors
    theta_u = _clone_leaves(params.theta)
    omega_f = _detach_group(params.omega)
    ce_f = _detach_group(params.ce)
    trace = []
    for u in range(steps):
        try:
            if strategy == "mmaml":
                gamma, _ = context_embed_batch(x_s, ce_f)
                out = scale_pipeline(x_s, y_s, kept_s, theta_u, omega_f, ce_f,
                                     model_cfg, gamma=gamma)
            else:
                out = plain_pipeline(x_s, y_s, kept_s, theta_u, model_cfg)
            loss = l1_loss(out.x_rec, xfs_s)
        except (NonFiniteError, LayerNumericError) as exc:
            raise TrainingAbort(str(exc), step=u) from exc
        trace.append(loss.item())
        names = list(theta_u)
        grads = gradients(loss, [theta_u[n] for n in names])
        theta_u = _sgd_update(theta_u, grads, lr)
    return theta_u, trace


def _km_task(task, spt, qry, params, cfg, model_cfg, dtype):
    omega_leaf, trace = inner_adapt(spt, params, model_cfg, cfg.inner_lr,
                                    cfg.inner_steps, dtype)
    for t in omega_leaf.values():
        t.zero_grad()
    x_s, y_s, kept_s, xfs_s = _batch_tensors(spt, dtype)
    x_q, y_q, kept_q, xfs_q = _batch_tensors(qry, dtype)
    try:
        gamma, ce_recon = context_embed_batch(x_s, params.ce)
        out = km_pipeline(x_q, y_q, kept_q, params.theta, omega_leaf,
                          params.ce, model_cfg, gamma=gamma)
        query_loss = l1_loss(out.x_rec, xfs_q)
        total = add(query_loss,
                    scale(l1_loss(ce_recon, x_s), model_cfg.aux_loss_weight))
        backward(total)
    except (NonFiniteError, LayerNumericError) as exc:
        raise TrainingAbort(str(exc)) from exc
    _route_leaf_grads(omega_leaf, params.omega)
    support_loss = trace[-1] if trace else math.nan
    return support_loss, query_loss.item()


def _maml_task(task, spt, qry, params, cfg, model_cfg, dtype):
    support_tensors = _batch_tensors(spt, dtype)
    theta_leaf, trace = _adapt_theta_inner(support_tensors, params, model_cfg,
                                           cfg.inner_lr, cfg.inner_steps, "maml")
    for t in theta_leaf.values():
        t.zero_grad()
    x_q, y_q, kept_q, xfs_q = _batch_tensors(qry, dtype)
    try:
        out = plain_pipeline(x_q, y_q, kept_q, theta_leaf, model_cfg)
        query_loss = l1_loss(out.x_rec, xfs_q)
        backward(query_loss)
    except (NonFiniteError, LayerNumericError) as exc:
        raise TrainingAbort(str(exc)) from exc
    _route_leaf_grads(theta_leaf, params.theta)
    support_loss = trace[-1] if trace else math.nan
    return support_loss, query_loss.item()


def _mmaml_task(task, spt, qry, params, cfg, model_cfg, dtype):
    support_tensors = _batch_tensors(spt, dtype)
    theta_leaf, trace = _adapt_theta_inner(support_tensors, params, model_cfg,
                                           cfg.inner_lr, cfg.inner_steps, "mmaml")
    for t in theta_leaf.values():
        t.zero_grad()
    x_s = support_tensors[0]
    x_q, y_q, kept_q, xfs_q = _batch_tensors(qry, dtype)
    try:
        gamma, ce_recon = context_embed_batch(x_s, params.ce)
        out = scale_pipeline(x_q, y_q, kept_q, theta_leaf, params.omega,
                             params.ce, model_cfg, gamma=gamma)
        query_loss = l1_loss(out.x_rec, xfs_q)
        total = add(query_loss,
                    scale(l1_loss(ce_recon, x_s), model_cfg.aux_loss_weight))
        backward(total)
    except (NonFiniteError, LayerNumericError) as exc:
        raise TrainingAbort(str(exc)) from exc
    _route_leaf_grads(theta_leaf, params.theta)
    support_loss = trace[-1] if trace else math.nan
    return support_loss, query_loss.item()


def _per_sample_l1(pred, target):
    diff = np.abs(pred - target)
    return diff.reshape(diff.shape[0], -1).mean(axis=1)


def _joint_batch(batch_data, params, cfg, model_cfg, dtype, epoch,
                 deterministic_timing=False):
    """Single-level update on the pooled support+query samples of the
    sampled tasks."""
    pooled = []
    spans = []
    for task, spt, qry in batch_data:
        start = len(pooled)
        pooled.extend(spt)
        pooled.extend(qry)
        spans.append((task, start, len(spt), len(qry)))
    x, y, kept, xfs = _batch_tensors(pooled, dtype)
    t0 = time.perf_counter()
    try:
        out = plain_pipeline(x, y, kept, params.theta, model_cfg)
        loss = l1_loss(out.x_rec, xfs)
        backward(loss)
    except (NonFiniteError, LayerNumericError) as exc:
        raise TrainingAbort(str(exc), epoch=epoch) from exc
    wall = (time.perf_counter() - t0) * 1e3 / max(len(batch_data), 1)
    if deterministic_timing:
        wall = 0.0
    per_sample = _per_sample_l1(out.x_rec.data, xfs.data)
    records = []
    for task, start, n_spt, n_qry in spans:
        support_loss = float(per_sample[start:start + n_spt].mean())
        query_loss = float(per_sample[start + n_spt:start + n_spt + n_qry].mean())
        records.append(TaskLogRecord(epoch, cfg.strategy, task.name,
                                     support_loss, query_loss, wall))
    return records


_FIRST_ORDER_TASKS = {
    "km_maml": _km_task,
    "maml": _maml_task,
    "mmaml": _mmaml_task,
}


def meta_train_epoch(tasks, params, cfg: TrainConfig, model_cfg, optimizer,
                     epoch, dtype=np.float32, deterministic_timing=False):
    """One pass over all tasks in mini-batches: per batch, adapt each task
    on its support samples, aggregate query losses, and apply one joint
    Adam update.  Returns one log record per task."""
    if not tasks:
        raise ValueError("meta_train_epoch needs at least one task")
    rng = np.random.default_rng([cfg.seed, 0xE60C, int(epoch)])
    order = rng.permutation(len(tasks))
    records = []
    for chunk_start in range(0, len(order), cfg.task_batch):
        chunk = order[chunk_start:chunk_start + cfg.task_batch]
        params.zero_grad()
        batch_data = []
        for ti in chunk:
            task = tasks[int(ti)]
            spt = sample_batch(task.support, cfg.support_batch, rng)
            qry = sample_batch(task.query, cfg.query_batch, rng)
            batch_data.append((task, spt, qry))
        if cfg.strategy == "joint":
            recs = _joint_batch(batch_data, params, cfg, model_cfg, dtype,
                                epoch, deterministic_timing)
        else:
            recs = []
            for task, spt, qry in batch_data:
                t0 = time.perf_counter()
                try:
                    if cfg.inner_mode == "unrolled":
                        s_loss, q_loss = _unrolled_task(
                            cfg.strategy, spt, qry, params, cfg, model_cfg, dtype)
                    else:
                        s_loss, q_loss = _FIRST_ORDER_TASKS[cfg.strategy](
                            task, spt, qry, params, cfg, model_cfg, dtype)
                except TrainingAbort as exc:
                    raise TrainingAbort(exc.detail, epoch=epoch,
                                        task=task.name, step=exc.step) from exc
                wall = (time.perf_counter() - t0) * 1e3
                recs.append(TaskLogRecord(
                    epoch, cfg.strategy, task.name, s_loss, q_loss,
                    0.0 if deterministic_timing else wall))
        optimizer.step()
        records.extend(recs)
    return records


def build_optimizer(params, cfg: TrainConfig):
    return AdamState(dict(params.named_tensors()), lr=cfg.outer_lr)


def run_training(tasks, params, cfg: TrainConfig, model_cfg, dtype=np.float32,
          optimizer=None, start_epoch=0, epoch_callback=None,
          deterministic_timing=False):
    """Run ``cfg.epochs`` training epochs; per-epoch data order is derived
    from (seed, epoch) so resumed runs continue identically."""
    if optimizer is None:
        optimizer = build_optimizer(params, cfg)
    all_records = []
    for epoch in range(start_epoch, cfg.epochs):
        records = meta_train_epoch(tasks, params, cfg, model_cfg, optimizer,
                                   epoch, dtype=dtype,
                                   deterministic_timing=deterministic_timing)
        all_records.extend(records)
        if epoch_callback is not None:
            epoch_callback(epoch, records, optimizer)
    return optimizer, all_records


# ---------------------------------------------------------------------------
# Unrolled (exact bi-level) differentiation
# ---------------------------------------------------------------------------

def _strategy_groups(strategy):
    """(adapted group, other differentiable groups) per strategy."""
    if strategy == "km_maml":
        return "omega", ("theta", "ce")
    if strategy == "maml":
        return "theta", ()
    if strategy == "mmaml":
        return "theta", ("omega", "ce")
    raise ValueError(f"unrolled mode undefined for strategy {strategy!r}")


def _make_support_grad(strategy, support_tensors, params, model_cfg):
    """Gradient of the support loss as a function of the adapted group,
    returning gradients for every differentiable group (raw arrays)."""
    x_s, y_s, kept_s, xfs_s = support_tensors
    adapted, extras = _strategy_groups(strategy)
    group_map = {"theta": params.theta, "omega": params.omega, "ce": params.ce}

    def evaluate(adapted_arrays):
        live = {}
        for gname in (adapted,) + extras:
            source = group_map[gname]
            if gname == adapted:
                live[gname] = {n: Tensor(adapted_arrays[n], requires_grad=True)
                               for n in source}
            else:
                live[gname] = {n: Tensor(source[n].data, requires_grad=True)
                               for n in source}
        theta = live.get("theta", _detach_group(params.theta))
        omega = live.get("omega", _detach_group(params.omega))
        ce = live.get("ce", _detach_group(params.ce))
        if strategy == "km_maml":
            gamma, _ = context_embed_batch(x_s, ce)
            out = km_pipeline(x_s, y_s, kept_s, theta, omega, ce, model_cfg,
                              gamma=gamma)
        elif strategy == "mmaml":
            gamma, _ = context_embed_batch(x_s, ce)
            out = scale_pipeline(x_s, y_s, kept_s, theta, omega, ce, model_cfg,
                                 gamma=gamma)
        else:
            out = plain_pipeline(x_s, y_s, kept_s, theta, model_cfg)
        loss = l1_loss(out.x_rec, xfs_s)
        backward(loss)
        grads = {}
        for gname, group in live.items():
            grads[gname] = {n: (t.grad if t.grad is not None
                                else np.zeros_like(t.data))
                            for n, t in group.items()}
        return loss.item(), grads

    return evaluate, adapted, extras


def _fd_hvp(support_grad, adapted_arrays, direction, adapted):
    """Directional Hessian products of the support gradient via central
    differences along ``direction`` in the adapted group.

    The probed gradients are exact reverse-mode values, so the step can be
    tiny; that keeps the probe inside one smooth piece of the piecewise
    landscape the L1/ReLU losses induce.
    """
    vmax = max((np.abs(v).max() for v in direction.values()), default=0.0)
    if vmax == 0.0:
        return None
    omax = max(np.abs(a).max() for a in adapted_arrays.values())
    eps = 1e-7 * (1.0 + omax) / vmax
    plus = {n: adapted_arrays[n] + eps * direction[n] for n in adapted_arrays}
    minus = {n: adapted_arrays[n] - eps * direction[n] for n in adapted_arrays}
    _, g_plus = support_grad(plus)
    _, g_minus = support_grad(minus)
    hvp = {}
    for gname in g_plus:
        hvp[gname] = {n: (g_plus[gname][n] - g_minus[gname][n]) / (2.0 * eps)
                      for n in g_plus[gname]}
    return hvp


def _unrolled_task(strategy, spt, qry, params, cfg, model_cfg, dtype):
    """Exact bi-level gradient: reverse sweep through the inner updates with
    finite-difference Hessian products contracted against the transported
    query gradient.  Intended for float64 micro-network validation."""
    support_tensors = _batch_tensors(spt, dtype)
    support_grad, adapted, extras = _make_support_grad(
        strategy, support_tensors, params, model_cfg)
    group_map = {"theta": params.theta, "omega": params.omega, "ce": params.ce}
    adapted_group = group_map[adapted]

    trajectory = [{n: t.data.copy() for n, t in adapted_group.items()}]
    trace = []
    for _ in range(cfg.inner_steps):
        loss_value, grads = support_grad(trajectory[-1])
        trace.append(loss_value)
        trajectory.append({n: trajectory[-1][n] - cfg.inner_lr * grads[adapted][n]
                           for n in trajectory[-1]})

    # Query pass at the adapted endpoint: direct gradients for the frozen
    # groups land on the live meta tensors, the adapted-group gradient
    # seeds the reverse sweep.
    x_s = support_tensors[0]
    x_q, y_q, kept_q, xfs_q = _batch_tensors(qry, dtype)
    adapted_leaf = {n: Tensor(trajectory[-1][n], requires_grad=True)
                    for n in adapted_group}
    theta = adapted_leaf if adapted == "theta" else params.theta
    omega = adapted_leaf if adapted == "omega" else params.omega
    try:
        if strategy == "km_maml":
            gamma, ce_recon = context_embed_batch(x_s, params.ce)
            out = km_pipeline(x_q, y_q, kept_q, theta, omega, params.ce,
                              model_cfg, gamma=gamma)
        elif strategy == "mmaml":
            gamma, ce_recon = context_embed_batch(x_s, params.ce)
            out = scale_pipeline(x_q, y_q, kept_q, theta, omega, params.ce,
                                 model_cfg, gamma=gamma)
        else:
            ce_recon = None
            out = plain_pipeline(x_q, y_q, kept_q, theta, model_cfg)
        query_loss = l1_loss(out.x_rec, xfs_q)
        total = query_loss
        if ce_recon is not None:
            total = add(total, scale(l1_loss(ce_recon, x_s),
                                     model_cfg.aux_loss_weight))
        backward(total)
    except (NonFiniteError, LayerNumericError) as exc:
        raise TrainingAbort(str(exc)) from exc

    v = {n: (adapted_leaf[n].grad if adapted_leaf[n].grad is not None
             else np.zeros_like(adapted_leaf[n].data))
         for n in adapted_leaf}
    for u in range(cfg.inner_steps - 1, -1, -1):
        hvp = _fd_hvp(support_grad, trajectory[u], v, adapted)
        if hvp is None:
            continue
        for gname in extras:
            group = group_map[gname]
            for n, t in group.items():
                corr = -cfg.inner_lr * hvp[gname][n]
                t.grad = corr if t.grad is None else t.grad + corr
        v = {n: v[n] - cfg.inner_lr * hvp[adapted][n] for n in v}
    for n, t in adapted_group.items():
        t.grad = v[n].copy() if t.grad is None else t.grad + v[n]
    support_loss = trace[-1] if trace else math.nan
    return support_loss, query_loss.item()
