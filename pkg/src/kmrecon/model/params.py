"""Named parameter tensors for the base network, hypernetworks, and context
encoder, plus strategy-aware initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import Tensor
from .config import ModelConfig, layer_table

STRATEGIES = ("joint", "maml", "mmaml", "km_maml")


@dataclass
class ParameterSet:
    """theta: base network, omega: modulation networks, ce: context encoder.

    Keys are "layer/role" within each group; adapted copies are structural
    clones produced by :meth:`clone`.
    """

    theta: dict = field(default_factory=dict)
    omega: dict = field(default_factory=dict)
    ce: dict = field(default_factory=dict)

    def groups(self):
        return (("theta", self.theta), ("omega", self.omega), ("ce", self.ce))

    def named_tensors(self):
        for group_name, group in self.groups():
            for key, tensor in group.items():
                yield f"{group_name}/{key}", tensor

    def all_tensors(self):
        return [t for _, t in self.named_tensors()]

    def clone(self):
        return ParameterSet(
            theta={k: v.clone() for k, v in self.theta.items()},
            omega={k: v.clone() for k, v in self.omega.items()},
            ce={k: v.clone() for k, v in self.ce.items()},
        )

    def zero_grad(self):
        for t in self.all_tensors():
            t.zero_grad()


def _he_normal(rng, shape, fan_in, dtype):
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape).astype(dtype)


def _conv_pair(rng, out_ch, in_ch, k, dtype):
    w = _he_normal(rng, (out_ch, in_ch, k, k), in_ch * k * k, dtype)
    b = np.zeros(out_ch, dtype=dtype)
    return w, b


def init_base_params(cfg: ModelConfig, rng, dtype):
    theta = {}
    k = cfg.base.kernel_size
    for spec in layer_table(cfg.base):
        w, b = _conv_pair(rng, spec.out_channels, spec.in_channels, k, dtype)
        theta[f"{spec.name}/w"] = Tensor(w, requires_grad=True)
        theta[f"{spec.name}/b"] = Tensor(b, requires_grad=True)
    return theta


def init_hyper_params(cfg: ModelConfig, rng, dtype):
    """Kernel-modulation hypernetworks; the output layer starts at zero
    weight with unit bias so training begins at identity modulation."""
    omega = {}
    c = cfg.hyper.embed_dim
    hidden = cfg.hyper.bottleneck
    for spec in layer_table(cfg.base):
        out_size = cfg.hyper.output_size(spec.out_channels, spec.in_channels)
        omega[f"{spec.name}/w1"] = Tensor(
            _he_normal(rng, (c, hidden), c, dtype), requires_grad=True)
        omega[f"{spec.name}/b1"] = Tensor(
            np.zeros(hidden, dtype=dtype), requires_grad=True)
        omega[f"{spec.name}/w2"] = Tensor(
            np.zeros((hidden, out_size), dtype=dtype), requires_grad=True)
        omega[f"{spec.name}/b2"] = Tensor(
            np.ones(out_size, dtype=dtype), requires_grad=True)
    return omega


def init_scale_params(cfg: ModelConfig, rng, dtype):
    """Per-layer scalar modulation heads (the coarse baseline): embedding ->
    one multiplier per base layer, initialized to the identity scale."""
    omega = {}
    c = cfg.hyper.embed_dim
    for spec in layer_table(cfg.base):
        omega[f"{spec.name}/w"] = Tensor(
            np.zeros((c, 1), dtype=dtype), requires_grad=True)
        omega[f"{spec.name}/b"] = Tensor(
            np.ones(1, dtype=dtype), requires_grad=True)
    return omega


def init_ce_params(cfg: ModelConfig, rng, dtype):
    ce = {}
    k = cfg.ce.kernel_size
    c1, c2 = cfg.ce.channels
    io = cfg.base.io_channels
    widths = [(io, c1), (c1, c2), (c2, cfg.hyper.embed_dim)]
    for i, (cin, cout) in enumerate(widths):
        w, b = _conv_pair(rng, cout, cin, k, dtype)
        ce[f"enc{i}/w"] = Tensor(w, requires_grad=True)
        ce[f"enc{i}/b"] = Tensor(b, requires_grad=True)
    widths = [(cfg.hyper.embed_dim, c2), (c2, c1), (c1, io)]
    for i, (cin, cout) in enumerate(widths):
        w, b = _conv_pair(rng, cout, cin, k, dtype)
        ce[f"dec{i}/w"] = Tensor(w, requires_grad=True)
        ce[f"dec{i}/b"] = Tensor(b, requires_grad=True)
    return ce


def init_params(strategy, cfg: ModelConfig, seed, dtype=np.float32):
    """Fresh ParameterSet for a training strategy.

    joint/maml carry only the base network; mmaml adds the context encoder
    and scalar modulation heads; km_maml adds the context encoder and the
    kernel-modulation hypernetworks.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    rng = np.random.default_rng([int(seed), 0xA11CE])
    params = ParameterSet(theta=init_base_params(cfg, rng, dtype))
    if strategy == "km_maml":
        params.omega = init_hyper_params(cfg, rng, dtype)
        params.ce = init_ce_params(cfg, rng, dtype)
    elif strategy == "mmaml":
        params.omega = init_scale_params(cfg, rng, dtype)
        params.ce = init_ce_params(cfg, rng, dtype)
    return params
