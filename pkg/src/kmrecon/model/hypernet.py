"""Layer-wise modulation hypernetworks and the low-rank kernel-modulation
operation."""

from __future__ import annotations

from dataclasses import dataclass

from ..numerics import ShapeError, Tensor, affine, matmul, mul, narrow, reshape


def hypernet_forward(gamma, omega_layer, n_out, n_in, rank=1):
    """Linear perceptron (c -> bottleneck -> rank*(n_out+n_in)) producing
    the factor pair for one base layer.

    The flat output holds the rank*n_out beta values first, then the
    rank*n_in alpha values; no output nonlinearity.
    """
    if gamma.data.ndim == 1:
        gamma = reshape(gamma, (1, gamma.shape[0]))
    if gamma.shape[1] != omega_layer["w1"].shape[0]:
        raise ShapeError(
            f"hypernet_forward: embedding length {gamma.shape[1]} !="
            f" input width {omega_layer['w1'].shape[0]}")
    hidden = affine(gamma, omega_layer["w1"], omega_layer["b1"])
    out = affine(hidden, omega_layer["w2"], omega_layer["b2"])
    expected = rank * (n_out + n_in)
    if out.shape[1] != expected:
        raise ShapeError(
            f"hypernet_forward: output width {out.shape[1]} != rank*(n_out+n_in)"
            f" = {expected}")
    beta = reshape(narrow(out, 1, 0, rank * n_out), (n_out, rank))
    alpha = reshape(narrow(out, 1, rank * n_out, rank * n_in), (rank, n_in))
    return beta, alpha


@dataclass
class LayerModulation:
    """Low-rank factors and their product for one base layer."""

    beta: Tensor
    alpha: Tensor
    weight: Tensor  # (n_out, n_in), rank <= rank(beta)


def modulation_weight(beta, alpha):
    return matmul(beta, alpha)


def apply_modulation(theta_w, weight):
    """Broadcast-multiply kernels (out, in, k, k) by a weight matrix (out, in)."""
    n_out, n_in = theta_w.shape[:2]
    if weight.shape != (n_out, n_in):
        raise ShapeError(
            f"apply_modulation: kernels {theta_w.shape} vs weights {weight.shape}")
    return mul(theta_w, reshape(weight, (n_out, n_in, 1, 1)))


def modulate(theta_w, beta, alpha):
    """Scale every k x k kernel (i, j) of ``theta_w`` by W[i, j] where
    W = beta @ alpha.  Biases are left untouched by the caller."""
    if theta_w.data.ndim != 4:
        raise ShapeError(f"modulate expects (out, in, k, k) kernels, got {theta_w.shape}")
    n_out, n_in = theta_w.shape[:2]
    if beta.shape[0] != n_out or alpha.shape[1] != n_in or beta.shape[1] != alpha.shape[0]:
        raise ShapeError(
            f"modulate: kernels {theta_w.shape} vs beta {beta.shape},"
            f" alpha {alpha.shape}")
    return apply_modulation(theta_w, modulation_weight(beta, alpha))


def layer_modulations(gamma, omega, base_layers, rank=1):
    """All per-layer factor pairs for one embedding."""
    result = {}
    for spec in base_layers:
        sub = {role: omega[f"{spec.name}/{role}"]
               for role in ("w1", "b1", "w2", "b2")}
        beta, alpha = hypernet_forward(gamma, sub, spec.out_channels,
                                       spec.in_channels, rank)
        result[spec.name] = LayerModulation(
            beta=beta, alpha=alpha, weight=modulation_weight(beta, alpha))
    return result
