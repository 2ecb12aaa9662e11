"""Context encoder: convolutional autoencoder whose spatially averaged
latent supplies the mode embedding."""

from __future__ import annotations

import numpy as np

from ..numerics import (
    constant,
    conv2d,
    matmul,
    narrow,
    relu,
    reshape,
    spatial_mean,
    upsample_conv,
)


def _crop_spatial(t, h, w):
    if t.shape[1] != h:
        t = narrow(t, 1, 0, h)
    if t.shape[2] != w:
        t = narrow(t, 2, 0, w)
    return t


def _batch_mean(per_sample):
    """Mean over the batch axis of (n, c) -> (c,)."""
    n, c = per_sample.shape
    averager = constant(np.full((1, n), 1.0 / n), like=per_sample)
    return reshape(matmul(averager, per_sample), (c,))


def context_encode_batch(x, ce):
    """Run the encoder half on a (n, h, w, 2) batch.

    Returns the latent block (n, h', w', c) and per-sample embeddings (n, c).
    """
    h = x
    for i in range(3):
        h = relu(conv2d(h, ce[f"enc{i}/w"], ce[f"enc{i}/b"], stride=2))
    return h, spatial_mean(h)


def context_decode_batch(latent, ce, out_hw):
    h = latent
    for i in range(3):
        h = upsample_conv(h, ce[f"dec{i}/w"], ce[f"dec{i}/b"], factor=2)
        if i < 2:
            h = relu(h)
    return _crop_spatial(h, out_hw[0], out_hw[1])


def context_embed_batch(x, ce):
    """Pooled embedding of a batch: one c-vector averaged over the batch
    and over space, plus the autoencoder reconstruction for its auxiliary
    unsupervised loss."""
    latent, per_sample = context_encode_batch(x, ce)
    gamma = _batch_mean(per_sample)
    recon = context_decode_batch(latent, ce, (x.shape[1], x.shape[2]))
    return gamma, recon


def context_embed(x, ce):
    """Embedding of a single image tensor (h, w, 2) or batch of one.

    Returns (gamma, reconstruction); gamma has length c.
    """
    if x.data.ndim == 3:
        x = reshape(x, (1,) + x.shape)
    return context_embed_batch(x, ce)
