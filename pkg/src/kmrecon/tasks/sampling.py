"""Task construction: retrospective undersampling and support/query splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.fourier import dft2_array, idft2_array
from .masks import MaskSpec, SamplingMask


@dataclass(frozen=True)
class ComplexImage:
    """2-channel raster; magnitude drives every metric."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ValueError(
                f"real {self.real.shape} and imag {self.imag.shape} differ")
        if not (np.isfinite(self.real).all() and np.isfinite(self.imag).all()):
            raise ValueError("ComplexImage requires finite values")

    @property
    def height(self):
        return self.real.shape[0]

    @property
    def width(self):
        return self.real.shape[1]

    def magnitude(self):
        return np.sqrt(self.real ** 2 + self.imag ** 2)

    def to_channels(self, dtype=np.float64):
        """Channels-last (h, w, 2) array."""
        return np.stack([self.real, self.imag], axis=-1).astype(dtype)

    @classmethod
    def from_channels(cls, data):
        """Inverse of :meth:`to_channels`; accepts (h, w, 2)."""
        return cls(real=np.ascontiguousarray(data[..., 0], dtype=np.float64),
                   imag=np.ascontiguousarray(data[..., 1], dtype=np.float64))


# k-space carries the same 2-channel layout as image space.
KSpace = ComplexImage


@dataclass(frozen=True)
class TaskSample:
    """One (degraded input, measurement, mask, ground truth) tuple."""

    x_us: ComplexImage
    y: KSpace
    mask: SamplingMask
    x_fs: ComplexImage


@dataclass(frozen=True)
class Task:
    """One data mode: contrast x mask family x acceleration, with disjoint
    support/query partitions."""

    contrast: str
    mask_spec: MaskSpec
    support: tuple
    query: tuple
    seed: int

    @property
    def name(self):
        acc = self.mask_spec.acceleration
        acc_txt = f"{acc:g}"
        return f"{self.contrast}-{self.mask_spec.mask_type}-{acc_txt}x"


def undersample(x_fs, mask, noise_sigma=0.0, rng=None):
    """Retrospective undersampling: y = kept * dft2(x_fs), x_us = idft2(y).

    Optional additive complex Gaussian noise of std ``noise_sigma`` on the
    kept frequencies.
    """
    if (x_fs.height, x_fs.width) != mask.kept.shape:
        raise ValueError(
            f"image {x_fs.height}x{x_fs.width} vs mask {mask.kept.shape} mismatch")
    k_full = dft2_array(x_fs.to_channels())
    y = k_full * mask.kept[:, :, None]
    if noise_sigma > 0.0:
        rng = rng if rng is not None else np.random.default_rng(mask.seed)
        noise = rng.normal(0.0, noise_sigma, size=y.shape)
        y = y + noise * mask.kept[:, :, None]
    x_us = idft2_array(y)
    return ComplexImage.from_channels(x_us), KSpace.from_channels(y)


def build_task(images, contrast, mask_spec, split_ratio, seed,
               noise_sigma=0.0, mask_policy="per_sample"):
    """Deterministic support/query split with retrospective undersampling.

    ``mask_policy`` "per_sample" draws a fresh mask realization for every
    sample (seeds derived from the task seed); "per_task" shares one
    realization across the task, making the exact sampling pattern part of
    the mode the way fixed mask files do.
    """
    images = list(images)
    if len(images) < 2:
        raise ValueError(f"build_task needs >= 2 images, got {len(images)}")
    if mask_policy not in ("per_sample", "per_task"):
        raise ValueError(f"unknown mask_policy {mask_policy!r}")
    n_support = int(len(images) * split_ratio)
    if n_support < 1 or len(images) - n_support < 1:
        raise ValueError(
            f"split_ratio {split_ratio} leaves an empty partition for"
            f" {len(images)} images")
    rng = np.random.default_rng([int(seed), 0x5151])
    order = rng.permutation(len(images))

    def mask_for(sample_index):
        entropy = 0 if mask_policy == "per_task" else sample_index
        mask_seed = int(np.random.SeedSequence(
            entropy=[int(seed), entropy]).generate_state(1)[0])
        return mask_spec.generate(images[0].height, images[0].width, mask_seed)

    shared_mask = mask_for(0) if mask_policy == "per_task" else None

    def make_sample(image_index, sample_index):
        x_fs = images[image_index]
        mask = shared_mask if shared_mask is not None else mask_for(sample_index)
        x_us, y = undersample(x_fs, mask, noise_sigma=noise_sigma)
        return TaskSample(x_us=x_us, y=y, mask=mask, x_fs=x_fs)

    samples = [make_sample(idx, pos) for pos, idx in enumerate(order)]
    return Task(contrast=str(contrast), mask_spec=mask_spec,
                support=tuple(samples[:n_support]),
                query=tuple(samples[n_support:]), seed=int(seed))


def collate(samples, dtype=np.float32):
    """Stack samples into batch arrays for the training pipelines.

    Returns (x_us, y, kept, x_fs) with shapes (n, h, w, 2) for the image
    tensors and (n, h, w, 1) for the mask.
    """
    x_us = np.stack([s.x_us.to_channels(dtype) for s in samples])
    y = np.stack([s.y.to_channels(dtype) for s in samples])
    kept = np.stack([s.mask.kept[:, :, None] for s in samples]).astype(dtype)
    x_fs = np.stack([s.x_fs.to_channels(dtype) for s in samples])
    return x_us, y, kept, x_fs
