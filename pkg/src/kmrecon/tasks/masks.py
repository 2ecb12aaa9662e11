"""k-space sampling mask generation.

Masks are stored in the same (unshifted) frequency layout that the unitary
DFT produces, so ``kept * dft2(image)`` needs no re-centering.  "Low
frequency" therefore means small wrapped frequency offset, not small array
index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MaskParameterError(ValueError):
    """Requested mask parameters are infeasible."""


@dataclass(frozen=True)
class SamplingMask:
    """Binary k-space sampling pattern.

    ``kept`` is a boolean (h, w) grid in DFT-native layout; True marks a
    sampled frequency.
    """

    kept: np.ndarray
    mask_type: str
    acceleration: float
    center_fraction: float
    seed: int

    @property
    def height(self):
        return self.kept.shape[0]

    @property
    def width(self):
        return self.kept.shape[1]

    @property
    def realized_acceleration(self):
        return self.kept.size / max(int(self.kept.sum()), 1)


@dataclass(frozen=True)
class MaskSpec:
    """Mask family parameters, realized per sample with derived seeds."""

    mask_type: str
    acceleration: float
    center_fraction: float = 0.08

    def generate(self, h, w, seed):
        if self.mask_type == "cartesian":
            return generate_cartesian_mask(h, w, self.acceleration,
                                           self.center_fraction, seed)
        if self.mask_type == "gaussian":
            return generate_gaussian_mask(h, w, self.acceleration,
                                          self.center_fraction, seed)
        raise MaskParameterError(f"unknown mask type {self.mask_type!r}")


def freq_offsets(n):
    """Signed frequency offset of each DFT bin (0, 1, ..., -1)."""
    return np.fft.fftfreq(n, d=1.0 / n)


def _validate(acceleration, center_fraction):
    if acceleration < 1:
        raise MaskParameterError(f"acceleration must be >= 1, got {acceleration}")
    if not 0 <= center_fraction <= 1.0 / acceleration:
        raise MaskParameterError(
            f"center_fraction {center_fraction} outside [0, 1/acceleration]"
            f" for acceleration {acceleration}")


def generate_cartesian_mask(h, w, acceleration, center_fraction, seed):
    """Column mask: a fully kept low-frequency block plus uniformly random
    extra lines, ``round(w / acceleration)`` kept lines in total."""
    _validate(acceleration, center_fraction)
    n_total = int(round(w / acceleration))
    n_center = int(center_fraction * w)
    if n_total < n_center or n_total < 1:
        raise MaskParameterError(
            f"cartesian mask needs {n_total} lines but center block has {n_center}")
    order = np.argsort(np.abs(freq_offsets(w)), kind="stable")
    center_cols = order[:n_center]
    rest = order[n_center:]
    rng = np.random.default_rng(seed)
    extra = rng.choice(rest, size=n_total - n_center, replace=False)
    kept = np.zeros((h, w), dtype=bool)
    kept[:, center_cols] = True
    kept[:, extra] = True
    return SamplingMask(kept, "cartesian", float(acceleration),
                        float(center_fraction), int(seed))


def generate_gaussian_mask(h, w, acceleration, center_fraction, seed):
    """Point mask: a fully kept center disc plus points drawn without
    replacement with radially Gaussian probability, ``round(h*w/acceleration)``
    kept points in total."""
    _validate(acceleration, center_fraction)
    n_total = int(round(h * w / acceleration))
    fy = freq_offsets(h)[:, None]
    fx = freq_offsets(w)[None, :]
    dist = np.sqrt(fy ** 2 + fx ** 2)
    r_center = int(center_fraction * min(h, w) / 2)
    center = dist <= r_center
    n_center = int(center.sum())
    if n_total < n_center or n_total < 1:
        raise MaskParameterError(
            f"gaussian mask needs {n_total} points but center disc has {n_center}")
    sigma = min(h, w) / 6.0
    weights = np.exp(-dist ** 2 / (2.0 * sigma ** 2))
    weights[center] = 0.0
    flat = weights.reshape(-1)
    candidates = np.flatnonzero(flat)
    rng = np.random.default_rng(seed)
    probs = flat[candidates] / flat[candidates].sum()
    extra = rng.choice(candidates, size=n_total - n_center, replace=False, p=probs)
    kept = center.copy()
    kept.reshape(-1)[extra] = True
    return SamplingMask(kept, "gaussian", float(acceleration),
                        float(center_fraction), int(seed))
