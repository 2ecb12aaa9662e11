"""Synthetic multi-contrast phantoms: overlapping ellipses with a monotone
per-contrast intensity remap, so contrasts of one seed share geometry but
differ in intensity statistics."""

from __future__ import annotations

import zlib

import numpy as np

from .sampling import ComplexImage

# Named contrasts get fixed gamma exponents; unknown tags hash to a value in
# the same range.  All remaps are strictly monotone with f(0) = 0.
_CONTRAST_GAMMA = {
    "T1": 0.45,
    "T2": 1.8,
    "PD": 0.8,
    "FLAIR": 2.6,
}


def contrast_gamma(contrast_id):
    key = str(contrast_id)
    if key in _CONTRAST_GAMMA:
        return _CONTRAST_GAMMA[key]
    digest = zlib.crc32(key.encode("utf-8"))
    return 0.4 + 2.2 * ((digest % 10007) / 10007.0)


def generate_phantom(seed, contrast_id, h, w):
    """Random piecewise-constant ellipse phantom, magnitude in [0, 1],
    imaginary channel zero.  Deterministic per (seed, contrast_id)."""
    if h < 16 or w < 16:
        raise ValueError(f"phantom size must be >= 16, got {h}x{w}")
    rng = np.random.default_rng([int(seed), 0x9e3779b9])
    n_ellipses = int(rng.integers(5, 10))
    yy = (np.arange(h)[:, None] + 0.5) / h - 0.5
    xx = (np.arange(w)[None, :] + 0.5) / w - 0.5
    base = np.zeros((h, w), dtype=np.float64)
    for _ in range(n_ellipses):
        cy, cx = rng.uniform(-0.3, 0.3, size=2)
        ay = rng.uniform(0.08, 0.35)
        ax = rng.uniform(0.08, 0.35)
        angle = rng.uniform(0.0, np.pi)
        amp = rng.uniform(0.2, 1.0)
        c, s = np.cos(angle), np.sin(angle)
        u = (yy - cy) * c + (xx - cx) * s
        v = -(yy - cy) * s + (xx - cx) * c
        base += amp * ((u / ay) ** 2 + (v / ax) ** 2 <= 1.0)
    peak = base.max()
    if peak > 0:
        base = base / peak
    remapped = base ** contrast_gamma(contrast_id)
    return ComplexImage(real=remapped, imag=np.zeros_like(remapped))
