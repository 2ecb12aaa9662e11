"""PSNR, SSIM, linear CKA, and the pre/post-modulation profile."""

import numpy as np
import pytest

from kmrecon.metrics import cka_profile, linear_cka, psnr, ssim
from kmrecon.model import (
    BaseNetConfig,
    ContextEncoderConfig,
    HyperNetConfig,
    ModelConfig,
    init_params,
)
from kmrecon.tasks import MaskSpec, build_task, generate_phantom

MICRO = ModelConfig(
    base=BaseNetConfig(levels=3, channels=(2, 2, 3), bottleneck_channels=4,
                       kernel_size=1),
    hyper=HyperNetConfig(embed_dim=4, bottleneck=3, rank=1),
    ce=ContextEncoderConfig(channels=(2, 2), kernel_size=1))


# --- psnr ---------------------------------------------------------------

def test_psnr_identical_capped():
    img = np.random.default_rng(0).random((16, 16))
    assert psnr(img, img) == 100.0


def test_psnr_closed_form_20db():
    target = np.zeros((16, 16))
    target[0, 0] = 1.0
    pred = target + 0.1
    assert abs(psnr(pred, target) - 20.0) < 1e-9


def test_psnr_matches_two_pass_mse_oracle():
    rng = np.random.default_rng(1)
    target = rng.random((24, 24))
    pred = target + rng.normal(0, 0.05, size=target.shape)
    diff = pred - target
    mse = float(np.sum(diff * diff)) / diff.size
    expected = 20.0 * np.log10(target.max() / np.sqrt(mse))
    assert abs(psnr(pred, target) - expected) < 1e-9


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(2)
    target = rng.random((32, 32))
    noise = rng.normal(size=target.shape)
    values = [psnr(target + amp * noise, target) for amp in (0.01, 0.05, 0.2)]
    assert values[0] > values[1] > values[2]


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((5, 4)))


# --- ssim ---------------------------------------------------------------

def test_ssim_identical_is_one():
    img = np.random.default_rng(3).random((16, 16))
    assert abs(ssim(img, img) - 1.0) < 1e-12


def test_ssim_constant_images_closed_form():
    a, b = 0.5, 0.25
    pred = np.full((16, 16), a)
    target = np.full((16, 16), b)
    c1 = 1e-4  # (0.01 * range)^2 at range 1
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    assert abs(ssim(pred, target, data_range=1.0) - expected) < 1e-6


def _reference_ssim(pred, target, level):
    """Brute-force sliding-window implementation, plain loops."""
    size, sigma = 11, 1.5
    coords = np.arange(size) - 5
    g = np.exp(-coords ** 2 / (2 * sigma ** 2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = (0.01 * level) ** 2, (0.03 * level) ** 2
    h, w = pred.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            p = pred[i:i + size, j:j + size]
            t = target[i:i + size, j:j + size]
            mx, my = (win * p).sum(), (win * t).sum()
            vx = (win * p * p).sum() - mx ** 2
            vy = (win * t * t).sum() - my ** 2
            vxy = (win * p * t).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * vxy + c2)) /
                        ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_ssim_matches_sliding_window_reference():
    rng = np.random.default_rng(4)
    target = rng.random((16, 16))
    pred = target + rng.normal(0, 0.1, size=target.shape)
    level = target.max()
    assert abs(ssim(pred, target) - _reference_ssim(pred, target, level)) < 1e-9


def test_ssim_negated_zero_mean_is_nonpositive():
    # near-zero mean within every Gaussian window (period-4 oscillation), so
    # negation flips the structure term and the score goes non-positive
    yy, xx = np.meshgrid(np.arange(22), np.arange(22), indexing="ij")
    target = np.sin(2 * np.pi * xx / 4.0) * np.cos(2 * np.pi * yy / 4.0)
    value = ssim(-target, target, data_range=float(target.max()))
    assert value <= 0.0
    assert abs(value - _reference_ssim(-target, target, float(target.max()))) < 1e-9


def test_ssim_symmetric_with_fixed_range():
    rng = np.random.default_rng(6)
    a = rng.random((16, 16))
    b = rng.random((16, 16))
    assert abs(ssim(a, b, data_range=1.0) - ssim(b, a, data_range=1.0)) < 1e-9


def test_ssim_window_too_large():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


# --- linear CKA ----------------------------------------------------------

def test_cka_self_similarity_exact_one():
    x = np.random.default_rng(7).normal(size=(50, 8))
    assert linear_cka(x, x) == 1.0


def test_cka_orthogonal_and_scale_invariance():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(60, 6))
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    assert abs(linear_cka(x, x @ q) - 1.0) < 1e-9
    assert abs(linear_cka(x, 3.7 * x) - 1.0) < 1e-9
    assert abs(linear_cka(x, -0.5 * x) - 1.0) < 1e-9


def test_cka_independent_inputs_low():
    low = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        x = rng.normal(size=(200, 10))
        y = rng.normal(size=(200, 10))
        if linear_cka(x, y) < 0.15:
            low += 1
    assert low >= 95


def test_cka_zero_variance_rejected():
    with pytest.raises(ValueError):
        linear_cka(np.ones((10, 3)), np.random.default_rng(0).normal(size=(10, 3)))


def test_cka_needs_two_examples():
    with pytest.raises(ValueError):
        linear_cka(np.ones((1, 3)), np.ones((1, 3)))


# --- profile --------------------------------------------------------------

def _micro_tasks(n_tasks=2):
    tasks = []
    for t in range(n_tasks):
        images = [generate_phantom(900 + 20 * t + i, "T1", 16, 16)
                  for i in range(6)]
        tasks.append(build_task(images, "T1", MaskSpec("cartesian", 2.0, 0.1),
                                0.5, seed=t))
    return tasks


def test_identity_modulation_profile_all_ones():
    params = init_params("km_maml", MICRO, seed=1, dtype=np.float64)
    profile = cka_profile(params, _micro_tasks(), MICRO, sample_budget=3)
    assert profile.layers == ["enc0", "enc1", "enc2", "bottleneck",
                              "dec2", "dec1", "dec0"]
    for name in profile.layers:
        assert profile.mean[name] == 1.0
        assert profile.std[name] == 0.0


def test_profile_values_in_unit_interval():
    # perturb every group so no layer collapses to zero-variance activations
    params = init_params("km_maml", MICRO, seed=2, dtype=np.float64)
    rng = np.random.default_rng(3)
    for _, t in params.named_tensors():
        t.data = t.data + rng.normal(0, 0.2, size=t.shape)
    profile = cka_profile(params, _micro_tasks(), MICRO, sample_budget=3)
    for name in profile.layers:
        assert 0.0 <= profile.mean[name] <= 1.0


def test_profile_budget_validation():
    params = init_params("km_maml", MICRO, seed=4, dtype=np.float64)
    with pytest.raises(ValueError):
        cka_profile(params, _micro_tasks(), MICRO, sample_budget=1)
    with pytest.raises(ValueError):
        cka_profile(params, [], MICRO, sample_budget=4)
