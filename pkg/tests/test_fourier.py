"""Unitary DFT: inversion, energy, normalization, and the oracle check."""

import numpy as np
import pytest

from kmrecon.numerics import Tensor, dft2, gradients, idft2, l1_loss
from kmrecon.numerics.gradcheck import finite_difference_grad, relative_error


def _direct_dft(z):
    """O(N^2) reference DFT with unitary normalization."""
    h, w = z.shape
    out = np.zeros((h, w), dtype=complex)
    for ky in range(h):
        for kx in range(w):
            phase = np.exp(-2j * np.pi * (
                np.outer(np.arange(h) * ky / h, np.ones(w)) +
                np.outer(np.ones(h), np.arange(w) * kx / w)))
            out[ky, kx] = (z * phase).sum()
    return out / np.sqrt(h * w)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_roundtrip_identity(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(16, 16, 2))
    back = idft2(dft2(Tensor(x))).data
    assert np.abs(back - x).max() < 1e-10


def test_zeros_map_to_zeros():
    z = dft2(Tensor(np.zeros((8, 8, 2)))).data
    assert np.all(z == 0.0)


def test_unit_impulse_is_constant():
    imp = np.zeros((8, 8, 2))
    imp[0, 0, 0] = 1.0
    k = dft2(Tensor(imp)).data
    assert np.allclose(k[..., 0], 1.0 / 8.0, atol=1e-12)
    assert np.abs(k[..., 1]).max() < 1e-12


@pytest.mark.parametrize("seed", [3, 4])
def test_matches_direct_dft_oracle(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 8, 2))
    z = x[..., 0] + 1j * x[..., 1]
    expected = _direct_dft(z)
    got = dft2(Tensor(x)).data
    assert np.abs(got[..., 0] - expected.real).max() < 1e-10
    assert np.abs(got[..., 1] - expected.imag).max() < 1e-10


@pytest.mark.parametrize("seed", [5, 6, 7])
def test_parseval_energy(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 10, 2))
    k = dft2(Tensor(x)).data
    e_img = np.sum(x ** 2)
    e_k = np.sum(k ** 2)
    assert abs(e_img - e_k) / e_img < 1e-10


def test_batched_matches_single():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 8, 8, 2))
    batched = dft2(Tensor(x)).data
    for i in range(3):
        single = dft2(Tensor(x[i])).data
        assert np.array_equal(batched[i], single)


@pytest.mark.parametrize("op", [dft2, idft2])
def test_transform_gradients(op):
    rng = np.random.default_rng(9)
    params = {"x": rng.normal(size=(1, 4, 4, 2))}
    target = rng.normal(size=(1, 4, 4, 2))

    def objective(arrays):
        t = Tensor(arrays["x"], requires_grad=True)
        return l1_loss(op(t), target).item()

    t = Tensor(params["x"], requires_grad=True)
    grad = gradients(l1_loss(op(t), target), [t])[0]
    fd = finite_difference_grad(objective, params)
    assert relative_error(grad, fd["x"]) < 1e-6
