"""k-space data fidelity: blend predicted and measured frequencies on the
sampled index set, hard replacement in the limit."""

from __future__ import annotations

import numpy as np

from ..numerics import Tensor, add, constant, dft2, idft2, mul


def data_fidelity(x_cnn, y, kept, lam=float("inf")):
    """Project the prediction onto the measurements.

    On sampled indices the k-space value becomes (pred + lam * measured) /
    (1 + lam); lam = inf means hard replacement by the measurement.
    Unsampled indices pass through.  ``y`` is measured k-space in 2-channel
    layout and ``kept`` the boolean sampling grid, both plain arrays or
    constant tensors shaped to broadcast against the prediction.
    """
    if not lam > 0:
        raise ValueError(f"data fidelity weight must be positive, got {lam}")
    k_pred = dft2(x_cnn)
    y_c = y if isinstance(y, Tensor) else constant(np.asarray(y), like=x_cnn)
    kept_arr = kept.data if isinstance(kept, Tensor) else np.asarray(kept)
    kept_arr = kept_arr.astype(x_cnn.dtype)
    if np.isinf(lam):
        coef_pred = 1.0 - kept_arr
        coef_meas = kept_arr
    else:
        coef_pred = (1.0 - kept_arr) + kept_arr / (1.0 + lam)
        coef_meas = kept_arr * (lam / (1.0 + lam))
    blended = add(mul(k_pred, constant(coef_pred, like=x_cnn)),
                  mul(y_c, constant(coef_meas, like=x_cnn)))
    return idft2(blended)
