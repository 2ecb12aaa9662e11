"""The U-shaped base reconstruction network."""

from __future__ import annotations

from ..numerics import (
    NonFiniteError,
    add,
    concat,
    conv2d,
    mul,
    narrow,
    relu,
    upsample_nearest,
)
from .config import layer_table


class LayerNumericError(FloatingPointError):
    """A base-network layer produced non-finite activations."""


def _crop_to(t, h, w):
    if t.shape[1] != h:
        t = narrow(t, 1, 0, h)
    if t.shape[2] != w:
        t = narrow(t, 2, 0, w)
    return t


def base_forward(x, theta, cfg, layer_scales=None, taps=None):
    """Encoder-decoder forward pass with skip connections and a global
    residual connection adding the input to the network output.

    ``x`` is channels-last (n, h, w, c).  ``theta`` maps "layer/w" and
    "layer/b" to (possibly modulated) tensors.  ``layer_scales`` optionally
    multiplies each layer's activation by a per-layer scalar.  ``taps``,
    when given, collects each layer's output activation array under the
    layer name.
    """
    specs = layer_table(cfg)
    skips = {}
    h = x
    try:
        for spec in specs:
            layer = spec.name
            if spec.kind == "dec":
                level = int(layer[3:])
                h = upsample_nearest(h, 2)
                skip = skips[f"enc{level}"]
                h = _crop_to(h, skip.shape[1], skip.shape[2])
                h = concat([h, skip], axis=3)
            h = conv2d(h, theta[f"{layer}/w"], theta[f"{layer}/b"],
                       stride=spec.stride)
            if spec.activation:
                h = relu(h)
            if layer_scales is not None and layer in layer_scales:
                h = mul(h, layer_scales[layer])
            if spec.kind == "enc":
                skips[layer] = h
            if taps is not None:
                taps[layer] = h.data
    except NonFiniteError as exc:
        raise LayerNumericError(f"layer {spec.name}: {exc}") from exc
    h = _crop_to(h, x.shape[1], x.shape[2])
    return add(x, h)
