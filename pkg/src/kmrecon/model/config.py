"""Architecture configuration for the three networks."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class BaseNetConfig:
    """U-shaped reconstruction network.

    ``levels`` encoder stages plus a bottleneck and a mirrored decoder give
    2 * levels + 1 weighted convolution layers (7 at the default depth).
    The first encoder conv runs at full resolution; every later encoder
    conv and the bottleneck subsample by 2, and each decoder conv follows a
    nearest-neighbor upsample and a skip concatenation from the encoder
    stage at the same resolution.
    """

    levels: int = 3
    channels: tuple = (8, 16, 32)
    bottleneck_channels: int = 64
    kernel_size: int = 3
    io_channels: int = 2

    def __post_init__(self):
        if len(self.channels) != self.levels:
            raise ValueError(
                f"channels {self.channels} must list {self.levels} widths")

    @property
    def num_weighted_layers(self):
        return 2 * self.levels + 1


@dataclass(frozen=True)
class LayerSpec:
    """One weighted convolution layer of the base network."""

    name: str
    in_channels: int
    out_channels: int
    stride: int
    kind: str  # enc | bottleneck | dec
    activation: bool


def layer_table(cfg: BaseNetConfig):
    """Encoder-to-decoder ordering of the weighted layers."""
    ch = cfg.channels
    io = cfg.io_channels
    layers = []
    for i in range(cfg.levels):
        layers.append(LayerSpec(
            name=f"enc{i}",
            in_channels=io if i == 0 else ch[i - 1],
            out_channels=ch[i],
            stride=1 if i == 0 else 2,
            kind="enc",
            activation=True,
        ))
    layers.append(LayerSpec(
        name="bottleneck",
        in_channels=ch[-1],
        out_channels=cfg.bottleneck_channels,
        stride=2,
        kind="bottleneck",
        activation=True,
    ))
    prev = cfg.bottleneck_channels
    for j in range(cfg.levels - 1, -1, -1):
        out = ch[j] if j > 0 else io
        layers.append(LayerSpec(
            name=f"dec{j}",
            in_channels=prev + ch[j],
            out_channels=out,
            stride=1,
            kind="dec",
            activation=j > 0,
        ))
        prev = out
    return layers


@dataclass(frozen=True)
class HyperNetConfig:
    """Per-layer modulation hypernetwork: a linear perceptron mapping the
    context embedding to rank-``rank`` factor pairs."""

    embed_dim: int = 256
    bottleneck: int = 64
    rank: int = 1

    def output_size(self, n_out, n_in):
        return self.rank * (n_out + n_in)


@dataclass(frozen=True)
class ContextEncoderConfig:
    """Convolutional autoencoder whose spatially averaged latent is the
    context embedding.  ``channels`` are the two intermediate widths; the
    latent width equals the hypernetwork embedding size."""

    channels: tuple = (8, 16)
    kernel_size: int = 3


@dataclass(frozen=True)
class ModelConfig:
    base: BaseNetConfig = field(default_factory=BaseNetConfig)
    hyper: HyperNetConfig = field(default_factory=HyperNetConfig)
    ce: ContextEncoderConfig = field(default_factory=ContextEncoderConfig)
    aux_loss_weight: float = 0.1
    df_lambda: float = float("inf")
