"""Context encoder, kernel-modulation hypernetworks, and base network."""

from .base_net import LayerNumericError, base_forward
from .config import (
    BaseNetConfig,
    ContextEncoderConfig,
    HyperNetConfig,
    LayerSpec,
    ModelConfig,
    layer_table,
)
from .context_encoder import context_embed, context_embed_batch
from .data_fidelity import data_fidelity
from .hypernet import (
    LayerModulation,
    apply_modulation,
    hypernet_forward,
    layer_modulations,
    modulate,
    modulation_weight,
)
from .params import ParameterSet, STRATEGIES, init_params
from .pipeline import (
    PipelineOutput,
    km_pipeline,
    modulated_theta,
    plain_pipeline,
    reconstruct,
    scale_pipeline,
)

__all__ = [
    "BaseNetConfig",
    "ContextEncoderConfig",
    "HyperNetConfig",
    "LayerModulation",
    "LayerNumericError",
    "LayerSpec",
    "ModelConfig",
    "ParameterSet",
    "PipelineOutput",
    "STRATEGIES",
    "apply_modulation",
    "base_forward",
    "context_embed",
    "context_embed_batch",
    "data_fidelity",
    "hypernet_forward",
    "init_params",
    "km_pipeline",
    "layer_modulations",
    "layer_table",
    "modulate",
    "modulated_theta",
    "modulation_weight",
    "plain_pipeline",
    "reconstruct",
    "scale_pipeline",
]
