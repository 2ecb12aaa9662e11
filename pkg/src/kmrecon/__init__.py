"""kmrecon: kernel-modulated multimodal meta-learning for undersampled
image reconstruction."""

__version__ = "0.1.0"
