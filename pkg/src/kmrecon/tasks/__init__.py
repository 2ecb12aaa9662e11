"""Multimodal reconstruction tasks: masks, phantoms, undersampling, splits."""

from .masks import (
    MaskParameterError,
    MaskSpec,
    SamplingMask,
    generate_cartesian_mask,
    generate_gaussian_mask,
)
from .phantoms import contrast_gamma, generate_phantom
from .rasters import (
    RasterFormatError,
    load_image,
    read_kmr1,
    write_kmr1,
    write_mask_kmr1,
)
from .sampling import (
    ComplexImage,
    KSpace,
    Task,
    TaskSample,
    build_task,
    collate,
    undersample,
)

__all__ = [
    "ComplexImage",
    "KSpace",
    "MaskParameterError",
    "MaskSpec",
    "RasterFormatError",
    "SamplingMask",
    "Task",
    "TaskSample",
    "build_task",
    "collate",
    "contrast_gamma",
    "generate_cartesian_mask",
    "generate_gaussian_mask",
    "generate_phantom",
    "load_image",
    "read_kmr1",
    "undersample",
    "write_kmr1",
    "write_mask_kmr1",
]
