"""Infrared/visible image fusion toolkit: dual-encoder model with modality
attention, pixel-wise alpha blending, target-aware training loss, and an
evaluation suite (SSIM / MSE / entropy / ROI-SSIM)."""

from ._core import (
    AnnotationSet,
    BoundingBox,
    FusionNetParams,
    LossBreakdown,
    LossWeights,
    SynthSpec,
    TrainConfig,
    entropy,
    evaluate,
    forward,
    fuse_file,
    gen_pair,
    init_params,
    load_image,
    loss_total,
    mse,
    parse_annotations,
    resize_bilinear,
    rgb_to_luminance,
    roi_ssim,
    save_image,
    ssim,
    train,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "BoundingBox",
    "FusionNetParams",
    "LossBreakdown",
    "LossWeights",
    "SynthSpec",
    "TrainConfig",
    "entropy",
    "evaluate",
    "forward",
    "fuse_file",
    "gen_pair",
    "init_params",
    "load_image",
    "loss_total",
    "mse",
    "parse_annotations",
    "resize_bilinear",
    "rgb_to_luminance",
    "roi_ssim",
    "save_image",
    "ssim",
    "train",
    "write_dataset",
]
