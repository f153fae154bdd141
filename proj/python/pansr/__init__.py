"""Pixel-attention super-resolution: model zoo, cost accounting and metrics."""

from pansr._core import (
    Model,
    bicubic_resize,
    cosine_lr,
    psnr,
    resize_bilinear,
    rgb_to_y,
    ssim,
)

__all__ = [
    "Model",
    "bicubic_resize",
    "cosine_lr",
    "psnr",
    "resize_bilinear",
    "rgb_to_y",
    "ssim",
]
