"""PSNR, SSIM and the centre-crop evaluation protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ShapeMismatchError
from .imaging import OperatorSpec, as_image, conv_valid, crop_center, gaussian_kernel

__all__ = ["SsimParams", "psnr", "ssim", "evaluate"]


@dataclass(frozen=True)
class SsimParams:
    window_extent: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    peak: float = 1.0

    def __post_init__(self):
        if min(self.window_extent, self.window_sigma, self.k1, self.k2, self.peak) <= 0:
            raise InvalidArgumentError("SSIM parameters must all be positive")


def _pair(a, b):
    a = as_image(a, "a")
    b = as_image(b, "b")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a, b = _pair(a, b)
    if not peak > 0:
        raise InvalidArgumentError(f"peak must be > 0, got {peak}")
    # Correctly rounded sum, so a constant error yields its exact square as MSE.
    mse = math.fsum(np.square(a - b).ravel()) / a.size
    if mse == 0.0:
        return float("inf")
    return float(20.0 * np.log10(peak / math.sqrt(mse)))


def ssim(a, b, params=None):
    """Mean structural similarity over a Gaussian sliding window.

    Local statistics use a full ``window_extent**d`` Gaussian window (also in
    3D) evaluated only where it fits inside the image.
    """
    params = params or SsimParams()
    a, b = _pair(a, b)
    if any(n < params.window_extent for n in a.shape):
        raise ShapeMismatchError(
            f"window {params.window_extent} larger than image {a.shape}"
        )
    window = OperatorSpec(gaussian_kernel(params.window_extent, params.window_sigma, a.ndim), 1)
    c1 = (params.k1 * params.peak) ** 2
    c2 = (params.k2 * params.peak) ** 2
    mu_a = conv_valid(a, window)
    mu_b = conv_valid(b, window)
    var_a = conv_valid(a * a, window) - mu_a * mu_a
    var_b = conv_valid(b * b, window) - mu_b * mu_b
    cov = conv_valid(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def evaluate(x_hat, x_true, eval_margin=0, ssim_params=None):
    """``(psnr, ssim)`` on the centre crops left after removing ``eval_margin``."""
    x_hat, x_true = _pair(x_hat, x_true)
    params = ssim_params or SsimParams()
    a = crop_center(x_hat, eval_margin)
    b = crop_center(x_true, eval_margin)
    return psnr(a, b, params.peak), ssim(a, b, params)
