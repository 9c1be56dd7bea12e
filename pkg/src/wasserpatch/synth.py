"""Boolean-model microstructures: unions of equal balls at Poisson centres."""

from __future__ import annotations

import itertools

import numpy as np
from scipy import ndimage
from scipy.special import gamma

from .errors import InvalidArgumentError

__all__ = ["boolean_model"]


def _ball_volume(radius, dims):
    return np.pi ** (dims / 2) / gamma(dims / 2 + 1) * radius**dims


def boolean_model(shape, radius, volume_fraction=0.3, seed=0, smooth=0.0, levels=(0.0, 1.0)):
    """Binary realisation of a Boolean model of disks (2D) or spheres (3D).

    Centres follow a homogeneous Poisson process on the window dilated by
    ``radius`` so that grains cut by the border are represented without
    edge bias.  The intensity is chosen so that the expected covered
    fraction equals ``volume_fraction``: ``1 - exp(-rho * |B_r|)``.

    ``smooth > 0`` applies a Gaussian blur of that standard deviation after
    thresholding; ``levels`` maps background/foreground to grey values.
    """
    shape = tuple(int(n) for n in shape)
    dims = len(shape)
    if dims not in (2, 3):
        raise InvalidArgumentError("shape must have 2 or 3 entries")
    if not radius > 0:
        raise InvalidArgumentError(f"radius must be > 0, got {radius}")
    if not 0 < volume_fraction < 1:
        raise InvalidArgumentError(f"volume_fraction must be in (0, 1), got {volume_fraction}")
    rng = np.random.default_rng(seed)
    rho = -np.log1p(-volume_fraction) / _ball_volume(radius, dims)
    lo = -radius
    hi = np.array(shape, dtype=float) + radius
    count = rng.poisson(rho * np.prod(hi - lo))
    centres = lo + rng.random((count, dims)) * (hi - lo)

    mask = np.zeros(shape, dtype=bool)
    r2 = radius * radius
    for c in centres:
        lo_idx = [max(int(np.floor(ci - radius)), 0) for ci in c]
        hi_idx = [min(int(np.ceil(ci + radius)) + 1, n) for ci, n in zip(c, shape)]
        if any(a >= b for a, b in zip(lo_idx, hi_idx)):
            continue
        axes = np.ogrid[tuple(slice(a, b) for a, b in zip(lo_idx, hi_idx))]
        d2 = sum((ax - ci) ** 2 for ax, ci in zip(axes, c))
        region = tuple(slice(a, b) for a, b in zip(lo_idx, hi_idx))
        mask[region] |= d2 <= r2

    img = np.where(mask, levels[1], levels[0]).astype(np.float64)
    if smooth > 0:
        img = ndimage.gaussian_filter(img, smooth, mode="reflect")
    return img
