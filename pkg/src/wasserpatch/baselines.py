"""Comparison reconstructions: interpolation and smoothed L2-TV."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvalidArgumentError, ShapeMismatchError
from .imaging import as_image, conv_output_shape, conv_valid, conv_valid_adjoint, upsample
from .optim import Adam, backtracking_step
from .reconstruct import LossTrace, ReconResult, _place_center

__all__ = [
    "TVConfig",
    "interp_baseline",
    "tv_energy",
    "tv_gradient",
    "tv_reconstruct",
]


@dataclass
class TVConfig:
    lambda_tv: float = 0.01
    epsilon: float = 1e-3
    iters: int = 300
    optimizer: str = "gd"
    lr: float = 0.01
    step: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be > 0, got {self.epsilon}")
        if self.lambda_tv < 0:
            raise InvalidArgumentError(f"lambda_tv must be >= 0, got {self.lambda_tv}")
        if self.optimizer not in ("adam", "gd"):
            raise InvalidArgumentError(f"unknown optimizer {self.optimizer!r}")


def interp_baseline(y, factor, method="bicubic", out_shape=None):
    """Interpolated upsampling of ``y``.

    With ``out_shape`` the result is centred on a canvas of that shape and
    the uncovered border is filled by edge replication, so it can be scored
    against a ground truth exactly like the other methods.
    """
    up = upsample(y, factor, method)
    if out_shape is None or tuple(out_shape) == up.shape:
        return up
    out_shape = tuple(out_shape)
    dst, src = _place_center(up, out_shape)
    cropped = up[src]
    pad = []
    for sl, n in zip(dst, out_shape):
        pad.append((sl.start or 0, n - (sl.stop if sl.stop is not None else n)))
    return np.pad(cropped, pad, mode="edge")


def _forward_diffs(x):
    # Neumann boundary: the difference past the last sample is zero.
    return [np.diff(x, axis=ax, append=np.take(x, [-1], axis=ax)) for ax in range(x.ndim)]


def _forward_diffs_adjoint(parts):
    out = np.zeros_like(parts[0])
    for ax, g in enumerate(parts):
        g = g.copy()
        idx = [slice(None)] * g.ndim
        idx[ax] = slice(-1, None)
        g[tuple(idx)] = 0.0
        # D^T g = -(g_i - g_{i-1}) with g_{-1} = 0.
        out -= np.diff(g, axis=ax, prepend=0.0)
    return out


def tv_energy(x, eps):
    """Smoothed isotropic TV ``sum sqrt(|grad x|**2 + eps**2)``."""
    sq = sum(d * d for d in _forward_diffs(x))
    return float(np.sum(np.sqrt(sq + eps * eps)))


def tv_gradient(x, eps):
    parts = _forward_diffs(x)
    norm = np.sqrt(sum(d * d for d in parts) + eps * eps)
    return _forward_diffs_adjoint([d / norm for d in parts])


def tv_reconstruct(y, f, cfg=None, init=None):
    """Minimise ``0.5 * ||f(x) - y||**2 + lambda_tv * TV_eps(x)``.

    ``init`` fixes the high-resolution shape; it is required because a
    strided operator does not determine it uniquely.
    """
    cfg = cfg or TVConfig()
    y = as_image(y, "observation")
    if init is None:
        raise InvalidArgumentError("tv_reconstruct needs an initial image")
    x = as_image(init, "init").copy()
    if conv_output_shape(x.shape, f.kernel.shape, f.stride) != y.shape:
        raise ShapeMismatchError(f"f does not map {x.shape} onto {y.shape}")

    def energy(z):
        r = conv_valid(z, f) - y
        data = 0.5 * float(np.sum(r * r))
        tv = tv_energy(z, cfg.epsilon) if cfg.lambda_tv else 0.0
        return data + cfg.lambda_tv * tv, data, tv

    trace = LossTrace()
    adam = Adam(cfg.lr)
    step = cfg.step
    start = time.perf_counter()
    for it in range(cfg.iters):
        total, data, tv = energy(x)
        trace.append(total, data, [tv])
        if not np.isfinite(total):
            raise DivergenceError(f"non-finite TV energy at iteration {it}", trace=trace)
        grad = conv_valid_adjoint(conv_valid(x, f) - y, f, x.shape)
        if cfg.lambda_tv:
            grad = grad + cfg.lambda_tv * tv_gradient(x, cfg.epsilon)
        if cfg.optimizer == "adam":
            x = adam.step(x, grad)
        else:
            x, _, step = backtracking_step(x, total, grad, lambda z: energy(z)[0], step)
            step *= 2.0
    return ReconResult(
        image=x,
        trace=trace,
        iterations=len(trace),
        wall_time=time.perf_counter() - start,
        canvas=x,
    )
