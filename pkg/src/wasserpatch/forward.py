"""Superresolution forward models: blur + stride, noise, blind kernel fit."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import DivergenceError, IllPosedWarning, InvalidArgumentError, ShapeMismatchError
from .imaging import OperatorSpec, as_image, conv_output_shape, conv_valid, gaussian_kernel

__all__ = ["NoiseSpec", "KernelFit", "make_sr_operator", "add_noise", "estimate_kernel"]


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidArgumentError(f"noise sigma must be >= 0, got {self.sigma}")


def make_sr_operator(kernel_size=16, sigma=2.0, stride=4, dims=2):
    """Gaussian blur of the given size followed by a stride, without padding."""
    return OperatorSpec(gaussian_kernel(kernel_size, sigma, dims), stride)


def add_noise(y, spec):
    """Add i.i.d. ``N(0, sigma**2)`` noise drawn from ``spec.seed``."""
    y = np.asarray(y, dtype=np.float64)
    if spec.sigma == 0:
        return y.copy()
    rng = np.random.default_rng(spec.seed)
    return y + spec.sigma * rng.standard_normal(y.shape)


@dataclass
class KernelFit:
    operator: OperatorSpec
    residual: float
    relative_residual: float
    iterations: int
    history: list = field(default_factory=list, repr=False)
    ill_posed: bool = False


def _kernel_adjoint(x, r, kernel_shape, stride):
    # Gradient of k -> conv_valid(x, k) applied to r: correlate x with r zero-inserted.
    dense = np.zeros(tuple(n - k + 1 for n, k in zip(x.shape, kernel_shape)))
    dense[tuple(slice(None, None, s) for s in stride)] = r
    method = "direct" if dense.size * np.prod(kernel_shape) < 1e7 else "fft"
    return signal.correlate(x, dense, mode="valid", method=method)


def estimate_kernel(
    x_hi,
    y_lo,
    kernel_size=13,
    stride=3,
    iters=500,
    step=None,
    method="cg",
    tol=1e-10,
):
    """Least-squares fit of a convolution kernel to a registered HR/LR pair.

    Minimises ``||conv_valid(x_hi, k, stride) - y_lo||**2`` over ``k`` with
    first-order iterations that only use the forward map and its adjoint in
    ``k``.  ``method="cg"`` runs conjugate gradients on the least-squares
    problem (CGLS); ``method="gd"`` runs gradient descent from ``step`` and
    halves the step whenever the objective would increase.  No sign or sum
    constraint is placed on the kernel.

    Returns a :class:`KernelFit`; ``fit.operator`` is the estimated forward
    operator.  A :class:`IllPosedWarning` is emitted when ``x_hi`` is
    constant, since then only the kernel sum is identifiable.
    """
    x = as_image(x_hi, "x_hi")
    y = as_image(y_lo, "y_lo")
    if y.ndim != x.ndim:
        raise ShapeMismatchError("x_hi and y_lo dimensionality differ")
    kshape = (int(kernel_size),) * x.ndim if np.isscalar(kernel_size) else tuple(kernel_size)
    sshape = (int(stride),) * x.ndim if np.isscalar(stride) else tuple(stride)
    expected = conv_output_shape(x.shape, kshape, sshape)
    if expected != y.shape:
        raise ShapeMismatchError(
            f"kernel {kshape} with stride {sshape} maps {x.shape} to {expected}, "
            f"but y_lo has shape {y.shape}"
        )
    if method not in ("cg", "gd"):
        raise InvalidArgumentError(f"unknown method {method!r}")

    ill_posed = bool(np.ptp(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x)))))
    if ill_posed:
        warnings.warn(
            "x_hi is constant: only the kernel sum is determined by the data",
            IllPosedWarning,
            stacklevel=2,
        )

    def forward(k):
        return conv_valid(x, OperatorSpec(k, sshape))

    def adjoint(r):
        return _kernel_adjoint(x, r, kshape, sshape)

    y_norm = float(np.linalg.norm(y))
    k = np.zeros(kshape)
    r = y - forward(k)
    loss = 0.5 * float(np.sum(r * r))
    history = [loss]

    if method == "cg":
        g = adjoint(r)
        d = g.copy()
        gg = float(np.sum(g * g))
        it = 0
        for it in range(1, iters + 1):
            if gg == 0.0:
                break
            ad = forward(d)
            alpha = gg / float(np.sum(ad * ad))
            k = k + alpha * d
            r = r - alpha * ad
            loss = 0.5 * float(np.sum(r * r))
            if not np.isfinite(loss):
                raise DivergenceError("kernel fit diverged", trace=history)
            history.append(loss)
            g = adjoint(r)
            gg_new = float(np.sum(g * g))
            d = g + (gg_new / gg) * d
            gg = gg_new
            if np.sqrt(2 * loss) <= tol * y_norm:
                break
    else:
        if step is None:
            step = 1.0
        it = 0
        for it in range(1, iters + 1):
            g = adjoint(r)
            while True:
                k_new = k + step * g
                r_new = y - forward(k_new)
                loss_new = 0.5 * float(np.sum(r_new * r_new))
                if not np.isfinite(loss_new):
                    raise DivergenceError("kernel fit diverged; reduce the step", trace=history)
                if loss_new <= loss or step < 1e-300:
                    break
                step *= 0.5
            k, r, loss = k_new, r_new, loss_new
            history.append(loss)
            if np.sqrt(2 * loss) <= tol * y_norm:
                break

    residual = float(np.linalg.norm(r))
    return KernelFit(
        operator=OperatorSpec(k, sshape),
        residual=residual,
        relative_residual=residual / y_norm if y_norm > 0 else residual,
        iterations=it,
        history=history,
        ill_posed=ill_posed,
    )
