"""Linear-operator toolbox on dense 2D/3D images.

Images are plain ``float64`` numpy arrays with two or three axes.  Every
linear map here comes with its exact adjoint so that gradients can be
assembled by hand:

* :func:`conv_valid` / :func:`conv_valid_adjoint` -- strided correlation
  without padding,
* :func:`extract_patches` / :func:`scatter_patches` -- all stride-1 patches,
* :func:`crop_center` / :func:`embed_center` -- boundary removal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

from .errors import InvalidArgumentError, ShapeMismatchError

__all__ = [
    "OperatorSpec",
    "PatchMatrix",
    "as_image",
    "gaussian_kernel",
    "conv_valid",
    "conv_valid_adjoint",
    "conv_output_shape",
    "extract_patches",
    "scatter_patches",
    "crop_center",
    "embed_center",
    "upsample",
    "subsample_rows",
]

# Above this many multiply-adds the direct offset loop is replaced by FFT.
_DIRECT_WORK_LIMIT = 5e7


def as_image(x, name="image"):
    """Return ``x`` as a finite float64 array with 2 or 3 axes."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ShapeMismatchError(f"{name} must be 2D or 3D, got {arr.ndim} axes")
    if min(arr.shape) < 1:
        raise ShapeMismatchError(f"{name} has an empty axis: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def _per_axis(value, ndim, name):
    if np.isscalar(value):
        out = (int(value),) * ndim
    else:
        out = tuple(int(v) for v in value)
        if len(out) != ndim:
            raise ShapeMismatchError(f"{name} needs {ndim} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class OperatorSpec:
    """A valid (unpadded) strided correlation ``x -> (k * x)[::s]``."""

    kernel: np.ndarray
    stride: tuple

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim not in (2, 3):
            raise ShapeMismatchError("kernel must be 2D or 3D")
        stride = _per_axis(self.stride, kernel.ndim, "stride")
        if min(stride) < 1:
            raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "stride", stride)

    @property
    def ndim(self):
        return self.kernel.ndim

    def output_shape(self, shape):
        return conv_output_shape(shape, self.kernel.shape, self.stride)

    def __call__(self, x):
        return conv_valid(x, self)

    def adjoint(self, r, out_shape):
        return conv_valid_adjoint(r, self, out_shape)


@dataclass(frozen=True)
class PatchMatrix:
    """Row-major matrix of flattened patches.

    With uniform weights the rows are the support of an empirical measure.
    """

    data: np.ndarray
    patch_shape: tuple
    source_shape: tuple

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __len__(self):
        return self.rows


def gaussian_kernel(size, sigma, dims=2):
    """Sampled isotropic Gaussian normalized to unit sum.

    The centre sits at ``(size - 1) / 2`` on every axis, so even sizes are
    centred between two samples and the kernel stays flip-symmetric.
    """
    if dims not in (2, 3):
        raise InvalidArgumentError(f"dims must be 2 or 3, got {dims}")
    size = _per_axis(size, dims, "size")
    if min(size) < 1:
        raise InvalidArgumentError(f"kernel size must be >= 1, got {size}")
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma}")
    grids = np.meshgrid(
        *[np.arange(n, dtype=np.float64) - (n - 1) / 2.0 for n in size], indexing="ij"
    )
    sq = sum(g * g for g in grids)
    kernel = np.exp(-sq / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def conv_output_shape(shape, kernel_shape, stride):
    shape = tuple(int(n) for n in shape)
    kernel_shape = tuple(kernel_shape)
    stride = _per_axis(stride, len(shape), "stride")
    if len(kernel_shape) != len(shape):
        raise ShapeMismatchError(
            f"kernel has {len(kernel_shape)} axes, operand has {len(shape)}"
        )
    if any(k > n for k, n in zip(kernel_shape, shape)):
        raise ShapeMismatchError(f"kernel {kernel_shape} larger than operand {shape}")
    return tuple((n - k) // s + 1 for n, k, s in zip(shape, kernel_shape, stride))


def _strided_window(offset, out_shape, stride):
    return tuple(slice(o, o + s * (m - 1) + 1, s) for o, m, s in zip(offset, out_shape, stride))


def conv_valid(x, op):
    """Apply ``op`` to ``x``: ``out[j] = sum_u k[u] * x[s*j + u]``."""
    x = as_image(x, "operand")
    out_shape = conv_output_shape(x.shape, op.kernel.shape, op.stride)
    k = op.kernel
    if k.size * np.prod(out_shape) <= _DIRECT_WORK_LIMIT:
        out = np.zeros(out_shape)
        for offset in itertools.product(*map(range, k.shape)):
            w = k[offset]
            if w != 0.0:
                out += w * x[_strided_window(offset, out_shape, op.stride)]
        return out
    full = signal.correlate(x, k, mode="valid", method="fft")
    return np.ascontiguousarray(full[tuple(slice(None, None, s) for s in op.stride)])


def conv_valid_adjoint(r, op, out_shape):
    """Exact adjoint of :func:`conv_valid` for inputs of shape ``out_shape``."""
    r = np.asarray(r, dtype=np.float64)
    out_shape = tuple(int(n) for n in out_shape)
    expected = conv_output_shape(out_shape, op.kernel.shape, op.stride)
    if r.shape != expected:
        raise ShapeMismatchError(
            f"residual shape {r.shape} does not match {expected} for operand {out_shape}"
        )
    k = op.kernel
    if k.size * r.size <= _DIRECT_WORK_LIMIT:
        out = np.zeros(out_shape)
        for offset in itertools.product(*map(range, k.shape)):
            w = k[offset]
            if w != 0.0:
                out[_strided_window(offset, r.shape, op.stride)] += w * r
        return out
    # Zero-insert r back onto the stride-1 grid, then full convolution.
    dense = np.zeros(tuple(n - m + 1 for n, m in zip(out_shape, k.shape)))
    dense[tuple(slice(None, None, s) for s in op.stride)] = r
    return signal.convolve(dense, k, mode="full", method="fft")


def extract_patches(x, p):
    """All stride-1 patches of side ``p`` in raster order (last axis fastest)."""
    x = as_image(x)
    patch_shape = _per_axis(p, x.ndim, "patch size")
    if min(patch_shape) < 1:
        raise InvalidArgumentError(f"patch size must be >= 1, got {p}")
    if any(q > n for q, n in zip(patch_shape, x.shape)):
        raise ShapeMismatchError(f"patch {patch_shape} larger than image {x.shape}")
    windows = sliding_window_view(x, patch_shape)
    data = windows.reshape(-1, int(np.prod(patch_shape)))
    return PatchMatrix(np.ascontiguousarray(data), patch_shape, x.shape)


def scatter_patches(q, target_shape=None, p=None):
    """Adjoint of :func:`extract_patches`: add each row back onto its window.

    ``q`` is a :class:`PatchMatrix` or a raw ``(N, p**d)`` array; in the
    latter case both ``target_shape`` and ``p`` are required.
    """
    if isinstance(q, PatchMatrix):
        data = q.data
        patch_shape = q.patch_shape
        target_shape = q.source_shape if target_shape is None else target_shape
    else:
        data = np.asarray(q, dtype=np.float64)
        if target_shape is None or p is None:
            raise ShapeMismatchError("raw patch arrays need target_shape and p")
        patch_shape = _per_axis(p, len(target_shape), "patch size")
    target_shape = tuple(int(n) for n in target_shape)
    if len(patch_shape) != len(target_shape):
        raise ShapeMismatchError("patch and target dimensionality differ")
    if any(pp > n for pp, n in zip(patch_shape, target_shape)):
        raise ShapeMismatchError(f"patch {patch_shape} larger than target {target_shape}")
    grid = tuple(n - pp + 1 for n, pp in zip(target_shape, patch_shape))
    if data.ndim != 2 or data.shape != (int(np.prod(grid)), int(np.prod(patch_shape))):
        raise ShapeMismatchError(
            f"patch matrix {data.shape} inconsistent with target {target_shape} "
            f"and patch {patch_shape}"
        )
    blocks = data.reshape(grid + patch_shape)
    out = np.zeros(target_shape)
    for offset in itertools.product(*map(range, patch_shape)):
        window = tuple(slice(o, o + g) for o, g in zip(offset, grid))
        out[window] += blocks[(Ellipsis,) + offset]
    return out


def _margins(margin, ndim):
    margin = _per_axis(margin, ndim, "margin")
    if min(margin) < 0:
        raise InvalidArgumentError(f"margin must be >= 0, got {margin}")
    return margin


def crop_center(x, margin):
    """Drop ``margin`` pixels from both ends of every axis."""
    x = np.asarray(x, dtype=np.float64)
    margin = _margins(margin, x.ndim)
    if any(2 * m >= n for m, n in zip(margin, x.shape)):
        raise ShapeMismatchError(f"margin {margin} too large for shape {x.shape}")
    return x[tuple(slice(m, n - m) for m, n in zip(margin, x.shape))].copy()


def embed_center(x, margin):
    """Zero-pad by ``margin`` on every side; adjoint of :func:`crop_center`."""
    x = np.asarray(x, dtype=np.float64)
    margin = _margins(margin, x.ndim)
    return np.pad(x, [(m, m) for m in margin])


def _cubic_weights(t, a=-0.5):
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    w[near] = ((a + 2) * t[near] - (a + 3)) * t[near] ** 2 + 1
    w[far] = ((a * t[far] - 5 * a) * t[far] + 8 * a) * t[far] - 4 * a
    return w


def _bicubic_matrix(n_in, factor):
    # Pixel-centre alignment: output u samples input coordinate (u + 0.5) / factor - 0.5.
    n_out = n_in * factor
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    base = np.floor(src).astype(int)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for tap in range(-1, 3):
        idx = base + tap
        w = _cubic_weights(src - idx)
        np.add.at(mat, (rows, np.clip(idx, 0, n_in - 1)), w)
    return mat


def upsample(x, factor, method="bicubic"):
    """Enlarge every axis by an integer ``factor``.

    ``bicubic`` is separable Catmull-Rom (a = -0.5) with clamped edges;
    ``nearest`` replicates each sample ``factor`` times.
    """
    x = as_image(x)
    if int(factor) != factor or factor < 1:
        raise InvalidArgumentError(f"factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if method == "nearest":
        out = x
        for axis in range(x.ndim):
            out = np.repeat(out, factor, axis=axis)
        return out
    if method != "bicubic":
        raise InvalidArgumentError(f"unknown interpolation method {method!r}")
    if factor == 1:
        return x.copy()
    out = x
    for axis in range(x.ndim):
        mat = _bicubic_matrix(out.shape[axis], factor)
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [axis])), 0, axis)
    return out


def subsample_rows(q, count, seed=0):
    """Uniform draw of ``count`` distinct rows (all rows when ``count >= N``)."""
    count = max(int(count), 1)
    if count >= q.rows:
        return q
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(q.rows, size=count, replace=False))
    return PatchMatrix(q.data[idx], q.patch_shape, q.source_shape)
