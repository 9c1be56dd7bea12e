"""Superresolution with a multiscale Wasserstein patch prior.

The reconstruction ``z`` lives on a canvas enlarged by ``boundary`` pixels
per side.  The data term only sees the centre crop ``C z`` while the patch
prior sees the whole canvas, which lets the ring absorb mismatches between
the reference and the true patch statistics.  The minimised functional is

    0.5 * ||f(C z) - y||**2 + lam * sum_l OT_c(mu_{A^(l-1) z}, nu_l)

with ``OT_c`` the half squared Wasserstein-2 distance between patch
measures (see :mod:`wasserpatch.transport`) and ``nu_l`` a fixed random
subset of patches of the pyramid of the reference image.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, InvalidArgumentError, ShapeMismatchError
from .forward import make_sr_operator
from .imaging import (
    OperatorSpec,
    PatchMatrix,
    as_image,
    conv_output_shape,
    conv_valid,
    conv_valid_adjoint,
    crop_center,
    embed_center,
    extract_patches,
    scatter_patches,
    subsample_rows,
    upsample,
)
from .optim import Adam, backtracking_step
from .transport import DualPotential, c_transform_rows, solve_dual_asgd

__all__ = [
    "ReconConfig",
    "Pyramid",
    "LossTrace",
    "ReconResult",
    "build_pyramid",
    "reference_patches",
    "objective",
    "objective_gradient",
    "data_gradient",
    "prior_gradients",
    "solve_duals",
    "hr_shape_for",
    "init_reconstruction",
    "reconstruct",
]


def _default_pyramid_operator():
    return make_sr_operator(4, 1.0, 2, dims=2)


@dataclass
class ReconConfig:
    """Hyperparameters of :func:`reconstruct`.

    ``lam`` weights the sum of the per-level ``OT_c`` terms (half squared
    W2).  ``dual_iters`` ascent steps are run per level and outer
    iteration, ``dual_iters_init`` on the first one.  ``optimizer`` is
    ``"adam"`` (learning rate ``lr``) or ``"gd"`` (backtracking from
    ``gd_step``).  For 3D data pass a 3D ``a_spec``.
    """

    lam: float = 50.0
    levels: int = 3
    patch_size: int = 4
    boundary: int = 20
    a_spec: OperatorSpec = field(default_factory=_default_pyramid_operator)
    ref_patch_count: int = 4000
    outer_iters: int = 500
    optimizer: str = "adam"
    lr: float = 0.01
    gd_step: float = 1.0
    dual_iters: int = 10
    dual_iters_init: int = 200
    dual_batch: int = 256
    dual_step_scale: float | None = None
    warm_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidArgumentError(f"lam must be >= 0, got {self.lam}")
        if self.levels < 1:
            raise InvalidArgumentError(f"levels must be >= 1, got {self.levels}")
        if self.patch_size < 1:
            raise InvalidArgumentError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.boundary < 0:
            raise InvalidArgumentError(f"boundary must be >= 0, got {self.boundary}")
        if self.optimizer not in ("adam", "gd"):
            raise InvalidArgumentError(f"unknown optimizer {self.optimizer!r}")
        if self.outer_iters < 0:
            raise InvalidArgumentError("outer_iters must be >= 0")

    def for_dims(self, dims):
        """Copy whose pyramid operator has ``dims`` axes.

        A mismatched operator is rebuilt as a unit-sigma Gaussian with the
        same kernel size and stride.
        """
        if self.a_spec.ndim == dims:
            return self
        k = self.a_spec.kernel.shape[0]
        return replace(self, a_spec=make_sr_operator(k, 1.0, self.a_spec.stride[0], dims=dims))


@dataclass
class Pyramid:
    levels: list

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    @property
    def shapes(self):
        return [lvl.shape for lvl in self.levels]


@dataclass
class LossTrace:
    data: list = field(default_factory=list)
    ot: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def append(self, total, data, ot_terms):
        self.total.append(float(total))
        self.data.append(float(data))
        self.ot.append([float(v) for v in ot_terms])

    def __len__(self):
        return len(self.total)

    def rows(self):
        """``(iteration, data, ot_1, ..., ot_L, total)`` tuples."""
        return [(i, d, *o, t) for i, (d, o, t) in enumerate(zip(self.data, self.ot, self.total))]


@dataclass
class ReconResult:
    image: np.ndarray
    trace: LossTrace
    iterations: int
    wall_time: float
    canvas: np.ndarray = field(default=None, repr=False)
    duals: list = field(default=None, repr=False)


def build_pyramid(x, a_spec, levels, patch_size=None):
    """``[x, A x, A A x, ...]`` with ``levels`` entries.

    Raises :class:`ShapeMismatchError` naming the first level that cannot
    be downsampled further or is smaller than ``patch_size``.
    """
    x = as_image(x)
    if levels < 1:
        raise InvalidArgumentError(f"levels must be >= 1, got {levels}")
    out = [x]
    for lvl in range(1, levels):
        try:
            conv_output_shape(out[-1].shape, a_spec.kernel.shape, a_spec.stride)
        except ShapeMismatchError:
            raise ShapeMismatchError(
                f"pyramid level {lvl + 1}: level {lvl} of shape {out[-1].shape} is smaller "
                f"than the downsampling kernel {a_spec.kernel.shape}"
            ) from None
        out.append(conv_valid(out[-1], a_spec))
    if patch_size is not None:
        for lvl, img in enumerate(out, start=1):
            if min(img.shape) < patch_size:
                raise ShapeMismatchError(
                    f"pyramid level {lvl} of shape {img.shape} is smaller than patch size {patch_size}"
                )
    return Pyramid(out)


def reference_patches(x_ref, cfg):
    """Fixed random patch subsets of the reference pyramid, one per level."""
    pyr = build_pyramid(x_ref, cfg.a_spec, cfg.levels, cfg.patch_size)
    return [
        subsample_rows(extract_patches(img, cfg.patch_size), cfg.ref_patch_count, seed=(cfg.seed, lvl))
        for lvl, img in enumerate(pyr.levels)
    ]


def _ref_rows(refs):
    return refs.data if isinstance(refs, PatchMatrix) else np.asarray(refs, dtype=np.float64)


def _data_residual(x, y, f, boundary):
    return conv_valid(crop_center(x, boundary), f) - y


def data_gradient(x, y, f, boundary):
    """Gradient of ``0.5 * ||f(C x) - y||**2`` for linear ``f``."""
    inner = crop_center(x, boundary)
    r = conv_valid(inner, f) - y
    return embed_center(conv_valid_adjoint(r, f, inner.shape), boundary)


def _level_terms(x, ref_patches, cfg, duals, with_grad):
    pyr = build_pyramid(x, cfg.a_spec, cfg.levels, cfg.patch_size)
    values, grads = [], []
    for lvl, img in enumerate(pyr.levels):
        P = extract_patches(img, cfg.patch_size)
        refs = _ref_rows(ref_patches[lvl])
        psi = duals[lvl]
        ct, idx = c_transform_rows(psi, P, refs)
        vec = psi.vector if isinstance(psi, DualPotential) else np.asarray(psi)
        values.append(float(ct.mean() + vec.mean()))
        if with_grad:
            g = scatter_patches((P.data - refs[idx]) / P.rows, img.shape, P.patch_shape)
            for back in range(lvl, 0, -1):
                g = conv_valid_adjoint(g, cfg.a_spec, pyr.levels[back - 1].shape)
            grads.append(g)
    return pyr, values, grads


def prior_gradients(x, ref_patches, cfg, duals):
    """Per-level OT gradients pulled back to the canvas (unweighted)."""
    return _level_terms(x, ref_patches, cfg, duals, True)[2]


def objective(x, y, f, ref_patches, cfg, duals):
    """``(total, data_term, ot_terms)`` at frozen dual potentials."""
    x = as_image(x)
    r = _data_residual(x, y, f, cfg.boundary)
    data = 0.5 * float(np.sum(r * r))
    if duals is None:
        if cfg.lam != 0:
            raise InvalidArgumentError("dual potentials are required when lam > 0")
        ot_terms = [0.0] * cfg.levels
    else:
        ot_terms = _level_terms(x, ref_patches, cfg, duals, False)[1]
    return data + cfg.lam * sum(ot_terms), data, ot_terms


def objective_gradient(x, y, f, ref_patches, cfg, duals):
    """Gradient of :func:`objective` in ``x`` at frozen dual potentials."""
    x = as_image(x)
    grad = data_gradient(x, y, f, cfg.boundary)
    if cfg.lam != 0:
        for g in prior_gradients(x, ref_patches, cfg, duals):
            grad = grad + cfg.lam * g
    return grad


def _value_and_grad(x, y, f, ref_patches, cfg, duals):
    inner = crop_center(x, cfg.boundary)
    r = conv_valid(inner, f) - y
    data = 0.5 * float(np.sum(r * r))
    grad = embed_center(conv_valid_adjoint(r, f, inner.shape), cfg.boundary)
    _, ot_terms, grads = _level_terms(x, ref_patches, cfg, duals, True)
    for g in grads:
        grad = grad + cfg.lam * g
    return data + cfg.lam * sum(ot_terms), data, ot_terms, grad


def solve_duals(x, ref_patches, cfg, previous=None, iteration=0):
    """Run the dual ascent at every pyramid level of ``x``."""
    pyr = build_pyramid(x, cfg.a_spec, cfg.levels, cfg.patch_size)
    duals = []
    for lvl, img in enumerate(pyr.levels):
        init = previous[lvl] if (previous is not None and cfg.warm_start) else None
        iters = cfg.dual_iters if init is not None else cfg.dual_iters_init
        duals.append(
            solve_dual_asgd(
                extract_patches(img, cfg.patch_size),
                ref_patches[lvl],
                iters=iters,
                step_scale=cfg.dual_step_scale,
                batch=cfg.dual_batch,
                seed=(cfg.seed, iteration, lvl),
                init=init,
            )
        )
    return duals


def hr_shape_for(y_shape, f):
    """Smallest high-resolution shape that ``f`` maps onto ``y_shape``."""
    return tuple(k + s * (m - 1) for m, k, s in zip(y_shape, f.kernel.shape, f.stride))


def _place_center(src, shape):
    out_slices, src_slices = [], []
    for n_src, n_out in zip(src.shape, shape):
        if n_src <= n_out:
            off = (n_out - n_src) // 2
            out_slices.append(slice(off, off + n_src))
            src_slices.append(slice(None))
        else:
            off = (n_src - n_out) // 2
            out_slices.append(slice(None))
            src_slices.append(slice(off, off + n_out))
    return tuple(out_slices), tuple(src_slices)


def init_reconstruction(y, factor, boundary, seed=0, hr_shape=None):
    """Bicubic upsampling centred on a canvas of ``hr_shape + 2 * boundary``.

    Canvas pixels not covered by the upsampled image are i.i.d. uniform on
    ``[0, 1]``.  ``hr_shape`` defaults to the upsampled shape.
    """
    y = as_image(y, "observation")
    up = upsample(y, factor, "bicubic")
    hr_shape = up.shape if hr_shape is None else tuple(hr_shape)
    canvas_shape = tuple(n + 2 * boundary for n in hr_shape)
    rng = np.random.default_rng(seed)
    canvas = rng.uniform(0.0, 1.0, size=canvas_shape)
    dst, src = _place_center(up, canvas_shape)
    canvas[dst] = up[src]
    return canvas


def reconstruct(y, f, x_ref, cfg=None, x_init=None, hr_shape=None, factor=None, log_every=0):
    """Minimise the patch-prior functional by alternating dual ascent and descent.

    Each outer iteration re-solves the per-level potentials (warm started),
    records the objective, and takes one descent step on the canvas.  The
    returned image is the centre crop of the final canvas.
    """
    y = as_image(y, "observation")
    cfg = (cfg or ReconConfig()).for_dims(y.ndim)
    if f.ndim != y.ndim:
        raise ShapeMismatchError("forward operator and observation dimensionality differ")
    hr_shape = hr_shape_for(y.shape, f) if hr_shape is None else tuple(hr_shape)
    if conv_output_shape(hr_shape, f.kernel.shape, f.stride) != y.shape:
        raise ShapeMismatchError(f"f does not map {hr_shape} onto observation {y.shape}")
    canvas_shape = tuple(n + 2 * cfg.boundary for n in hr_shape)
    if x_init is None:
        x = init_reconstruction(y, factor or f.stride[0], cfg.boundary, seed=cfg.seed, hr_shape=hr_shape)
    else:
        x = as_image(x_init, "x_init").copy()
        if x.shape != canvas_shape:
            raise ShapeMismatchError(f"x_init has shape {x.shape}, expected {canvas_shape}")
    build_pyramid(x, cfg.a_spec, cfg.levels, cfg.patch_size)

    use_prior = cfg.lam > 0
    refs = reference_patches(x_ref, cfg) if use_prior else None
    trace = LossTrace()
    adam = Adam(cfg.lr)
    step = cfg.gd_step
    duals = None
    start = time.perf_counter()
    for it in range(cfg.outer_iters):
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite canvas at iteration {it}", trace=trace)
        if use_prior:
            try:
                duals = solve_duals(x, refs, cfg, previous=duals, iteration=it)
            except DivergenceError as exc:
                raise DivergenceError(f"iteration {it}: {exc}", trace=trace) from None
            total, data, ot_terms, grad = _value_and_grad(x, y, f, refs, cfg, duals)
        else:
            inner = crop_center(x, cfg.boundary)
            r = conv_valid(inner, f) - y
            data = 0.5 * float(np.sum(r * r))
            total, ot_terms = data, [0.0] * cfg.levels
            grad = embed_center(conv_valid_adjoint(r, f, inner.shape), cfg.boundary)
        trace.append(total, data, ot_terms)
        if not (np.isfinite(total) and np.all(np.isfinite(grad))):
            raise DivergenceError(f"non-finite objective at iteration {it}", trace=trace)
        if log_every and it % log_every == 0:
            print(f"iter {it:5d}  total {total:.6e}  data {data:.6e}  ot {ot_terms}")
        if cfg.optimizer == "adam":
            x = adam.step(x, grad)
        else:
            frozen = duals

            def fun(z):
                return objective(z, y, f, refs, cfg, frozen)[0]

            x, _, step = backtracking_step(x, total, grad, fun, step)
            step *= 2.0
    wall = time.perf_counter() - start
    return ReconResult(
        image=crop_center(x, cfg.boundary),
        trace=trace,
        iterations=len(trace),
        wall_time=wall,
        canvas=x,
        duals=duals,
    )
