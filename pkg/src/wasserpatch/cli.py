"""Command-line front end.

Subcommands: ``synth``, ``degrade``, ``estimate-kernel``, ``reconstruct``,
``evaluate`` and ``slice-export``.  Every option can also be given in a
flat ``key = value`` file passed with ``--config``; explicit flags win.

Exit codes: 0 ok, 2 configuration error, 3 numeric divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import io as wio
from .baselines import TVConfig, interp_baseline, tv_reconstruct
from .errors import (
    CapacityExceededError,
    DivergenceError,
    IllPosedWarning,
    InvalidArgumentError,
    ShapeMismatchError,
)
from .forward import NoiseSpec, add_noise, estimate_kernel, make_sr_operator
from .imaging import OperatorSpec, conv_valid
from .metrics import evaluate
from .reconstruct import ReconConfig, hr_shape_for, reconstruct
from .synth import boolean_model

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4

PRESETS = {
    "material2d": dict(lam=50.0, levels=3, boundary=20, outer_iters=500, eval_margin=40),
    "material3d": dict(lam=50.0, levels=3, boundary=20, outer_iters=200, eval_margin=10),
    "fibsem": dict(lam=5000.0, levels=3, boundary=20, outer_iters=200, eval_margin=10),
}


class ConfigError(Exception):
    pass


def _ints(text):
    return tuple(int(v) for v in str(text).replace("x", ",").split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_operator_args(p):
    p.add_argument("--kernel-size", type=int, default=16)
    p.add_argument("--kernel-sigma", type=float, default=2.0)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--kernel", type=Path, default=None,
                   help="estimated kernel volume (.raw/.npy); overrides the Gaussian")


def _build_parser():
    parser = argparse.ArgumentParser(prog="wasserpatch", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, default=None, help="key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Boolean-model texture or volume")
    p.add_argument("--shape", type=_ints, default=(128, 128))
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument("--volume-fraction", type=float, default=0.4)
    p.add_argument("--smooth", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("degrade", help="apply f and add noise")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_operator_args(p)
    p.add_argument("--noise-sigma", type=float, default=None,
                   help="defaults to 0.02 for 2D images and 0 for volumes")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("estimate-kernel", help="fit f from a registered HR/LR pair")
    p.add_argument("--hr", type=Path, required=True)
    p.add_argument("--lr", type=Path, required=True)
    p.add_argument("--kernel-size", type=int, default=13)
    p.add_argument("--stride", type=int, default=3)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--fit-method", choices=("cg", "gd"), default="cg")
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("reconstruct", help="superresolve an observation")
    p.add_argument("--observation", type=Path, required=True)
    p.add_argument("--reference", type=Path, default=None)
    p.add_argument("--ground-truth", type=Path, default=None,
                   help="only used to pick the best weight when a grid is given")
    p.add_argument("--method", choices=("wpp", "tv", "bicubic", "nearest"), default="wpp")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    _add_operator_args(p)
    p.add_argument("--hr-shape", type=_ints, default=None)
    p.add_argument("--lam", type=_floats, default=None, help="weight or comma-separated grid")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--patch-size", type=int, default=None)
    p.add_argument("--boundary", type=int, default=None)
    p.add_argument("--ref-patch-count", type=int, default=None)
    p.add_argument("--outer-iters", type=int, default=None)
    p.add_argument("--optimizer", choices=("adam", "gd"), default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--dual-iters", type=int, default=None)
    p.add_argument("--dual-iters-init", type=int, default=None)
    p.add_argument("--dual-batch", type=int, default=None)
    p.add_argument("--warm-start", type=_bool, default=None)
    p.add_argument("--tv-lambdas", type=_floats, default=(0.001, 0.002, 0.004))
    p.add_argument("--tv-epsilon", type=float, default=1e-3)
    p.add_argument("--tv-iters", type=int, default=1000)
    p.add_argument("--eval-margin", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="append PSNR/SSIM to a metrics CSV")
    p.add_argument("--recon", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--method", default="unknown")
    p.add_argument("--eval-margin", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wall-time", type=float, default=None,
                   help="defaults to the wall_time recorded in the recon manifest")
    p.add_argument("--csv", type=Path, required=True)

    p = sub.add_parser("slice-export", help="render one slice of a volume to PNG")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--axis", type=int, default=0)
    p.add_argument("--index", type=int, default=None, help="defaults to the middle slice")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when present.

    File entries are spliced in as flags right after the subcommand name,
    so anything given explicitly on the command line comes later and wins.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return parser.parse_args(argv)
    try:
        values = wio.read_config(known.config)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {known.config}: {exc}") from None
    pos = next((i for i, tok in enumerate(argv) if tok in COMMANDS), None)
    if pos is None:
        return parser.parse_args(argv)
    tokens = []
    for key, value in values.items():
        tokens += [f"--{key.replace('_', '-')}", value]
    return parser.parse_args(argv[: pos + 1] + tokens + argv[pos + 1 :])


def _effective(args):
    return {k: v for k, v in vars(args).items() if k not in ("config",)}


def _image_suffix(arr):
    return ".png" if arr.ndim == 2 else ".raw"


def _load_operator(args, dims):
    if getattr(args, "kernel", None) is not None:
        kernel = wio.read_image(args.kernel)
        if kernel.ndim != dims:
            raise ConfigError(f"kernel has {kernel.ndim} axes, data has {dims}")
        return OperatorSpec(kernel, args.stride), {"kernel_file": str(args.kernel), "stride": args.stride}
    op = make_sr_operator(args.kernel_size, args.kernel_sigma, args.stride, dims=dims)
    return op, {"kernel_size": args.kernel_size, "kernel_sigma": args.kernel_sigma, "stride": args.stride}


def cmd_synth(args):
    if len(args.shape) not in (2, 3):
        raise ConfigError("--shape needs 2 or 3 extents")
    img = boolean_model(args.shape, args.radius, args.volume_fraction, seed=args.seed, smooth=args.smooth)
    wio.write_image(args.out, img)
    wio.write_json(args.out.with_suffix(".manifest.json"), _effective(args))
    return EXIT_OK


def cmd_degrade(args):
    x = wio.read_image(args.input)
    f, op_meta = _load_operator(args, x.ndim)
    clean = conv_valid(x, f)
    if args.noise_sigma is None:
        args.noise_sigma = 0.02 if x.ndim == 2 else 0.0
    y = add_noise(clean, NoiseSpec(args.noise_sigma, args.seed))
    out = args.out
    wio.write_image(out, y, dtype="float64")
    wio.write_json(
        out.with_suffix(".manifest.json"),
        {**_effective(args), "operator": op_meta, "hr_shape": list(x.shape), "lr_shape": list(y.shape)},
    )
    print(f"{args.input} {x.shape} -> {out} {y.shape}")
    return EXIT_OK


def cmd_estimate_kernel(args):
    x = wio.read_image(args.hr)
    y = wio.read_image(args.lr)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IllPosedWarning)
        fit = estimate_kernel(x, y, args.kernel_size, args.stride, iters=args.iters,
                              step=args.step, method=args.fit_method)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    wio.write_image(args.out, fit.operator.kernel, dtype="float64")
    report = {
        **_effective(args),
        "residual": fit.residual,
        "relative_residual": fit.relative_residual,
        "iterations": fit.iterations,
        "ill_posed": fit.ill_posed,
    }
    wio.write_json(args.out.with_suffix(".report.json"), report)
    print(f"kernel {fit.operator.kernel.shape}: relative residual {fit.relative_residual:.3e}")
    return EXIT_OK


def _recon_config(args, dims):
    preset = dict(PRESETS.get(args.preset, {})) if args.preset else {}
    if dims == 3 and args.preset is None:
        preset.setdefault("outer_iters", 200)
    fields = {}
    for name in ("levels", "patch_size", "boundary", "ref_patch_count", "outer_iters", "optimizer",
                 "lr", "dual_iters", "dual_iters_init", "dual_batch", "warm_start"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
        elif name in preset:
            fields[name] = preset[name]
    fields["seed"] = args.seed
    lams = args.lam if args.lam is not None else (preset.get("lam", ReconConfig.lam),)
    cfg = ReconConfig(lam=lams[0], **fields).for_dims(dims)
    return cfg, lams, preset.get("eval_margin", 0)


def cmd_reconstruct(args):
    y = wio.read_image(args.observation)
    dims = y.ndim
    f, op_meta = _load_operator(args, dims)
    hr_shape = tuple(args.hr_shape) if args.hr_shape else hr_shape_for(y.shape, f)
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = _image_suffix(y)
    manifest = {**_effective(args), "operator": op_meta, "hr_shape": list(hr_shape)}
    truth = wio.read_image(args.ground_truth) if args.ground_truth else None
    cfg, lams, preset_margin = _recon_config(args, dims)
    eval_margin = args.eval_margin if args.eval_margin is not None else preset_margin

    def score(img):
        return evaluate(img, truth, eval_margin)[0]

    start = time.perf_counter()
    trace = None
    if args.method in ("bicubic", "nearest"):
        image = interp_baseline(y, args.stride, args.method, hr_shape)
    elif args.method == "tv":
        init = interp_baseline(y, args.stride, "bicubic", hr_shape)
        grid = list(args.tv_lambdas)
        if len(grid) > 1 and truth is None:
            raise ConfigError("a TV weight grid needs --ground-truth to select the best weight")
        results = {}
        for lam in grid:
            tv_cfg = TVConfig(lambda_tv=lam, epsilon=args.tv_epsilon, iters=args.tv_iters)
            results[lam] = tv_reconstruct(y, f, tv_cfg, init=init)
        if len(grid) > 1:
            scores = {lam: score(res.image) for lam, res in results.items()}
            best = max(scores, key=scores.get)
            manifest["grid_psnr"] = {str(k): v for k, v in scores.items()}
        else:
            best = grid[0]
        manifest["best_lambda_tv"] = best
        image, trace = results[best].image, results[best].trace
    else:
        if args.reference is None:
            raise ConfigError("method wpp needs --reference")
        ref = wio.read_image(args.reference)
        if len(lams) > 1 and truth is None:
            raise ConfigError("a lam grid needs --ground-truth to select the best weight")
        manifest["recon_config"] = {k: v for k, v in asdict(cfg).items() if k != "a_spec"}
        manifest["recon_config"]["a_spec"] = {
            "kernel_shape": list(cfg.a_spec.kernel.shape), "stride": list(cfg.a_spec.stride)
        }
        results = {}
        for lam in lams:
            run_cfg = replace(cfg, lam=lam)
            try:
                results[lam] = reconstruct(y, f, ref, run_cfg, hr_shape=hr_shape)
            except DivergenceError as exc:
                if exc.trace is not None:
                    wio.write_trace_csv(out_dir / "trace.csv", exc.trace)
                raise
        if len(lams) > 1:
            scores = {lam: score(res.image) for lam, res in results.items()}
            best = max(scores, key=scores.get)
            manifest["grid_psnr"] = {str(k): v for k, v in scores.items()}
        else:
            best = lams[0]
        manifest["best_lam"] = best
        image, trace = results[best].image, results[best].trace

    wall = time.perf_counter() - start
    manifest["wall_time"] = wall
    image_path = out_dir / f"reconstruction{suffix}"
    wio.write_image(image_path, image, dtype="float64")
    if trace is not None:
        wio.write_trace_csv(out_dir / "trace.csv", trace)
    wio.write_json(out_dir / "manifest.json", manifest)
    print(f"wrote {image_path} {image.shape}")
    return EXIT_OK


def cmd_evaluate(args):
    recon = wio.read_image(args.recon)
    truth = wio.read_image(args.truth)
    if recon.shape != truth.shape:
        raise ShapeMismatchError(f"reconstruction {recon.shape} vs truth {truth.shape}")
    wall = args.wall_time
    if wall is None:
        manifest = args.recon.parent / "manifest.json"
        wall = float(json.loads(manifest.read_text()).get("wall_time", 0.0)) if manifest.exists() else 0.0
    p, s = evaluate(recon, truth, args.eval_margin)
    row = dict(method=args.method, psnr=p, ssim=s, eval_margin=args.eval_margin, seed=args.seed, wall_time=wall)
    wio.append_metrics_csv(args.csv, row)
    print(f"{args.method}: psnr {p:.4f} dB  ssim {s:.4f}")
    return EXIT_OK


def cmd_slice_export(args):
    vol = wio.read_image(args.input)
    if vol.ndim != 3:
        raise ConfigError("slice-export needs a 3D volume")
    if not 0 <= args.axis < 3:
        raise ConfigError("--axis must be 0, 1 or 2")
    index = vol.shape[args.axis] // 2 if args.index is None else args.index
    if not 0 <= index < vol.shape[args.axis]:
        raise ConfigError(f"slice index {index} outside 0..{vol.shape[args.axis] - 1}")
    wio.write_png(args.out, np.take(vol, index, axis=args.axis))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "degrade": cmd_degrade,
    "estimate-kernel": cmd_estimate_kernel,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "slice-export": cmd_slice_export,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = _apply_config(parser, argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    except (ConfigError, ShapeMismatchError, InvalidArgumentError, CapacityExceededError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OSError, ValueError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
