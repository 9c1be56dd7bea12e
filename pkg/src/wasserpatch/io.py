"""File formats: grayscale PNG, raw volumes with JSON sidecars, CSV, configs.

2D images are 8- or 16-bit grayscale PNG files mapped to ``[0, 1]`` and
written back as 16-bit.  3D volumes are headerless little-endian C-order
voxel streams (``<name>.raw``) described by ``<name>.json``::

    {"shape": [z, y, x], "dtype": "float32", "order": "C",
     "voxel_spacing": [1.0, 1.0, 1.0]}
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "read_image",
    "write_image",
    "read_png",
    "write_png",
    "read_volume",
    "write_volume",
    "read_config",
    "write_json",
    "write_trace_csv",
    "append_metrics_csv",
    "METRICS_COLUMNS",
]

METRICS_COLUMNS = ("method", "psnr", "ssim", "eval_margin", "seed", "wall_time")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def read_png(path):
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16L", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / 65535.0
        if im.mode != "L":
            im = im.convert("L")
        return np.asarray(im, dtype=np.float64) / 255.0


def write_png(path, img):
    """Write ``img`` clipped to ``[0, 1]`` as a 16-bit grayscale PNG."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PNG output needs a 2D image, got shape {img.shape}")
    q = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(q).save(path, format="PNG")


def _sidecar(path):
    return Path(path).with_suffix(".json")


def write_volume(path, vol, dtype="float32", voxel_spacing=None):
    """Write a raw little-endian voxel stream plus its JSON sidecar."""
    path = Path(path)
    vol = np.asarray(vol, dtype=np.float64)
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    np.ascontiguousarray(vol, dtype=_DTYPES[dtype]).tofile(path)
    meta = {
        "shape": list(vol.shape),
        "dtype": dtype,
        "order": "C",
        "voxel_spacing": list(voxel_spacing) if voxel_spacing is not None else [1.0] * vol.ndim,
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2) + "\n")


def read_volume(path):
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    if meta.get("order", "C") != "C":
        raise ValueError("only C-order volumes are supported")
    data = np.fromfile(path, dtype=_DTYPES[meta.get("dtype", "float32")])
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: {data.size} voxels on disk, sidecar declares {shape}")
    return data.reshape(shape).astype(np.float64)


def read_image(path):
    """Load a PNG, raw volume or ``.npy`` array as float64."""
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        return read_png(path)
    if suffix == ".raw":
        return read_volume(path)
    if suffix == ".npy":
        return np.load(path).astype(np.float64)
    raise ValueError(f"unrecognised image format: {path}")


def write_image(path, img, dtype="float32"):
    """PNG for ``.png`` paths, raw volume for ``.raw``, numpy for ``.npy``."""
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        write_png(path, img)
    elif suffix == ".raw":
        write_volume(path, img, dtype=dtype)
    elif suffix == ".npy":
        np.save(path, np.asarray(img, dtype=np.float64))
    else:
        raise ValueError(f"unrecognised image format: {path}")


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return str(v)


def write_trace_csv(path, trace):
    """Loss trace as ``iteration,data,ot_l1..ot_lL,total``."""
    n_levels = len(trace.ot[0]) if len(trace) else 0
    header = ["iteration", "data"] + [f"ot_l{i + 1}" for i in range(n_levels)] + ["total"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in trace.rows():
            writer.writerow([_fmt(v) for v in row])


def append_metrics_csv(path, row):
    """Append one metrics row, writing the header when the file is new."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(METRICS_COLUMNS)
        writer.writerow([_fmt(row[c]) for c in METRICS_COLUMNS])
