import math

import numpy as np
import pytest

from wasserpatch import io as wio
from wasserpatch.reconstruct import LossTrace


def test_png_roundtrip_16bit(tmp_path):
    img = np.random.default_rng(0).random((13, 17))
    wio.write_png(tmp_path / "a.png", img)
    back = wio.read_png(tmp_path / "a.png")
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-12


def test_png_reads_8bit(tmp_path):
    from PIL import Image

    Image.fromarray(np.array([[0, 255], [51, 102]], dtype=np.uint8)).save(tmp_path / "b.png")
    np.testing.assert_allclose(wio.read_png(tmp_path / "b.png"), [[0, 1], [0.2, 0.4]])


def test_png_rejects_volume(tmp_path):
    with pytest.raises(ValueError):
        wio.write_png(tmp_path / "c.png", np.zeros((2, 2, 2)))


@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_volume_roundtrip(tmp_path, dtype):
    vol = np.random.default_rng(1).random((4, 5, 6))
    wio.write_volume(tmp_path / "v.raw", vol, dtype=dtype, voxel_spacing=(1.0, 2.0, 3.0))
    back = wio.read_volume(tmp_path / "v.raw")
    tol = 1e-7 if dtype == "float32" else 0
    np.testing.assert_allclose(back, vol, atol=tol)
    meta = (tmp_path / "v.json").read_text()
    assert '"order": "C"' in meta and "3.0" in meta


def test_volume_size_mismatch(tmp_path):
    wio.write_volume(tmp_path / "v.raw", np.zeros((2, 2, 2)))
    (tmp_path / "v.raw").write_bytes(b"\0" * 12)
    with pytest.raises(ValueError):
        wio.read_volume(tmp_path / "v.raw")


def test_unknown_suffix(tmp_path):
    with pytest.raises(ValueError):
        wio.read_image(tmp_path / "x.tif")


def test_read_config(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nlam = 4  # inline\nouter-iters=10\n\n")
    assert wio.read_config(path) == {"lam": "4", "outer_iters": "10"}
    path.write_text("broken line\n")
    with pytest.raises(ValueError):
        wio.read_config(path)


def test_trace_csv_columns(tmp_path):
    trace = LossTrace()
    trace.append(3.0, 1.0, [1.5, 0.5])
    trace.append(2.0, 0.5, [1.0, 0.5])
    wio.write_trace_csv(tmp_path / "t.csv", trace)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,data,ot_l1,ot_l2,total"
    assert lines[1] == "0,1.0,1.5,0.5,3.0"


def test_metrics_csv_appends_and_formats_inf(tmp_path):
    path = tmp_path / "m.csv"
    row = dict(method="wpp", psnr=math.inf, ssim=1.0, eval_margin=4, seed=0, wall_time=1.5)
    wio.append_metrics_csv(path, row)
    wio.append_metrics_csv(path, row)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(wio.METRICS_COLUMNS)
    assert lines[1] == "wpp,inf,1.0,4,0,1.5"
    assert len(lines) == 3


def test_write_json_handles_numpy_and_inf(tmp_path):
    wio.write_json(tmp_path / "j.json", {"a": np.float64(1.5), "b": math.inf, "c": (1, 2)})
    text = (tmp_path / "j.json").read_text()
    assert '"a": 1.5' in text and '"b": "inf"' in text
