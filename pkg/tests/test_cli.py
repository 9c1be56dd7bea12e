import csv
import json

import numpy as np
import pytest

from wasserpatch import io as wio
from wasserpatch.cli import main
from wasserpatch.forward import make_sr_operator
from wasserpatch.imaging import conv_valid
from wasserpatch.synth import boolean_model


def run(*args):
    return main([str(a) for a in args])


def test_help_and_bad_args(capsys):
    assert run("--help") == 0
    assert run("reconstruct") == 2
    assert run("no-such-command") == 2


def test_degrade_2d_shape_and_exact_noiseless(tmp_path):
    x = np.random.default_rng(0).random((600, 600))
    np.save(tmp_path / "x.npy", x)
    assert run("degrade", "--input", tmp_path / "x.npy", "--out", tmp_path / "y.npy", "--noise-sigma", 0) == 0
    y = np.load(tmp_path / "y.npy")
    assert y.shape == (147, 147)
    np.testing.assert_array_equal(y, conv_valid(x, make_sr_operator()))
    manifest = json.loads((tmp_path / "y.manifest.json").read_text())
    assert manifest["lr_shape"] == [147, 147]


def test_degrade_3d_shape(tmp_path):
    wio.write_volume(tmp_path / "v.raw", np.zeros((176, 176, 176)))
    assert run("degrade", "--input", tmp_path / "v.raw", "--out", tmp_path / "lo.raw") == 0
    lo = wio.read_volume(tmp_path / "lo.raw")
    assert lo.shape == (41, 41, 41)
    # Volumes are degraded without noise unless asked.
    assert np.all(lo == 0)
    assert json.loads((tmp_path / "lo.manifest.json").read_text())["noise_sigma"] == 0.0


def test_degrade_2d_default_noise(tmp_path):
    np.save(tmp_path / "x.npy", np.zeros((60, 60)))
    assert run("degrade", "--input", tmp_path / "x.npy", "--out", tmp_path / "y.npy") == 0
    assert np.std(np.load(tmp_path / "y.npy")) == pytest.approx(0.02, rel=0.25)


def test_missing_input_is_io_error(tmp_path):
    assert run("degrade", "--input", tmp_path / "nope.npy", "--out", tmp_path / "y.npy") == 4


def test_estimate_kernel_writes_kernel_and_report(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.random((30, 30))
    k = rng.random((5, 5))
    from wasserpatch.imaging import OperatorSpec

    np.save(tmp_path / "hr.npy", x)
    np.save(tmp_path / "lr.npy", conv_valid(x, OperatorSpec(k, 2)))
    assert run("estimate-kernel", "--hr", tmp_path / "hr.npy", "--lr", tmp_path / "lr.npy",
               "--kernel-size", 5, "--stride", 2, "--out", tmp_path / "k.npy") == 0
    np.testing.assert_allclose(np.load(tmp_path / "k.npy"), k, rtol=1e-6, atol=1e-8)
    report = json.loads((tmp_path / "k.report.json").read_text())
    assert report["relative_residual"] < 1e-8


@pytest.fixture
def pair(tmp_path):
    gt = boolean_model((64, 64), 6, 0.4, seed=0, smooth=1.0)
    ref = boolean_model((64, 64), 6, 0.4, seed=1, smooth=1.0)
    f = make_sr_operator(8, 1.5, 4)
    np.save(tmp_path / "gt.npy", gt)
    np.save(tmp_path / "ref.npy", ref)
    np.save(tmp_path / "y.npy", conv_valid(gt, f))
    return tmp_path, ["--kernel-size", 8, "--kernel-sigma", 1.5, "--stride", 4]


def test_bicubic_writes_no_trace(pair):
    d, op = pair
    assert run("reconstruct", "--observation", d / "y.npy", "--method", "bicubic",
               "--out-dir", d / "bic", *op) == 0
    assert (d / "bic" / "reconstruction.png").exists()
    assert not (d / "bic" / "trace.csv").exists()
    assert wio.read_image(d / "bic" / "reconstruction.png").shape == (64, 64)


def test_tv_grid_records_best_weight(pair):
    d, op = pair
    assert run("reconstruct", "--observation", d / "y.npy", "--method", "tv", "--tv-lambdas", "0.001,0.01",
               "--tv-iters", 20, "--ground-truth", d / "gt.npy", "--out-dir", d / "tv", *op) == 0
    manifest = json.loads((d / "tv" / "manifest.json").read_text())
    assert manifest["best_lambda_tv"] in (0.001, 0.01)
    assert set(manifest["grid_psnr"]) == {"0.001", "0.01"}
    assert (d / "tv" / "trace.csv").read_text().startswith("iteration,data,ot_l1,total")


def test_grid_without_truth_is_config_error(pair):
    d, op = pair
    assert run("reconstruct", "--observation", d / "y.npy", "--reference", d / "ref.npy",
               "--lam", "1,2", "--out-dir", d / "w", *op) == 2
    assert run("reconstruct", "--observation", d / "y.npy", "--out-dir", d / "w", *op) == 2


def test_wpp_roundtrip_beats_bicubic_and_evaluate(pair):
    d, op = pair
    common = ["--observation", d / "y.npy", *op]
    assert run("reconstruct", *common, "--method", "bicubic", "--out-dir", d / "bic") == 0
    assert run("reconstruct", *common, "--reference", d / "ref.npy", "--lam", 1, "--boundary", 4,
               "--outer-iters", 60, "--ref-patch-count", 500, "--out-dir", d / "wpp") == 0
    rows = (d / "wpp" / "trace.csv").read_text().splitlines()
    assert rows[0] == "iteration,data,ot_l1,ot_l2,ot_l3,total"
    assert len(rows) == 61
    manifest = json.loads((d / "wpp" / "manifest.json").read_text())
    assert manifest["best_lam"] == 1.0 and manifest["recon_config"]["boundary"] == 4
    csv_path = d / "metrics.csv"
    for method in ("bic", "wpp"):
        assert run("evaluate", "--recon", d / method / "reconstruction.png", "--truth", d / "gt.npy",
                   "--method", method, "--eval-margin", 4, "--csv", csv_path) == 0
    rows = list(csv.DictReader(open(csv_path)))
    scores = {r["method"]: float(r["psnr"]) for r in rows}
    assert scores["wpp"] >= scores["bic"]
    assert float(rows[1]["wall_time"]) == pytest.approx(manifest["wall_time"])


def test_evaluate_identical_files(tmp_path):
    a = np.random.default_rng(2).random((20, 20))
    np.save(tmp_path / "a.npy", a)
    assert run("evaluate", "--recon", tmp_path / "a.npy", "--truth", tmp_path / "a.npy",
               "--csv", tmp_path / "m.csv", "--wall-time", 0) == 0
    row = list(csv.DictReader(open(tmp_path / "m.csv")))[0]
    assert row["psnr"] == "inf"
    assert float(row["ssim"]) == 1.0


def test_evaluate_shape_mismatch_exit_code(tmp_path):
    np.save(tmp_path / "a.npy", np.zeros((20, 20)))
    np.save(tmp_path / "b.npy", np.zeros((21, 20)))
    assert run("evaluate", "--recon", tmp_path / "a.npy", "--truth", tmp_path / "b.npy",
               "--csv", tmp_path / "m.csv") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_code_keeps_trace(pair):
    d, op = pair
    code = run("reconstruct", "--observation", d / "y.npy", "--reference", d / "ref.npy", "--lam", 1,
               "--lr", 1e300, "--outer-iters", 20, "--ref-patch-count", 100, "--out-dir", d / "div", *op)
    assert code == 3
    assert (d / "div" / "trace.csv").exists()


def test_config_file_supplies_and_yields_to_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"shape = 24x24\nradius = 3\nout = {tmp_path / 'from_cfg.npy'}\n")
    assert run("--config", cfg, "synth") == 0
    assert np.load(tmp_path / "from_cfg.npy").shape == (24, 24)
    assert run("--config", cfg, "synth", "--shape", "10,12") == 0
    assert np.load(tmp_path / "from_cfg.npy").shape == (10, 12)
    assert run("--config", tmp_path / "missing.cfg", "synth") == 2
    cfg.write_text("no-such-option = 1\n")
    assert run("--config", cfg, "synth", "--out", tmp_path / "z.npy") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_synth_3d_and_slice_export(tmp_path):
    assert run("synth", "--shape", "16,16,16", "--radius", 3, "--out", tmp_path / "v.raw") == 0
    assert run("slice-export", "--input", tmp_path / "v.raw", "--axis", 1, "--out", tmp_path / "s.png") == 0
    assert wio.read_png(tmp_path / "s.png").shape == (16, 16)
    assert run("slice-export", "--input", tmp_path / "v.raw", "--index", 99, "--out", tmp_path / "s.png") == 2
