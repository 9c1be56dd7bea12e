import numpy as np
import pytest

from gradcheck import small_instance, stable
from wasserpatch.errors import DivergenceError, InvalidArgumentError, ShapeMismatchError
from wasserpatch.forward import make_sr_operator
from wasserpatch.imaging import conv_valid, crop_center, upsample
from wasserpatch.reconstruct import (
    LossTrace,
    ReconConfig,
    build_pyramid,
    data_gradient,
    hr_shape_for,
    init_reconstruction,
    objective,
    objective_gradient,
    prior_gradients,
    reconstruct,
)


def test_pyramid_shapes_600():
    pyr = build_pyramid(np.zeros((600, 600)), ReconConfig().a_spec, 3)
    assert pyr.shapes == [(600, 600), (299, 299), (148, 148)]


def test_pyramid_names_failing_level():
    with pytest.raises(ShapeMismatchError, match="level 3"):
        build_pyramid(np.zeros((9, 9)), ReconConfig().a_spec, 3, patch_size=4)


def test_for_dims_builds_3d_operator():
    cfg = ReconConfig().for_dims(3)
    assert cfg.a_spec.kernel.shape == (4, 4, 4)
    assert cfg.a_spec.stride == (2, 2, 2)
    assert ReconConfig().for_dims(2).a_spec.ndim == 2


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        ReconConfig(lam=-1)
    with pytest.raises(InvalidArgumentError):
        ReconConfig(optimizer="lbfgs")


def test_hr_shape_and_canvas():
    f = make_sr_operator(16, 2.0, 4)
    assert hr_shape_for((147, 147), f) == (600, 600)
    y = np.random.default_rng(0).random((147, 147))
    canvas = init_reconstruction(y, 4, 20, seed=1, hr_shape=(600, 600))
    assert canvas.shape == (640, 640)
    # The 588 bicubic image sits centred inside the 600 interior.
    np.testing.assert_array_equal(canvas[26:-26, 26:-26], upsample(y, 4))
    ring = canvas.copy()
    ring[20:-20, 20:-20] = np.nan
    ring = ring[~np.isnan(ring)]
    assert ring.min() >= 0 and ring.max() <= 1


def test_init_is_seeded():
    y = np.random.default_rng(0).random((10, 10))
    a = init_reconstruction(y, 2, 3, seed=4)
    np.testing.assert_array_equal(a, init_reconstruction(y, 2, 3, seed=4))
    assert not np.array_equal(a, init_reconstruction(y, 2, 3, seed=5))


def test_boundary_ring_does_not_change_data_term():
    x, y, f, refs, cfg, _ = small_instance(0, lam=0.0)
    z = x.copy()
    z[:2] += 1.0
    z[:, -2:] -= 3.0
    assert objective(x, y, f, refs, cfg, None)[1] == objective(z, y, f, refs, cfg, None)[1]
    g = data_gradient(x, y, f, cfg.boundary)
    assert np.all(g[:2] == 0) and np.all(g[:, -2:] == 0)


def test_objective_requires_duals_when_lam_positive():
    x, y, f, refs, cfg, _ = small_instance(1, lam=0.0)
    cfg2 = ReconConfig(lam=1.0, levels=2, patch_size=3, boundary=2)
    with pytest.raises(InvalidArgumentError):
        objective(x, y, f, refs, cfg2, None)


def test_gradient_assembly_is_sum_of_parts():
    x, y, f, refs, cfg, duals = small_instance(2, lam=3.0)
    full = objective_gradient(x, y, f, refs, cfg, duals)
    parts = data_gradient(x, y, f, cfg.boundary) + 3.0 * sum(prior_gradients(x, refs, cfg, duals))
    np.testing.assert_allclose(full, parts, atol=1e-14)


@pytest.mark.parametrize("seed", [3, 4, 5])
def test_objective_gradient_directional_fd(seed):
    x, y, f, refs, cfg, duals = small_instance(seed)
    rng = np.random.default_rng(100 + seed)
    h = 1e-6
    for _ in range(20):
        d = rng.standard_normal(x.shape)
        if stable(x, d, h, refs, cfg, duals):
            break
    else:
        pytest.skip("no stable direction found")
    g = objective_gradient(x, y, f, refs, cfg, duals)
    fd = (objective(x + h * d, y, f, refs, cfg, duals)[0] - objective(x - h * d, y, f, refs, cfg, duals)[0]) / (2 * h)
    assert abs(fd - np.sum(g * d)) <= 1e-4 * abs(fd)


def test_lambda_zero_is_least_squares():
    rng = np.random.default_rng(0)
    f = make_sr_operator(4, 1.0, 2)
    y = conv_valid(rng.random((48, 48)), f)
    cfg = ReconConfig(lam=0.0, levels=1, boundary=4, outer_iters=300, optimizer="gd")
    res = reconstruct(y, f, None, cfg)
    data = np.array(res.trace.data)
    assert np.all(np.diff(data) <= 0)
    assert data[-1] <= 1e-6 * data[0]
    assert res.image.shape == (48, 48)
    assert res.canvas.shape == (56, 56)


def _tiny_run(seed=0, optimizer="adam", iters=5):
    rng = np.random.default_rng(7)
    f = make_sr_operator(4, 1.0, 2)
    gt, ref = rng.random((30, 30)), rng.random((30, 30))
    y = conv_valid(gt, f)
    cfg = ReconConfig(lam=1.0, levels=2, patch_size=3, boundary=3, ref_patch_count=200,
                      outer_iters=iters, seed=seed, optimizer=optimizer, dual_iters_init=50)
    return reconstruct(y, f, ref, cfg)


def test_reconstruct_is_deterministic():
    a, b = _tiny_run(), _tiny_run()
    np.testing.assert_array_equal(a.image, b.image)
    assert a.trace.rows() == b.trace.rows()
    assert not np.array_equal(a.image, _tiny_run(seed=1).image)


def test_reconstruct_trace_layout():
    res = _tiny_run(optimizer="gd", iters=4)
    assert len(res.trace) == 4
    rows = res.trace.rows()
    assert len(rows[0]) == 1 + 1 + 2 + 1
    i, data, o1, o2, total = rows[0]
    assert total == pytest.approx(data + 1.0 * (o1 + o2))
    assert all(np.diff(res.trace.total) <= 1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_reconstruct_divergence_keeps_trace():
    f = make_sr_operator(4, 1.0, 2)
    y = conv_valid(np.random.default_rng(0).random((20, 20)), f)
    cfg = ReconConfig(lam=0.0, levels=1, boundary=2, outer_iters=50, lr=1e300)
    with pytest.raises(DivergenceError) as info:
        reconstruct(y, f, None, cfg)
    assert isinstance(info.value.trace, LossTrace)
    assert len(info.value.trace) >= 1


def test_reconstruct_rejects_bad_init_shape():
    f = make_sr_operator(4, 1.0, 2)
    y = np.zeros((9, 9))
    with pytest.raises(ShapeMismatchError):
        reconstruct(y, f, None, ReconConfig(lam=0, levels=1), x_init=np.zeros((5, 5)))


def test_prior_pulls_toward_reference_statistics():
    # With only the prior switched on, a few steps lower the OT terms.
    res = _tiny_run(iters=15)
    ot = np.array([sum(o) for o in res.trace.ot])
    assert ot[-5:].mean() < ot[:3].mean()
    assert crop_center(res.canvas, 3).shape == res.image.shape
