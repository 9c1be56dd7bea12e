import numpy as np
import pytest

from wasserpatch.errors import InvalidArgumentError
from wasserpatch.optim import Adam, backtracking_step
from wasserpatch.synth import boolean_model


def test_boolean_model_is_binary_and_seeded():
    a = boolean_model((64, 64), 5, 0.3, seed=1)
    assert set(np.unique(a)) <= {0.0, 1.0}
    np.testing.assert_array_equal(a, boolean_model((64, 64), 5, 0.3, seed=1))
    assert not np.array_equal(a, boolean_model((64, 64), 5, 0.3, seed=2))


@pytest.mark.parametrize("shape,radius", [((256, 256), 6.0), ((48, 48, 48), 4.0)])
def test_boolean_model_volume_fraction(shape, radius):
    fractions = [boolean_model(shape, radius, 0.4, seed=s).mean() for s in range(4)]
    assert abs(np.mean(fractions) - 0.4) < 0.05


def test_boolean_model_smoothing_and_levels():
    img = boolean_model((40, 40), 4, 0.3, seed=0, smooth=1.0, levels=(0.2, 0.8))
    assert 0.2 - 1e-12 <= img.min() and img.max() <= 0.8 + 1e-12
    assert len(np.unique(img)) > 2


def test_boolean_model_rejects_bad_args():
    with pytest.raises(InvalidArgumentError):
        boolean_model((10,), 2)
    with pytest.raises(InvalidArgumentError):
        boolean_model((10, 10), 2, volume_fraction=1.0)


def test_adam_first_step_is_lr_times_sign():
    opt = Adam(lr=0.1)
    x = np.zeros(3)
    out = opt.step(x, np.array([2.0, -0.5, 1e-3]))
    np.testing.assert_allclose(out, [-0.1, 0.1, -0.1], rtol=1e-4)


def test_adam_minimises_quadratic():
    opt = Adam(lr=0.05)
    x = np.array([3.0, -2.0])
    for _ in range(2000):
        x = opt.step(x, 2 * x)
    np.testing.assert_allclose(x, 0.0, atol=1e-2)


def test_backtracking_never_increases():
    fun = lambda z: float(np.sum(z**4))
    x = np.array([1.0, -2.0])
    value = fun(x)
    grad = 4 * x**3
    x_new, v_new, step = backtracking_step(x, value, grad, fun, step=10.0)
    assert v_new <= value
    assert step < 10.0
    # A zero step limit returns the input unchanged.
    same, v_same, _ = backtracking_step(x, value, -grad, fun, step=1.0, min_step=0.5)
    np.testing.assert_array_equal(same, x)
    assert v_same == value
