import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egoact.optim import StepDecaySGD


def test_step_decay_schedule():
    opt = StepDecaySGD(1.0, momentum=0.0, decay=0.1, decay_interval=3)
    p, g = {"w": np.zeros(1)}, {"w": np.ones(1)}
    lrs = [opt.step(p, g) for _ in range(7)]
    np.testing.assert_allclose(lrs, [1, 1, 1, 0.1, 0.1, 0.1, 0.01])


def test_momentum_matches_hand_recursion():
    opt = StepDecaySGD(0.5, momentum=0.9, decay_interval=100)
    p = {"w": np.array([1.0])}
    v, w = 0.0, 1.0
    for t in range(5):
        g = 2.0 * p["w"]  # d/dw of w^2
        opt.step(p, {"w": g})
        v = 0.9 * v - 0.5 * 2.0 * w
        w = w + v
        assert p["w"][0] == pytest.approx(w, abs=1e-15)


def test_zero_lr_is_noop():
    opt = StepDecaySGD(0.0)
    p = {"w": np.arange(3.0)}
    for _ in range(3):
        opt.step(p, {"w": np.ones(3)})
    np.testing.assert_array_equal(p["w"], np.arange(3.0))


def test_max_norm_clips_first_step():
    opt = StepDecaySGD(1.0, momentum=0.0, max_norm=1.0)
    p = {"a": np.zeros(2)}
    opt.step(p, {"a": np.array([3.0, 4.0])})
    np.testing.assert_allclose(p["a"], [-0.6, -0.8])


@pytest.mark.parametrize("kw", [{"momentum": 1.0}, {"decay": 0.0}, {"decay_interval": 0}, {"lr": -1.0}])
def test_bad_hyperparameters(kw):
    args = {"lr": 0.1, **kw}
    with pytest.raises(ValueError):
        StepDecaySGD(**args)


@settings(max_examples=30, deadline=None)
@given(steps=st.integers(0, 200), interval=st.integers(1, 50))
def test_current_lr_closed_form(steps, interval):
    opt = StepDecaySGD(0.3, decay=0.5, decay_interval=interval)
    opt.steps = steps
    assert opt.current_lr == 0.3 * 0.5 ** (steps // interval)
