import numpy as np
import pytest

from eventqa.autograd import GradientError, Tensor
from eventqa.optim import Adam, OptimizerConfig, linear_warmup_decay


def _cfg(**kw):
    base = dict(lr=0.1, weight_decay=0.0, warmup=0.0, max_grad_norm=None)
    base.update(kw)
    return OptimizerConfig(**base)


def test_first_step_hand_value():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam({"p": p}, _cfg())
    p.grad = np.array([1.0])
    opt.step()
    # m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps)
    assert p.data[0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-6), abs=1e-15)
    assert p.data[0] == pytest.approx(0.9, abs=1e-6)


def test_zero_gradient_leaves_parameters():
    p = Tensor(np.array([0.5, -2.0]), requires_grad=True)
    opt = Adam({"p": p}, _cfg())
    for _ in range(3):
        p.grad = np.zeros(2)
        opt.step()
    np.testing.assert_array_equal(p.data, [0.5, -2.0])


def test_step_before_backward_raises():
    p = Tensor(np.array([1.0]), requires_grad=True)
    with pytest.raises(GradientError):
        Adam({"p": p}, _cfg()).step()


def test_step_counter_and_moment_shapes():
    p = Tensor(np.ones((2, 3)), requires_grad=True)
    opt = Adam({"p": p}, _cfg())
    for k in range(1, 4):
        p.grad = np.ones((2, 3))
        opt.step()
        assert opt.state.step == k
    assert opt.state.m["p"].shape == opt.state.v["p"].shape == (2, 3)


def test_decay_skips_excluded_names():
    w = Tensor(np.array([1.0]), requires_grad=True)
    b = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam({"w": w, "b": b}, _cfg(weight_decay=0.5), no_decay={"b"})
    w.grad = np.zeros(1)
    b.grad = np.zeros(1)
    opt.step()
    assert w.data[0] == pytest.approx(1.0 - 0.1 * 0.5)
    assert b.data[0] == 1.0


def test_schedule_shape():
    total = 100
    mults = [linear_warmup_decay(s, total, 0.1) for s in range(1, total + 1)]
    assert mults[0] == pytest.approx(0.1)
    assert max(mults) == pytest.approx(1.0)
    assert int(np.argmax(mults)) == 9
    assert mults[-1] == pytest.approx(0.0)
    assert all(a <= b for a, b in zip(mults[:10], mults[1:10]))
    assert all(a >= b for a, b in zip(mults[10:], mults[11:]))


def test_identical_runs_bitwise_equal():
    def run():
        rng = np.random.default_rng(5)
        p = Tensor(rng.standard_normal(4), requires_grad=True)
        opt = Adam({"p": p}, OptimizerConfig(lr=0.01), total_steps=20)
        for _ in range(20):
            p.grad = np.sin(p.data) + rng.standard_normal(4) * 0.1
            opt.step()
        return p.data.tobytes()

    assert run() == run()
