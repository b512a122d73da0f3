import numpy as np
import pytest

from hierdrive.autodiff import Tensor, tsum
from hierdrive.optim import AdamW, cosine_lr


def _param(values):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def test_zero_grads_zero_decay_leaves_params():
    p = _param([1.0, -2.0, 3.0])
    opt = AdamW({"p": p}, lr0=1e-2, lr_min=1e-4, total_steps=10, weight_decay=0.0)
    p.grad = np.zeros(3)
    opt.step(0)
    assert np.array_equal(p.data, [1.0, -2.0, 3.0])


def test_cosine_schedule_endpoints():
    assert cosine_lr(0, 4e-4, 4e-6, 100) == pytest.approx(4e-4)
    assert cosine_lr(100, 4e-4, 4e-6, 100) == pytest.approx(4e-6)
    assert cosine_lr(50, 4e-4, 4e-6, 100) == pytest.approx(0.5 * (4e-4 + 4e-6))
    # monotone decay
    lrs = [cosine_lr(s, 4e-4, 4e-6, 100) for s in range(101)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_descent_on_quadratic():
    w = _param([1.0])
    opt = AdamW({"w": w}, lr0=0.1, lr_min=0.1, total_steps=1, weight_decay=0.0)
    loss0 = float(w.data[0] ** 2)
    loss = tsum(w * w)
    loss.backward()
    opt.step(0)
    assert float(w.data[0] ** 2) < loss0


def test_non_finite_gradient_raises():
    w = _param([1.0])
    opt = AdamW({"w": w}, total_steps=1)
    w.grad = np.array([np.nan])
    with pytest.raises(ValueError, match="non-finite gradient"):
        opt.step(0)


def test_decoupled_weight_decay_shrinks_without_gradient_signal():
    w = _param([10.0])
    opt = AdamW({"w": w}, lr0=0.1, lr_min=0.1, total_steps=1, weight_decay=0.5)
    w.grad = np.zeros(1)
    opt.step(0)
    # pure decay: w <- w - lr*wd*w
    assert w.data[0] == pytest.approx(10.0 * (1 - 0.1 * 0.5))


def test_state_roundtrip():
    w = _param([1.0, 2.0])
    opt = AdamW({"w": w}, lr0=0.01, lr_min=0.001, total_steps=5)
    for _ in range(3):
        loss = tsum(w * w)
        loss.backward()
        opt.step()
    arrays = {k: v.copy() for k, v in opt.state_arrays().items()}
    opt2 = AdamW({"w": _param(w.data.copy())}, lr0=0.01, lr_min=0.001, total_steps=5)
    opt2.load_state_arrays(arrays)
    assert opt2.t == opt.t
    assert np.array_equal(opt2.m["w"], opt.m["w"])
    assert np.array_equal(opt2.v["w"], opt.v["w"])
