import numpy as np
import pytest

from hierdrive import autodiff as ad
from hierdrive.autodiff import Tensor

from oracles import central_difference


def test_softmax_symmetry():
    out = ad.softmax(Tensor(np.zeros(3)))
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3])


def test_softmax_stability():
    out = ad.softmax(Tensor(np.array([1000.0, 0.0])))
    assert np.all(np.isfinite(out.data))
    assert out.data[0] > 0.999 and out.data[1] < 1e-6


def test_softmax_normalization_random():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.normal(scale=5.0, size=(5, 7))
        out = ad.softmax(Tensor(x), axis=1)
        assert np.all(np.abs(out.data.sum(axis=1) - 1.0) < 1e-6)
        assert np.all(out.data > 0) and np.all(out.data < 1)


def test_softmax_axis_out_of_range():
    with pytest.raises(ValueError):
        ad.softmax(Tensor(np.zeros((2, 3))), axis=2)


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    ad.tsum(x).backward()
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_backward_quadratic():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    ad.tsum(x * x).backward()
    assert np.allclose(x.grad, 2 * x.data)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        (x * 2.0).backward()


def test_gradients_accumulate_across_uses():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x + x
    ad.tsum(y * x).backward()  # d/dx (2x^2) = 4x
    assert np.allclose(x.grad, 4 * x.data)


def test_layer_norm_moments():
    rng = np.random.default_rng(0)
    x = rng.normal(loc=3.0, scale=2.5, size=(10, 32))
    y = ad.layer_norm(Tensor(x)).data
    assert np.all(np.abs(y.mean(axis=1)) < 1e-6)
    assert np.all(np.abs(y.var(axis=1) - 1.0) < 1e-4)


def _fd_check(build, shapes, seed, rtol=1e-3, h=1e-4):
    """Finite-difference check of a scalar-valued tensor function."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(*tensors).backward()
    for ti, (arr, tensor) in enumerate(zip(arrays, tensors)):
        def scalar(flat, ti=ti):
            vals = [a.copy() for a in arrays]
            vals[ti] = flat.reshape(arrays[ti].shape)
            return build(*[Tensor(v) for v in vals]).item()

        fd = central_difference(scalar, arr.ravel(), h).reshape(arr.shape)
        an = tensor.grad if tensor.grad is not None else np.zeros_like(arr)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(an)), 1e-6)
        assert np.all((np.abs(fd - an) / denom < rtol) | (np.abs(fd - an) < 1e-7))


@pytest.mark.parametrize(
    "name,build,shapes",
    [
        ("matmul", lambda a, b: ad.tsum(a @ b), [(3, 4), (4, 2)]),
        ("affine", lambda x, w, b: ad.tsum(ad.gelu(ad.affine(x, w, b))), [(3, 4), (4, 2), (2,)]),
        ("softmax", lambda x: ad.tsum(ad.softmax(x, 1) * ad.softmax(x, 1)), [(3, 5)]),
        ("layer_norm", lambda x: ad.tsum(ad.layer_norm(x) * ad.layer_norm(x)), [(4, 6)]),
        ("gelu", lambda x: ad.tsum(ad.gelu(x)), [(3, 4)]),
        ("sigmoid", lambda x: ad.tsum(ad.sigmoid(x)), [(7,)]),
        ("cumsum", lambda x: ad.tsum(ad.cumsum(x, 1) * ad.cumsum(x, 1)), [(2, 5)]),
        ("mean", lambda x: ad.tmean(x * x, axis=1).sum(), [(3, 4)]),
        ("concat", lambda a, b: ad.tsum(ad.concat([a, b]) * ad.concat([a, b])), [(2, 3), (4, 3)]),
        ("slice", lambda x: ad.tsum(x[1:3, :2] * x[1:3, :2]), [(4, 4)]),
        ("transpose", lambda x: ad.tsum(ad.transpose(x) @ x), [(3, 4)]),
        ("sqrt", lambda x: ad.tsum(ad.sqrt(x * x + 1.0)), [(5,)]),
        ("atan2", lambda y, x: ad.tsum(ad.atan2(y, x)), [(4,), (4,)]),
        ("smooth_l1", lambda p, t: ad.tmean(ad.smooth_l1(p, t)), [(6, 2), (6, 2)]),
        ("bce", lambda z: ad.bce_with_logits(z, np.array([0.0, 1.0, 1.0, 0.0])), [(4,)]),
        ("layer_norm_affine", lambda x, g, b: ad.tsum(ad.layer_norm_affine(x, g, b) * ad.layer_norm_affine(x, g, b)), [(3, 8), (8,), (8,)]),
    ],
)
def test_op_gradients_match_finite_differences(name, build, shapes):
    _fd_check(build, shapes, seed=hash(name) % 2**31)


def test_cross_entropy_gradient():
    labels = np.array([1, 0])

    def build(x):
        return ad.cross_entropy(x, labels)

    _fd_check(build, [(2, 4)], seed=11)


def test_sdpa_gradient():
    def build(q, k, v):
        return ad.tsum(ad.scaled_dot_attention(q, k, v, 0.5) * 1.5)

    _fd_check(build, [(2, 3, 4), (2, 5, 4), (2, 5, 4)], seed=12)


def test_maximum_and_abs_gradients():
    def build(a, b):
        return ad.tsum(ad.maximum(a, b) + ad.absolute(a - b) * 0.5)

    _fd_check(build, [(6,), (6,)], seed=13)


def test_take_gather_accumulates():
    x = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    idx = np.array([1, 1, 2])
    ad.tsum(x[idx]).backward()
    expected = np.zeros((4, 3))
    expected[1] = 2.0
    expected[2] = 1.0
    assert np.array_equal(x.grad, expected)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor(np.zeros(3)), 5)
