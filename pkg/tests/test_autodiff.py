import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechscore import autodiff as ad
from speechscore.autodiff import (
    PRIMITIVES,
    GradCheckError,
    ShapeError,
    Tensor,
    backward,
    grad_check,
    primitive_forward,
)


def test_matmul_hand_arithmetic():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    out = ad.matmul(a, b)
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_softmax_symmetry():
    out = ad.softmax_lastdim(Tensor([0.0, 0.0]))
    np.testing.assert_array_equal(out.data, [0.5, 0.5])


def test_relu_definition():
    out = ad.relu(Tensor([-1.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 2.0])


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    backward(ad.square(x))
    assert x.grad == 6.0


def test_backward_sum_of_squares():
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(ad.sum_(ad.mul(x, x)))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_backward_constant_output_is_noop():
    c = ad.mul(Tensor([2.0]), Tensor([3.0]))
    y = ad.sum_(c)
    assert not y.requires_grad
    backward(y)  # nothing requires grad: no-op


def test_backward_rejects_nonscalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError, match="backward"):
        backward(ad.mul(x, x))


def test_fanout_gradients_sum_across_consumers():
    # y = sum(x*a) + sum(x*b) must equal the sum of the two single-path grads
    rng = np.random.default_rng(0)
    xv = rng.normal(size=5)
    av, bv = rng.normal(size=5), rng.normal(size=5)

    x = Tensor(xv, requires_grad=True)
    y = ad.add(ad.sum_(ad.mul(x, Tensor(av))), ad.sum_(ad.mul(x, Tensor(bv))))
    backward(y)
    np.testing.assert_allclose(x.grad, av + bv, rtol=0, atol=0)

    x1 = Tensor(xv, requires_grad=True)
    backward(ad.sum_(ad.mul(x1, Tensor(av))))
    x2 = Tensor(xv, requires_grad=True)
    backward(ad.sum_(ad.mul(x2, Tensor(bv))))
    np.testing.assert_array_equal(x.grad, x1.grad + x2.grad)


def test_grad_accumulates_across_backward_calls():
    x = Tensor(2.0, requires_grad=True)
    backward(ad.square(x))
    backward(ad.square(x))
    assert x.grad == 8.0
    x.zero_grad()
    assert x.grad is None


def test_shape_error_names_op_and_shapes():
    with pytest.raises(ShapeError, match=r"add.*\(2,\).*\(3,\)"):
        ad.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_primitive_forward_dispatch():
    out = primitive_forward("add", Tensor([1.0]), Tensor([2.0]))
    assert out.data[0] == 3.0
    with pytest.raises(KeyError):
        primitive_forward("conv", Tensor([1.0]))


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=6))
def test_softmax_rows_sum_to_one_and_positive(row):
    out = ad.softmax_lastdim(Tensor(np.array([row, row])))
    assert np.all(out.data > 0)
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)


def test_forward_determinism_bitwise():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 5))
    a = ad.softmax_lastdim(ad.tanh(Tensor(x))).data
    b = ad.softmax_lastdim(ad.tanh(Tensor(x))).data
    assert np.array_equal(a, b)


def test_transpose_and_slice_roundtrip():
    x = Tensor(np.arange(24, dtype=float).reshape(2, 3, 4), requires_grad=True)
    y = ad.transpose(x, (2, 0, 1))
    assert y.shape == (4, 2, 3)
    z = ad.slice_(x, (slice(None), slice(1, 3), slice(0, 4, 2)))
    assert z.shape == (2, 2, 2)
    backward(ad.sum_(ad.mul(z, z)))
    expected = np.zeros((2, 3, 4))
    expected[:, 1:3, 0:4:2] = 2 * x.data[:, 1:3, 0:4:2]
    np.testing.assert_array_equal(x.grad, expected)


def test_broadcast_add_rows():
    x = Tensor(np.zeros((3, 2)), requires_grad=True)
    v = Tensor([1.0, -1.0], requires_grad=True)
    out = ad.broadcast_add(x, v)
    np.testing.assert_array_equal(out.data, [[1, -1]] * 3)
    backward(ad.sum_(out))
    np.testing.assert_array_equal(v.grad, [3.0, 3.0])


# --- finite-difference verification of every primitive -----------------------


def _sample_inputs(op, rng):
    """Random operands for one primitive, restricted to its safe domain."""
    m, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    if op == "matmul":
        k = int(rng.integers(2, 5))
        return (rng.normal(size=(m, k)), rng.normal(size=(k, n)))
    if op in ("log", "sqrt"):
        return (rng.uniform(0.5, 3.0, size=(m, n)),)
    if op in ("add", "mul"):
        return (rng.normal(size=(m, n)), rng.normal(size=(m, n)))
    if op == "broadcast_add":
        return (rng.normal(size=(m, n)), rng.normal(size=n))
    return (rng.normal(size=(m, n)),)


def _apply(op, tensors):
    if op == "concat":
        return ad.concat(tensors + tensors, axis=0)
    if op == "slice":
        return ad.slice_(tensors[0], (slice(0, tensors[0].shape[0], 2),))
    if op == "reshape":
        return ad.reshape(tensors[0], (tensors[0].data.size,))
    if op == "transpose":
        return ad.transpose(tensors[0], (1, 0))
    if op in ("sum", "mean"):
        return PRIMITIVES[op](tensors[0], axis=1)
    return PRIMITIVES[op](*tensors)


@pytest.mark.parametrize("op", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    for _ in range(100):
        arrays = _sample_inputs(op, rng)
        for which in range(len(arrays)):
            def fn(v, which=which, arrays=arrays):
                tensors = [Tensor(a) for a in arrays]
                tensors[which] = v
                out = _apply(op, tensors)
                return ad.sum_(ad.mul(out, out)) if out.shape != () else ad.square(out)

            err = grad_check(fn, arrays[which], eps=1e-6)
            assert err <= 1e-4, f"{op} input {which}: rel error {err}"


def test_grad_check_quadratic_is_tight():
    assert grad_check(lambda x: ad.square(x), np.array(3.0), eps=1e-5) < 1e-8


def test_grad_check_softmax_sum_is_constant():
    point = np.array([0.3, -1.2, 0.7])
    err = grad_check(lambda x: ad.sum_(ad.softmax_lastdim(x)), point, eps=1e-5)
    assert err < 1e-6


def test_grad_check_rejects_bad_eps_and_nonfinite():
    with pytest.raises(ValueError):
        grad_check(lambda x: ad.square(x), np.array(1.0), eps=0.5)
    # The probe at x - eps goes negative on purpose; hide numpy's warning.
    with np.errstate(invalid="ignore"):
        with pytest.raises(GradCheckError, match="coordinate"):
            grad_check(lambda x: ad.sum_(ad.log(x)), np.array([1e-7, 1.0]), eps=1e-5)
