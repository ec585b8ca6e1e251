import numpy as np
import pytest

from promptscan.errors import ContractError, DimensionError
from promptscan.tensor import (
    Tensor,
    absolute,
    clamp,
    concat,
    conv2d,
    default_dtype,
    layer_norm,
    matmul,
    pixel_shuffle,
    pixel_unshuffle,
    separable_map,
    set_default_dtype,
    softmax,
    take_tokens,
    tsum,
)


def test_broadcast_gradients_unbroadcast_to_leaf_shapes():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((3, 1)), requires_grad=True)
    y = Tensor(rng.standard_normal((1, 4)), requires_grad=True)
    (x * y).sum().backward()
    assert x.grad.shape == (3, 1)
    assert y.grad.shape == (1, 4)
    np.testing.assert_allclose(x.grad, np.full((3, 1), y.data.sum()))
    np.testing.assert_allclose(y.grad, np.full((1, 4), x.data.sum()))


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_grad_accumulates_across_branches():
    x = Tensor(np.array([1.5]), requires_grad=True)
    y = x * 3.0 + x * 2.0
    y.sum().backward()
    assert x.grad[0] == 5.0


def test_detach_blocks_gradient():
    x = Tensor(np.array([2.0]), requires_grad=True)
    (x.detach() * x).sum().backward()
    assert x.grad[0] == 2.0  # only the live branch contributes


def test_matmul_shape_error_names_both_operands():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((4, 5)))
    with pytest.raises(DimensionError) as err:
        matmul(a, b)
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


def test_take_tokens_is_a_bijective_gather():
    x = Tensor(np.arange(12, dtype=np.float64).reshape(1, 4, 3), requires_grad=True)
    perm = np.array([[2, 0, 3, 1]])
    y = take_tokens(x, perm)
    np.testing.assert_array_equal(y.data[0, 0], x.data[0, 2])
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones_like(x.data))


def test_take_tokens_rejects_wrong_perm_shape():
    x = Tensor(np.zeros((1, 4, 3)))
    with pytest.raises(DimensionError):
        take_tokens(x, np.zeros((1, 3), dtype=int))


def test_index_backward_scatters_into_slice():
    x = Tensor(np.zeros((2, 5)), requires_grad=True)
    x[:, 1:3].sum().backward()
    expected = np.zeros((2, 5))
    expected[:, 1:3] = 1.0
    np.testing.assert_array_equal(x.grad, expected)


def test_concat_splits_gradient():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((3, 2)), requires_grad=True)
    out = concat([a, b], axis=0)
    (out * Tensor(np.arange(10.0).reshape(5, 2))).sum().backward()
    np.testing.assert_array_equal(a.grad, [[0, 1], [2, 3]])
    np.testing.assert_array_equal(b.grad, [[4, 5], [6, 7], [8, 9]])


def test_absolute_and_clamp_subgradients():
    x = Tensor(np.array([-1.5, 0.0, 2.0]), requires_grad=True)
    absolute(x).sum().backward()
    np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])

    y = Tensor(np.array([-2.0, 0.3, 2.0]), requires_grad=True)
    clamp(y, -1.0, 1.0).sum().backward()
    np.testing.assert_array_equal(y.grad, [0.0, 1.0, 0.0])


def test_softmax_rows_sum_to_one_and_shift_invariance():
    x = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 1000.0]])
    s = softmax(Tensor(x), axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-15)
    s_shift = softmax(Tensor(x + 50.0), axis=-1)
    np.testing.assert_allclose(s.data, s_shift.data, atol=1e-12)
    assert s.data[1, 2] == 1.0  # extreme logits do not overflow


def test_layer_norm_output_is_normalized():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((4, 6)) * 7 + 3)
    g = Tensor(np.ones(6))
    b = Tensor(np.zeros(6))
    out = layer_norm(x, g, b).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)  # limited by eps


def test_layer_norm_rejects_bad_eps_and_affine_shape():
    x = Tensor(np.zeros((2, 4)))
    with pytest.raises(ContractError):
        layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=0.0)
    with pytest.raises(DimensionError):
        layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(4)))


def test_conv2d_matches_direct_convolution():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 5, 6))
    k = rng.standard_normal((3, 2, 3, 3))
    out = conv2d(Tensor(x), Tensor(k), pad=1).data

    ref = np.zeros((1, 3, 5, 6))
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for o in range(3):
        for i in range(5):
            for j in range(6):
                ref[0, o, i, j] = np.sum(xp[0, :, i : i + 3, j : j + 3] * k[o])
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv2d_rejects_even_kernel():
    with pytest.raises(ContractError):
        conv2d(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))), pad=0)


def test_pixel_shuffle_layout_oracle():
    # channel c of an r*r group lands on the (c // r, c % r) offset
    r = 2
    x = np.zeros((1, 4, 2, 2))
    for c in range(4):
        x[0, c] = c + 1
    out = pixel_shuffle(Tensor(x), r).data
    assert out.shape == (1, 1, 4, 4)
    expected_block = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(out[0, 0, :2, :2], expected_block)
    np.testing.assert_array_equal(out[0, 0, 2:, 2:], expected_block)


def test_pixel_shuffle_unshuffle_inverse():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 8, 3, 5))
    back = pixel_unshuffle(pixel_shuffle(Tensor(x), 2), 2).data
    np.testing.assert_array_equal(back, x)


def test_separable_map_equals_explicit_double_product():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 5, 6))
    rows = rng.standard_normal((4, 5))
    cols = rng.standard_normal((7, 6))
    out = separable_map(Tensor(x), rows, cols).data
    ref = np.einsum("oh,bchw,pw->bcop", rows, x, cols)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_tsum_axis_and_keepdims():
    x = Tensor(np.arange(24.0).reshape(2, 3, 4), requires_grad=True)
    s = tsum(x, axis=(0, 2), keepdims=True)
    assert s.shape == (1, 3, 1)
    s.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_default_dtype_switch():
    try:
        set_default_dtype(np.float32)
        assert Tensor(np.zeros(3)).data.dtype == np.float32
    finally:
        set_default_dtype(np.float64)
    assert default_dtype() == np.float64
    with pytest.raises(ContractError):
        set_default_dtype(np.int32)
