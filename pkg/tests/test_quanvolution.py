import numpy as np
import pytest

from qhybrid.errors import ConfigurationError, ShapeError
from qhybrid.qgrad import finite_diff_grad
from qhybrid.qsim import batch_z_expectations
from qhybrid.quanvolution import (
    QuantumFilter,
    execution_count,
    extract_patches,
    filter_execution_count,
    filter_forward,
    quanv_backward,
    quanv_forward,
    quanv_forward_batch,
    quanv_forward_jacobian,
    quanv_forward_multi,
)

import oracle


@pytest.fixture
def filt():
    return QuantumFilter.random(np.random.default_rng(0))


@pytest.mark.parametrize("size, count", [(28, 49), (14, 9), (4, 1)])
def test_patch_counts(size, count):
    assert len(extract_patches(np.zeros((size, size)), 4, 4)) == count


def test_patch_order_row_major():
    img = np.arange(14 * 14, dtype=float).reshape(14, 14)
    p = extract_patches(img, 4, 4)
    np.testing.assert_array_equal(p[1], img[0:4, 4:8])
    np.testing.assert_array_equal(p[3], img[4:8, 0:4])
    np.testing.assert_array_equal(p[8], img[8:12, 8:12])
    np.testing.assert_array_equal(extract_patches(img[:4, :4], 4, 4)[0], img[:4, :4])


def test_image_smaller_than_kernel():
    with pytest.raises(ShapeError):
        extract_patches(np.zeros((3, 8)), 4, 4)


def test_filter_defaults(filt):
    assert filt.num_qubits == 4 and filt.qnn.num_params == 24
    with pytest.raises(ConfigurationError):
        QuantumFilter(kernel_size=3)


def test_all_zero_patch_zero_theta():
    f = QuantumFilter(theta=np.zeros(24))
    np.testing.assert_allclose(filter_forward(f, np.zeros((4, 4))), np.zeros(4), atol=1e-15)


def test_filter_forward_bounds_and_shape(filt):
    rng = np.random.default_rng(1)
    out = filter_forward(filt, rng.random((4, 4)))
    assert out.shape == (4,) and np.all(np.abs(out) <= 1)
    with pytest.raises(ShapeError):
        filter_forward(filt, np.zeros((3, 3)))


def test_filter_forward_matches_oracle(filt):
    rng = np.random.default_rng(2)
    patch = rng.random((4, 4))
    data = patch.reshape(-1) * 2 * np.pi
    psi = oracle.final_state(filt.circuit, data, filt.theta)
    np.testing.assert_allclose(filter_forward(filt, patch), oracle.z_expectations(psi, 4), atol=1e-10)


def test_quanv_forward_shapes(filt):
    rng = np.random.default_rng(3)
    fm = quanv_forward(filt, rng.random((14, 14)))
    assert fm.values.shape == (3, 3, 4) and fm.values.size == 36
    assert (fm.height_out, fm.width_out, fm.channels) == (3, 3, 4)
    assert quanv_forward(filt, rng.random((28, 28))).values.shape == (7, 7, 4)
    assert np.all(np.abs(fm.values) <= 1)


def test_quanv_channels_are_patch_features(filt):
    rng = np.random.default_rng(4)
    img = rng.random((14, 14))
    fm = quanv_forward(filt, img).values
    patches = extract_patches(img, 4, 4)
    np.testing.assert_allclose(fm[1, 2], filter_forward(filt, patches[5]), atol=1e-14)


def test_constant_image_uniform_map():
    f = QuantumFilter(theta=np.zeros(24))
    fm = quanv_forward(f, np.full((14, 14), 0.3)).values
    np.testing.assert_allclose(fm, np.broadcast_to(fm[0, 0], fm.shape), atol=1e-14)


def test_shift_equivariance_at_stride(filt):
    rng = np.random.default_rng(5)
    big = rng.random((16, 20))
    a = quanv_forward(filt, big[:, :16]).values
    b = quanv_forward(filt, big[:, 4:20]).values
    np.testing.assert_allclose(a[:, 1:], b[:, :-1], atol=1e-14)


def test_frozen_filter_bit_identical(filt):
    img = np.random.default_rng(6).random((14, 14))
    np.testing.assert_array_equal(quanv_forward(filt, img).values, quanv_forward(filt, img).values)


def test_backward_zero_upstream(filt):
    img = np.random.default_rng(7).random((14, 14))
    np.testing.assert_array_equal(quanv_backward(filt, img, np.zeros((3, 3, 4))), np.zeros(24))


def test_backward_single_patch_is_jacobian_transpose(filt):
    rng = np.random.default_rng(8)
    img = rng.random((4, 4))
    up = rng.normal(size=(1, 1, 4))
    _, jac = quanv_forward_jacobian(filt, img)
    np.testing.assert_allclose(quanv_backward(filt, img, up), jac[0, 0, 0].T @ up[0, 0], atol=1e-14)


def test_backward_matches_layer_finite_differences(filt):
    rng = np.random.default_rng(9)
    img = rng.random((14, 14))
    w = rng.normal(size=(3, 3, 4))

    def loss(theta):
        f = QuantumFilter(theta=theta)
        return np.sum(w * quanv_forward(f, img).values)

    fd = finite_diff_grad(loss, filt.theta, 1e-4)
    np.testing.assert_allclose(quanv_backward(filt, img, w), fd, atol=1e-4)


def test_backward_frozen_filter_returns_zeros(filt):
    filt.trainable = False
    img = np.random.default_rng(10).random((14, 14))
    np.testing.assert_array_equal(quanv_backward(filt, img, np.ones((3, 3, 4))), np.zeros(24))


def test_batch_forward_matches_single(filt):
    imgs = np.random.default_rng(11).random((3, 14, 14))
    batch = quanv_forward_batch(filt, imgs)
    for i in range(3):
        np.testing.assert_allclose(batch[i], quanv_forward(filt, imgs[i]).values, atol=1e-14)


def test_multi_filter_concatenates(filt):
    other = QuantumFilter.random(np.random.default_rng(12))
    imgs = np.random.default_rng(13).random((2, 14, 14))
    out = quanv_forward_multi([filt, other], imgs)
    assert out.shape == (2, 3, 3, 8)
    np.testing.assert_array_equal(out[..., 4:], quanv_forward_batch(other, imgs))


@pytest.mark.parametrize(
    "args, expected",
    [
        (dict(p_single=10, trainable=True, batch=1), 1029),
        (dict(p_single=10, trainable=True, batch=50), 51450),
        (dict(p_single=10, trainable=False, batch=1), 49),
    ],
)
def test_execution_count_published_arithmetic(args, expected):
    assert execution_count(28, 28, 4, 4, **args) == expected


def test_execution_count_compat_mode_folds_crz():
    assert execution_count(28, 28, 4, 4, 6, 4, True, 1, four_term_crz=False) == 1029
    assert execution_count(28, 28, 4, 4, 6, 4, True, 1) == 49 * (1 + 12 + 16)


def test_execution_count_for_default_filter(filt):
    assert filter_execution_count(filt, 14, 14, batch=600) == 394200
    filt.trainable = False
    assert filter_execution_count(filt, 14, 14, batch=600) == 600 * 9
