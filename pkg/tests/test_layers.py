import math

import numpy as np
import pytest

from dimrecon.cplx import fft2_frames, ifft2_frames
from dimrecon.layers import ConfigError, idc, kdc, parse_lambda, relu
from dimrecon.sampling import generate_mask

from conftest import crandn


@pytest.fixture
def setup(rng):
    mask = generate_mask(8, 3, 2, 2, seed=4)
    k_u = crandn(rng, (6, 8, 3)) * mask.kspace_mask(6)
    return mask, k_u, crandn(rng, (6, 8, 3))


def test_parse_lambda():
    assert parse_lambda("inf") == math.inf
    assert parse_lambda("Infinite") == math.inf
    assert parse_lambda(2) == 2.0
    for bad in (0, -1, "0"):
        with pytest.raises(ConfigError):
            parse_lambda(bad)


def test_kdc_hard_replacement(setup):
    mask, k_u, pred = setup
    out = kdc(pred, k_u, mask)
    omega = mask.kspace_mask(6)
    np.testing.assert_array_equal(out[omega], k_u[omega])
    np.testing.assert_array_equal(out[~omega], pred[~omega])


def test_kdc_lambda_one_is_average(setup):
    mask, k_u, pred = setup
    out = kdc(pred, k_u, mask, 1.0)
    omega = mask.kspace_mask(6)
    np.testing.assert_array_equal(out[omega], ((pred + k_u) / 2)[omega])


def test_kdc_fixed_point(setup):
    mask, k_u, _ = setup
    np.testing.assert_array_equal(kdc(k_u, k_u, mask, 3.0), k_u)


def test_kdc_idempotent_for_infinite_lambda(setup):
    mask, k_u, pred = setup
    once = kdc(pred, k_u, mask)
    np.testing.assert_array_equal(kdc(once, k_u, mask), once)


def test_idc_enforces_measurements(setup):
    mask, k_u, pred = setup
    out = idc(pred, k_u, mask)
    omega = mask.kspace_mask(6)
    assert np.max(np.abs(fft2_frames(out)[omega] - k_u[omega])) < 1e-12


def test_idc_on_consistent_image_is_identity(rng):
    mask = generate_mask(8, 2, 2, 2, seed=1)
    s = crandn(rng, (4, 8, 2))
    k_u = fft2_frames(s) * mask.kspace_mask(4)
    np.testing.assert_allclose(idc(s, k_u, mask), s, atol=1e-12)


def test_kdc_shape_error(setup):
    mask, k_u, _ = setup
    from dimrecon.cplx import ShapeError

    with pytest.raises(ShapeError):
        kdc(k_u[:3], k_u, mask)


@pytest.mark.parametrize("lam", [0.5, 1.0, 7.0])
def test_kdc_linear_part_adjoint(rng, lam):
    mask = generate_mask(8, 3, 2, 2, seed=6)
    zero = np.zeros((6, 8, 3), complex)
    x, y = crandn(rng, (6, 8, 3)), crandn(rng, (6, 8, 3))
    # with zero measurements kdc is linear and diagonal, hence self-adjoint
    assert abs(np.vdot(y, kdc(x, zero, mask, lam)) - np.vdot(kdc(y, zero, mask, lam), x)) < 1e-10


def test_fft_adjoint_is_ifft(rng):
    x, y = crandn(rng, (5, 7, 2)), crandn(rng, (5, 7, 2))
    assert abs(np.vdot(y, fft2_frames(x)) - np.vdot(ifft2_frames(y), x)) < 1e-10


def test_relu():
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
