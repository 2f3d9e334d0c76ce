import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimrecon.cplx import fft2_frames
from dimrecon.phantom import (
    PhantomSpec, build_dataset, generate_phantom, patch_origins, shear_patches, simulate_acquisition,
)
from dimrecon.sampling import SamplingMask, apply_mask, generate_mask, zero_filled_recon


def test_empty_phantom():
    assert not generate_phantom(PhantomSpec(8, 8, 2, n_objects=0)).any()


@settings(max_examples=15, deadline=None)
@given(st.integers(8, 40), st.integers(8, 40), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_magnitude_normalised(nx, ny, nt, n_obj, seed):
    s = generate_phantom(PhantomSpec(nx, ny, nt, n_objects=n_obj, seed=seed))
    assert abs(np.abs(s).max() - 1) < 1e-12


def test_deterministic():
    spec = PhantomSpec(16, 16, 3, seed=4)
    np.testing.assert_array_equal(generate_phantom(spec), generate_phantom(spec))


def test_period():
    s = np.abs(generate_phantom(PhantomSpec(32, 32, 12, period=4, seed=2)))
    for t in range(8):
        r = np.corrcoef(s[..., t].ravel(), s[..., t + 4].ravel())[0, 1]
        assert r > 0.99
    # and frames do move within a period
    assert np.corrcoef(s[..., 0].ravel(), s[..., 2].ravel())[0, 1] < 0.999


def test_noiseless_full_mask_is_fft():
    s = generate_phantom(PhantomSpec(8, 8, 2, seed=1))
    np.testing.assert_array_equal(simulate_acquisition(s, SamplingMask.full(8, 2)), fft2_frames(s))


def test_zero_filled_input():
    s = generate_phantom(PhantomSpec(8, 8, 2, seed=1))
    m = generate_mask(8, 2, 2, 2, seed=0)
    k_u = simulate_acquisition(s, m)
    np.testing.assert_allclose(zero_filled_recon(k_u), np.fft.ifft2(apply_mask(np.fft.fft2(s, axes=(0, 1), norm="ortho"), m),
                                                                   axes=(0, 1), norm="ortho"), atol=1e-14)


def test_noise_energy():
    s = generate_phantom(PhantomSpec(16, 16, 2, seed=1))
    m = generate_mask(16, 2, 4, 2, seed=0)
    clean = simulate_acquisition(s, m)
    std = 0.05
    energy = [np.sum(np.abs(simulate_acquisition(s, m, std, seed) - clean) ** 2) for seed in range(100)]
    expected = 2 * std ** 2 * m.kspace_mask(16).sum()
    assert abs(np.mean(energy) / expected - 1) < 0.05


def test_noise_only_at_sampled_positions():
    s = generate_phantom(PhantomSpec(8, 8, 2, seed=1))
    m = generate_mask(8, 2, 4, 2, seed=0)
    k = simulate_acquisition(s, m, 0.1, 3)
    assert not k[~m.kspace_mask(8)].any()


def test_patch_counts():
    assert len(patch_origins((192, 192, 25), (117, 120, 6), (7, 7, 5))) == 11 * 11 * 4
    assert len(patch_origins((10, 10, 6), (8, 8, 6), (2, 2, 5))) == 4
    v = np.arange(24.0).reshape(2, 3, 4)
    (only,) = shear_patches(v, (2, 3, 4), (1, 1, 1))
    np.testing.assert_array_equal(only, v)


def test_patch_too_big():
    with pytest.raises(ValueError):
        patch_origins((4, 4, 4), (5, 4, 4), (1, 1, 1))


@settings(max_examples=25, deadline=None)
@given(st.tuples(st.integers(1, 12), st.integers(1, 12), st.integers(1, 8)), st.data())
def test_patch_coverage(shape, data):
    patch = tuple(data.draw(st.integers(1, d)) for d in shape)
    stride = tuple(data.draw(st.integers(1, p)) for p in patch)
    hits = np.zeros(shape, int)
    origins = patch_origins(shape, patch, stride)
    assert len(origins) == np.prod([(d - p) // s + 1 for d, p, s in zip(shape, patch, stride)])
    for i, j, k in origins:
        hits[i:i + patch[0], j:j + patch[1], k:k + patch[2]] += 1
    # the lattice covers everything once the last patch is flush with the edge
    flush = all((d - p) % s == 0 for d, p, s in zip(shape, patch, stride))
    if flush:
        assert hits.min() >= 1


def test_dataset_consistency_and_split():
    ds = build_dataset(3, 1, PhantomSpec(8, 8, 2, noise_std=0.01), accel=2, acs=2, seed=5)
    assert len(ds.train) == 3 and len(ds.test) == 1
    assert all(r.is_consistent() for r in ds.records)
    assert ds == build_dataset(3, 1, PhantomSpec(8, 8, 2, noise_std=0.01), accel=2, acs=2, seed=5)
