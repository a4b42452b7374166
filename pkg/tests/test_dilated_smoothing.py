import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import kernel_oracle, smooth_oracle
from smlad.dilated_smoothing import SmoothingConfig, dilated_smooth, gaussian_kernel, gaussian_weights
from smlad.tensor_io import ScoreMap, Stage


def test_defaults_and_receptive_field():
    cfg = SmoothingConfig()
    assert (cfg.kernel_size, cfg.sigma, cfg.dilation) == (7, 1.0, 6)
    assert cfg.receptive_field == 37


@pytest.mark.parametrize("kwargs", [dict(kernel_size=4), dict(kernel_size=0), dict(sigma=0.0), dict(dilation=0)])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        SmoothingConfig(**kwargs)


@pytest.mark.parametrize("k", [1, 3, 7, 11])
def test_center_weight_independent_of_k(k):
    assert math.isclose(gaussian_weights(k, 1.0)[k // 2, k // 2], 1 / (2 * math.pi), rel_tol=1e-15)


def test_corner_to_center_ratio():
    w = gaussian_weights(3, 1.0)
    assert math.isclose(w[0, 0] / w[1, 1], math.exp(-1), rel_tol=1e-15)


@settings(max_examples=200, deadline=None)
@given(k=st.sampled_from([1, 3, 5, 7, 9]), sigma=st.floats(0.1, 10.0))
def test_kernel_symmetry_and_unit_sum(k, sigma):
    K = gaussian_kernel(k, sigma)
    assert np.array_equal(K, K[::-1, ::-1]) and np.array_equal(K, K.T)
    assert abs(K.sum() - 1.0) <= 1e-12
    assert np.allclose(K, kernel_oracle(k, sigma), rtol=1e-12, atol=0)


@pytest.mark.parametrize("v", [0.0, -3.25, 1e6, 0.1])
def test_constant_map_is_exact(v):
    out = dilated_smooth(ScoreMap(np.full((13, 9), v)))
    assert np.all(out.data == v)
    assert out.stage is Stage.POST_SMOOTHING


def test_impulse_response():
    s = np.zeros((21, 21))
    s[10, 10] = 1.0
    out = dilated_smooth(ScoreMap(s), SmoothingConfig(3, 1.0, 2)).data
    K = gaussian_kernel(3, 1.0)
    expected = np.zeros_like(s)
    for i, dy in enumerate((-2, 0, 2)):
        for j, dx in enumerate((-2, 0, 2)):
            expected[10 + dy, 10 + dx] = K[i, j]
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


def test_default_matches_quadruple_loop(rng):
    s = rng.normal(size=(32, 32))
    out = dilated_smooth(ScoreMap(s)).data
    ref = np.array(smooth_oracle(s.tolist(), 7, 1.0, 6))
    assert np.max(np.abs(out - ref)) <= 1e-12


def test_tiny_images_with_wide_reach():
    for shape in [(1, 1), (1, 5), (2, 2), (3, 1)]:
        s = np.arange(np.prod(shape), dtype=float).reshape(shape)
        out = dilated_smooth(ScoreMap(s)).data
        np.testing.assert_allclose(out, smooth_oracle(s.tolist(), 7, 1.0, 6), rtol=0, atol=1e-12)


def test_variance_contracts_on_noise(rng):
    shrunk = 0
    for _ in range(100):
        noise = rng.normal(size=(24, 24))
        noise -= noise.mean()
        shrunk += dilated_smooth(ScoreMap(noise)).data.var() <= noise.var()
    assert shrunk == 100


# -- properties ---------------------------------------------------------------

configs = st.builds(
    SmoothingConfig,
    kernel_size=st.sampled_from([1, 3, 5, 7]),
    sigma=st.floats(0.3, 3.0),
    dilation=st.integers(1, 6),
)
maps = hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 20)), elements=st.floats(-1e3, 1e3))


@settings(max_examples=200, deadline=None)
@given(s=maps, cfg=configs)
def test_convex_hull(s, cfg):
    out = dilated_smooth(ScoreMap(s), cfg).data
    assert out.min() >= s.min() and out.max() <= s.max()


@settings(max_examples=200, deadline=None)
@given(s=maps, cfg=configs, a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_linearity(s, cfg, a, b, seed):
    s2 = np.random.default_rng(seed).normal(0, 100, size=s.shape)
    lhs = dilated_smooth(ScoreMap(a * s + b * s2), cfg).data
    rhs = a * dilated_smooth(ScoreMap(s), cfg).data + b * dilated_smooth(ScoreMap(s2), cfg).data
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (1 + np.abs(s).max() + np.abs(s2).max()))


@settings(max_examples=200, deadline=None)
@given(cfg=configs, dy=st.integers(-3, 3), dx=st.integers(-3, 3), seed=st.integers(0, 2**16))
def test_interior_translation_equivariance(cfg, dy, dx, seed):
    s = np.random.default_rng(seed).normal(size=(48, 48))
    shifted = np.roll(s, (dy, dx), axis=(0, 1))
    a = dilated_smooth(ScoreMap(s), cfg).data
    b = dilated_smooth(ScoreMap(shifted), cfg).data
    m = cfg.dilation * (cfg.kernel_size // 2) + 3  # margin covers the wrap-around seam
    if 2 * m >= 48:
        return
    interior = (slice(m, 48 - m), slice(m, 48 - m))
    moved = np.roll(a, (dy, dx), axis=(0, 1))
    assert np.allclose(b[interior], moved[interior], rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(s=hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(-10, 10)), cfg=configs)
def test_oracle_equivalence(s, cfg):
    out = dilated_smooth(ScoreMap(s), cfg).data
    ref = np.array(smooth_oracle(s.tolist(), cfg.kernel_size, cfg.sigma, cfg.dilation))
    assert np.max(np.abs(out - ref)) <= 1e-12
