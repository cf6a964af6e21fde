import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from conftest import random_stream
from evsup import (ContractError, EventStream, FlowField, GeometryMismatchError, IMOMask, MaskLogits, anticipate,
                   dilate, suppress, threshold, warp_mask)
from evsup.suppression import FILL_LOGIT


def lit(h=6, w=6, at=(2, 2), level=10.0):
    z = np.full((h, w), -level)
    z[at[1], at[0]] = level
    return MaskLogits(z)


def naive_warp(z, du, dv, fill):
    """Per-pixel backward warp written out longhand."""
    h, w = z.shape
    out = np.empty_like(z)

    def at(xi, yi):
        return z[yi, xi] if 0 <= xi < w and 0 <= yi < h else fill

    for y in range(h):
        for x in range(w):
            sx, sy = x - du[y, x], y - dv[y, x]
            x0, y0 = math.floor(sx), math.floor(sy)
            ax, ay = sx - x0, sy - y0
            out[y, x] = ((1 - ax) * (1 - ay) * at(x0, y0) + ax * (1 - ay) * at(x0 + 1, y0)
                         + (1 - ax) * ay * at(x0, y0 + 1) + ax * ay * at(x0 + 1, y0 + 1))
    return out


def shifted(z, dx, dy, fill):
    h, w = z.shape
    out = np.full_like(z, fill)
    for y in range(h):
        for x in range(w):
            sx, sy = x - dx, y - dy
            if 0 <= sx < w and 0 <= sy < h:
                out[y, x] = z[sy, sx]
    return out


def test_suppress_all_zero_mask():
    s = EventStream(4, 4, [0, 1], [0, 2], [0, 1], [1, 1])
    assert len(suppress(s, IMOMask.zeros(4, 4), "imo")) == 0


def test_suppress_pointwise():
    m = np.zeros((6, 5), dtype=bool)
    m[4, 3] = True
    s = EventStream(5, 6, [3, 0, 3], [4, 0, 4], [1, 2, 3], [1, -1, -1])
    kept = suppress(s, IMOMask(m), "imo")
    assert [(e.x, e.y, e.t) for e in kept] == [(3, 4, 1), (3, 4, 3)]


def test_suppress_geometry_mismatch():
    with pytest.raises(GeometryMismatchError):
        suppress(EventStream.empty(4, 4), IMOMask.zeros(3, 4))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), density=st.floats(0, 1))
def test_suppress_partition(seed, density):
    rng = np.random.default_rng(seed)
    s = random_stream(rng, n=300)
    m = IMOMask(rng.random(s.shape) < density)
    imo, ego = suppress(s, m, "imo"), suppress(s, m, "ego")
    assert len(imo) + len(ego) == len(s)
    on = m.values[s.y, s.x]
    assert list(imo) == [e for e, k in zip(s, on) if k]
    assert list(ego) == [e for e, k in zip(s, on) if not k]


def test_zero_flow_identity():
    z = MaskLogits(np.random.default_rng(0).normal(0, 4, (7, 9)))
    out = warp_mask(z, FlowField.zeros(7, 9, 1000), 5000)
    assert np.array_equal(out.values, z.values)


def test_integer_shift_of_lit_pixel():
    out = warp_mask(lit(), FlowField.constant(6, 6, 1.0, 0.0, 100), 100)
    expect = np.full((6, 6), -10.0)
    expect[2, 3] = 10.0
    np.testing.assert_array_equal(out.values, expect)


def test_half_pixel_shift_blends():
    out = warp_mask(lit(), FlowField.constant(6, 6, 0.5, 0.0, 100), 100)
    p = expit(out.values)
    pl, pu = expit(10.0), expit(-10.0)
    for x in (2, 3):
        assert pu < p[2, x] < pl
        assert out.values[2, x] == pytest.approx(0.0)
    assert p[2, 4] == pytest.approx(pu)


def test_flow_rescaled_to_horizon():
    # 0.5 px over 50 ms is 1 px over 100 ms
    a = warp_mask(lit(), FlowField.constant(6, 6, 0.5, 0.0, 50_000), 100_000)
    b = warp_mask(lit(), FlowField.constant(6, 6, 1.0, 0.0, 1), 1)
    np.testing.assert_array_equal(a.values, b.values)


def test_out_of_bounds_uses_fill():
    z = MaskLogits(np.full((3, 3), 5.0))
    out = warp_mask(z, FlowField.constant(3, 3, 2.0, 0.0, 1), 1)
    np.testing.assert_array_equal(out.values[:, :2], FILL_LOGIT)


@pytest.mark.parametrize("seed", range(10))
def test_warp_matches_naive(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 5, (5, 7))
    du, dv = rng.normal(0, 2, (5, 7)), rng.normal(0, 2, (5, 7))
    out = warp_mask(MaskLogits(z), FlowField(du, dv, 10), 10)
    np.testing.assert_allclose(out.values, naive_warp(z, du, dv, FILL_LOGIT), rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dx=st.integers(-4, 4), dy=st.integers(-4, 4))
def test_integer_flow_is_exact_shift(seed, dx, dy):
    z = np.random.default_rng(seed).normal(0, 5, (6, 8))
    out = warp_mask(MaskLogits(z), FlowField.constant(6, 8, dx, dy, 7), 7)
    np.testing.assert_array_equal(out.values, shifted(z, dx, dy, FILL_LOGIT))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_warp_preserves_probability_range(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 6, (6, 6))
    out = warp_mask(MaskLogits(z), FlowField(rng.normal(0, 3, (6, 6)), rng.normal(0, 3, (6, 6)), 1), 1)
    p = expit(out.values)
    ref = np.append(expit(z).ravel(), expit(FILL_LOGIT))
    assert p.min() >= ref.min() - 1e-15 and p.max() <= ref.max() + 1e-15


def test_warp_errors():
    with pytest.raises(GeometryMismatchError):
        warp_mask(lit(), FlowField.zeros(5, 6), 1)
    with pytest.raises(ContractError):
        FlowField.zeros(6, 6, dur_ref=0)


def test_threshold_boundary_and_extremes():
    assert threshold(MaskLogits(np.zeros((3, 3)))).values.all()
    m = threshold(MaskLogits(np.array([[10.0, -10.0]])))
    assert m.values.tolist() == [[True, False]]
    for tau in (0.0, 1.0, -0.1):
        with pytest.raises(ContractError):
            threshold(MaskLogits(np.zeros((1, 1))), tau)


def test_threshold_matches_per_pixel(rng):
    z = rng.normal(0, 3, (8, 8))
    for tau in (0.2, 0.5, 0.9):
        expect = [[1.0 / (1.0 + math.exp(-v)) >= tau for v in row] for row in z]
        assert threshold(MaskLogits(z), tau).values.tolist() == expect


def test_dilate_basic():
    m = np.zeros((5, 5), dtype=bool)
    m[2, 2] = True
    assert dilate(IMOMask(m), 0) == IMOMask(m)
    d = dilate(IMOMask(m), 1).values
    assert d[1:4, 1:4].all() and d.sum() == 9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 3))
def test_dilate_composition_and_monotonicity(seed, k):
    rng = np.random.default_rng(seed)
    a = IMOMask(rng.random((10, 12)) < 0.1)
    b = IMOMask(a.values | (rng.random((10, 12)) < 0.1))
    assert dilate(a, 2) == dilate(dilate(a, 1), 1)
    da, db = dilate(a, k).values, dilate(b, k).values
    assert np.all(a.values <= da)
    assert np.all(da <= db)


def test_anticipate_zero_flow_is_threshold(rng):
    z = MaskLogits(rng.normal(0, 3, (6, 6)))
    assert anticipate(z, FlowField.zeros(6, 6), 100) == threshold(z)


@pytest.mark.parametrize("dx,dy", [(1, 0), (-2, 3), (0, -1)])
def test_anticipate_integer_flow_is_shift(rng, dx, dy):
    z = rng.normal(0, 3, (8, 8))
    got = anticipate(MaskLogits(z), FlowField.constant(8, 8, dx, dy, 10), 10)
    expect = threshold(MaskLogits(shifted(z, dx, dy, FILL_LOGIT)))
    assert got == expect
