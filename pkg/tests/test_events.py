import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stream
from evsup import (ContractError, Event, EventStream, InvalidIntervalError, encode_voxel, slice_by_budget,
                   slice_by_time)


def stream_at(times, width=8, height=8):
    n = len(times)
    return EventStream(width, height, np.arange(n) % width, np.zeros(n, int), times, np.ones(n, int))


def test_stream_validates_geometry_and_polarity():
    with pytest.raises(ContractError):
        EventStream(4, 4, [4], [0], [0], [1])
    with pytest.raises(ContractError):
        EventStream(4, 4, [0], [0], [0], [0])


def test_unsorted_input_is_stably_sorted():
    s = EventStream(4, 4, [0, 1, 2, 3], [0, 0, 0, 0], [5, 1, 5, 1], [1, -1, 1, -1])
    assert s.t.tolist() == [1, 1, 5, 5]
    assert s.x.tolist() == [1, 3, 0, 2]


def test_stream_is_immutable():
    s = stream_at([1, 2])
    with pytest.raises(ValueError):
        s.t[0] = 7


def test_iteration_and_from_events_round_trip():
    evs = [Event(1, 2, 10, 1), Event(0, 3, 11, -1)]
    s = EventStream.from_events(4, 4, evs)
    assert list(s) == evs


def test_slice_empty_stream():
    assert len(slice_by_time(EventStream.empty(4, 4), 0, 10)) == 0


def test_slice_half_open():
    s = slice_by_time(stream_at([10, 20, 30]), 10, 30)
    assert s.t.tolist() == [10, 20]


def test_slice_rejects_empty_interval():
    with pytest.raises(InvalidIntervalError):
        slice_by_time(stream_at([1]), 5, 5)


def test_slice_matches_brute_force(rng):
    s = random_stream(rng)
    got = slice_by_time(s, 250, 750)
    expect = [e for e in s if 250 <= e.t < 750]
    assert list(got) == expect
    assert got.shape == s.shape


def test_budget_latest_n():
    s = slice_by_budget(stream_at(list(range(10))), 10, 3)
    assert s.t.tolist() == [7, 8, 9]
    assert len(slice_by_budget(stream_at(list(range(10))), 10, 0)) == 0


def test_budget_larger_than_available():
    assert slice_by_budget(stream_at([1, 2, 3]), 3, 100).t.tolist() == [1, 2]


@pytest.mark.parametrize("seed", range(5))
def test_budget_matches_sort_suffix(seed):
    rng = np.random.default_rng(seed)
    s = random_stream(rng)
    for t_ref, n in [(0, 5), (500, 10), (500, 10_000), (1000, 999), (int(rng.integers(0, 1000)), 37)]:
        before = [e for e in s if e.t < t_ref]
        expect = before[max(0, len(before) - n):]
        assert list(slice_by_budget(s, t_ref, n)) == expect


def test_voxel_single_event_first_half():
    s = EventStream(4, 3, [1], [2], [10], [1])
    vg = encode_voxel(s, 2, 0, 100)
    assert vg.data[0, 2, 1] == 1
    assert not vg.data[1].any()
    assert np.abs(vg.data).sum() == 1


def test_voxel_midpoint_goes_to_second_bin():
    s = EventStream(4, 3, [3], [0], [50], [-1])
    vg = encode_voxel(s, 2, 0, 100)
    assert vg.data[1, 0, 3] == -1
    assert not vg.data[0].any()


def test_voxel_last_bin_closure():
    s = EventStream(2, 2, [0], [0], [99], [1])
    assert encode_voxel(s, 3, 0, 100).data[2, 0, 0] == 1


def test_voxel_matches_per_event_accumulation(rng):
    s = random_stream(rng, n=500)
    vg = encode_voxel(s, 3, 100, 900)
    expect = np.zeros((3, s.height, s.width))
    for e in s:
        if 100 <= e.t < 900:
            b = min(int(3 * (e.t - 100) / 800), 2)
            expect[b, e.y, e.x] += e.p
    np.testing.assert_array_equal(vg.data, expect)


def test_voxel_invalid_window():
    with pytest.raises(InvalidIntervalError):
        encode_voxel(stream_at([1]), 2, 10, 10)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t_mid=st.integers(1, 999))
def test_time_partition(seed, t_mid):
    s = random_stream(np.random.default_rng(seed), n=200)
    left, right, whole = slice_by_time(s, 0, t_mid), slice_by_time(s, t_mid, 1000), slice_by_time(s, 0, 1000)
    assert len(left) + len(right) == len(whole)
    assert list(left) + list(right) == list(whole)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t_ref=st.integers(-5, 1005), n=st.integers(0, 300))
def test_budget_is_suffix_of_prefix(seed, t_ref, n):
    s = random_stream(np.random.default_rng(seed), n=200)
    prefix = list(s.take(s.t < t_ref))
    got = list(slice_by_budget(s, t_ref, n))
    assert got == prefix[len(prefix) - len(got):]
    assert len(got) == min(n, len(prefix))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), bins=st.integers(1, 5), t_mid=st.integers(1, 999))
def test_voxel_mass_and_additivity(seed, bins, t_mid):
    s = random_stream(np.random.default_rng(seed), n=300)
    vg = encode_voxel(s, bins, 0, 1000)
    assert vg.data.sum() == s.p.sum()
    assert np.abs(vg.data).sum() <= len(s)
    a = encode_voxel(slice_by_time(s, 0, t_mid), bins, 0, 1000)
    b = encode_voxel(slice_by_time(s, t_mid, 1000), bins, 0, 1000)
    np.testing.assert_array_equal(a.data + b.data, vg.data)
