import numpy as np

from evsup.suppression import IMOMask
from evsup.tokens import mask_to_tokens, utilization


def test_top_left_patch_example():
    m = np.zeros((16, 16), bool)
    m[1:3, 2:4] = True
    tg = mask_to_tokens(IMOMask(m), 8, 0)
    assert tg.kept == (0,) and tg.total == 4
    assert utilization(tg) == 0.25


def test_all_ones_keeps_everything():
    tg = mask_to_tokens(IMOMask(np.ones((16, 16), bool)), 8)
    assert utilization(tg) == 1.0 and tg.kept == (0, 1, 2, 3)


def test_corner_pixel_spills_under_dilation():
    m = np.zeros((16, 16), bool)
    m[7, 7] = True
    assert mask_to_tokens(IMOMask(m), 8, 0).kept == (0,)
    assert mask_to_tokens(IMOMask(m), 8, 1).kept == (0, 1, 2, 3)


def test_remainder_patches_are_tokens():
    m = np.zeros((10, 10), bool)
    m[9, 9] = True
    tg = mask_to_tokens(IMOMask(m), 4)
    assert (tg.rows, tg.cols) == (3, 3) and tg.kept == (8,)


def test_monotone_in_dilation():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = IMOMask(rng.random((24, 20)) > 0.97)
        prev, prev_u = set(), 0.0
        for k in range(4):
            tg = mask_to_tokens(m, 4, k)
            assert prev <= set(tg.kept)
            assert utilization(tg) >= prev_u
            prev, prev_u = set(tg.kept), utilization(tg)


def test_unit_patch_is_identity():
    m = np.random.default_rng(1).random((7, 9)) > 0.5
    tg = mask_to_tokens(IMOMask(m), 1)
    assert tg.kept == tuple(np.flatnonzero(m))
