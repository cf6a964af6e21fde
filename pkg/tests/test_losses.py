import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evsup import EmptyInputError, EventStream, FlowField, GeometryMismatchError
from evsup import losses as L


def test_bce_known_values():
    assert L.bce(np.zeros((3, 4)), np.ones((3, 4))) == pytest.approx(math.log(2), abs=1e-9)
    t = np.array([[1, 0], [0, 1]], float)
    assert L.bce(np.where(t > 0, 10.0, -10.0), t) == pytest.approx(math.log1p(math.exp(-10)), rel=1e-12)
    assert L.bce(np.where(t > 0, 10.0, -10.0), t) < 1e-4


def test_bce_stable_for_large_logits():
    v = L.bce(np.array([1000.0, -1000.0]), np.array([0.0, 1.0]))
    assert v == pytest.approx(1000.0)


def test_dice_examples():
    t = np.array([[1, 1], [0, 0]], float)
    assert L.dice_loss(np.array([[1, 0], [0, 0]], float), t) == 0.25
    assert L.dice_loss(t, t) == 0
    assert L.dice_loss(np.zeros((2, 2)), np.zeros((2, 2))) == 0


def test_shape_mismatch():
    with pytest.raises(GeometryMismatchError):
        L.bce(np.zeros((2, 2)), np.zeros((2, 3)))


def test_mask_loss_linearity_and_elision():
    rng = np.random.default_rng(0)
    z, t = rng.normal(size=(8, 8)), rng.random((8, 8)) > 0.5
    single = L.bce_dice(z, t)
    assert L.mask_loss(z, t, z, t) == pytest.approx(2 * single, rel=1e-12)
    assert L.mask_loss(z, t) == single
    off = L.LossWeights(lambda_future_mask=0.0)
    assert L.mask_loss(z, t, rng.normal(size=(8, 8)), ~t, off) == L.bce_dice(z, t, off)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0, 3), b=st.floats(0, 3))
def test_bce_dice_monotone_in_weights(seed, a, b):
    rng = np.random.default_rng(seed)
    z, t = rng.normal(size=(5, 5)), rng.random((5, 5)) > 0.5
    lo, hi = sorted((a, b))
    assert L.bce_dice(z, t, L.LossWeights(w_bce=lo)) <= L.bce_dice(z, t, L.LossWeights(w_bce=hi)) + 1e-12
    assert L.bce_dice(z, t, L.LossWeights(w_dice=lo)) <= L.bce_dice(z, t, L.LossWeights(w_dice=hi)) + 1e-12


def test_flow_l1_examples():
    gt = FlowField.zeros(3, 3)
    pred_u = np.zeros((3, 3)); pred_v = np.zeros((3, 3))
    pred_u[1, 1], pred_v[1, 1] = 0.3, -0.4
    pred_u[0, 0] = 9.0
    valid = np.zeros((3, 3), bool); valid[1, 1] = True
    assert L.flow_l1(FlowField(pred_u, pred_v, 1), gt, valid) == pytest.approx(0.7)
    valid[1, 1], valid[2, 2] = False, True
    assert L.flow_l1(FlowField(pred_u, pred_v, 1), gt, valid) == 0
    assert L.flow_l1(gt, gt) == 0
    with pytest.raises(EmptyInputError):
        L.flow_l1(gt, gt, np.zeros((3, 3), bool))


def test_charbonnier_examples():
    assert L.charbonnier_smooth(FlowField.constant(4, 4, 1.5, -2.0, 1), 1e-3) == pytest.approx(0.032)
    # 1x2 field, u = x: one interior x-difference of 1, three epsilon terms
    v = L.charbonnier_smooth((np.array([[0.0, 1.0]]), np.zeros((1, 2))), 1e-9)
    assert v == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), cu=st.floats(-50, 50), cv=st.floats(-50, 50))
def test_charbonnier_constant_invariance(seed, cu, cv):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
    assert L.charbonnier_smooth((u + cu, v + cv)) == pytest.approx(L.charbonnier_smooth((u, v)), rel=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_charbonnier_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    gu, gv = L.charbonnier_smooth_grad((u, v), 1e-3)
    h = 1e-4
    fu, fv = np.zeros_like(u), np.zeros_like(v)
    for arr, out, other in ((u, fu, "u"), (v, fv, "v")):
        for idx in np.ndindex(arr.shape):
            vals = []
            for s in (1, -1):
                a = arr.copy(); a[idx] += s * h
                vals.append(L.charbonnier_smooth((a, v) if other == "u" else (u, a), 1e-3))
            out[idx] = (vals[0] - vals[1]) / (2 * h)
    g, f = np.concatenate([gu.ravel(), gv.ravel()]), np.concatenate([fu.ravel(), fv.ravel()])
    assert np.linalg.norm(g - f) / np.linalg.norm(f) < 1e-4


def test_flow_sup_loss_composition():
    f = FlowField.constant(3, 4, 1.0, 1.0, 1)
    assert L.flow_sup_loss(f, f) == pytest.approx(0.05 * 2 * 12 * 1e-3)
    zero = L.LossWeights(lambda_flow=0, lambda_smooth=0)
    assert L.flow_sup_loss(FlowField.constant(3, 4, 2.0, 0.0, 1), f, w=zero) == 0


def test_total_loss_and_defaults():
    w = L.LossWeights()
    assert (w.w_sup, w.w_unsup, w.lambda_future_mask, w.lambda_flow, w.lambda_smooth) == (1.0, 1.0, 1.0, 0.1, 0.05)
    assert L.total_loss(2, 3) == 5
    assert L.total_loss(2, 3, L.LossWeights(w_unsup=0)) == 2


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        L.LossWeights(lambda_flow=-1)


def test_loss_report_keys_and_unsup_sign():
    rng = np.random.default_rng(2)
    z, t = rng.normal(size=(6, 6)), rng.random((6, 6)) > 0.5
    r = L.loss_report(z, t)
    assert set(r) == {"bce", "dice", "bce_dice", "mask", "flow_l1", "smooth", "flow_sup", "unsup", "total"}
    assert r["flow_l1"] is None and r["total"] == r["mask"]
    ev = EventStream(6, 6, [1, 1, 2], [2, 3, 2], [0, 1, 2], [1, -1, 1])
    flow = FlowField.zeros(6, 6, dur_ref=10)
    r = L.loss_report(z, t, pred_flow=flow, gt_flow=flow, events=ev, t_ref=0)
    assert r["unsup"] < 0
    assert r["total"] == pytest.approx(r["mask"] + r["flow_sup"] + r["unsup"])


def test_losses_non_negative_and_finite():
    rng = np.random.default_rng(9)
    for _ in range(20):
        z, t = rng.normal(0, 20, size=(4, 4)), rng.random((4, 4)) > 0.5
        for val in (L.bce(z, t), L.dice_loss(1 / (1 + np.exp(-z)), t), L.bce_dice(z, t)):
            assert np.isfinite(val) and val >= 0
