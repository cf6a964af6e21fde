"""Segmentation and flow losses plus the combined training objective."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .errors import ContractError, EmptyInputError, GeometryMismatchError
from .flow import FlowField


@dataclass(frozen=True)
class LossWeights:
    w_sup: float = 1.0
    w_unsup: float = 1.0
    lambda_future_mask: float = 1.0
    lambda_flow: float = 0.1
    lambda_smooth: float = 0.05
    w_bce: float = 1.0
    w_dice: float = 1.0
    eps_charb: float = 1e-3
    eps_dice: float = 1.0

    def __post_init__(self):
        bad = {k: v for k, v in asdict(self).items() if v < 0}
        if bad:
            raise ContractError(f"loss weights must be non-negative: {bad}")


def _arr(a) -> np.ndarray:
    return np.asarray(getattr(a, "values", a), dtype=np.float64)


def _pair(a, b):
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise GeometryMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def bce(logits, target) -> float:
    """Mean logistic cross-entropy, evaluated stably on logits."""
    z, t = _pair(logits, target)
    per_pixel = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return float(per_pixel.mean())


def dice_loss(probs, target, eps: float = 1.0) -> float:
    """``1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps)``."""
    p, t = _pair(probs, target)
    return float(1.0 - (2.0 * (p * t).sum() + eps) / (p.sum() + t.sum() + eps))


def bce_dice(logits, target, w: LossWeights = LossWeights()) -> float:
    z = _arr(logits)
    return w.w_bce * bce(z, target) + w.w_dice * dice_loss(expit(z), target, w.eps_dice)


def mask_loss(mt_logits, mt_gt, mfut_logits=None, mfut_gt=None, w: LossWeights = LossWeights()) -> float:
    """Current-mask BCE-Dice plus the weighted future-mask term when a future pair is given."""
    loss = bce_dice(mt_logits, mt_gt, w)
    if mfut_logits is not None and mfut_gt is not None and w.lambda_future_mask != 0:
        loss += w.lambda_future_mask * bce_dice(mfut_logits, mfut_gt, w)
    return loss


def flow_l1(pred: FlowField, gt: FlowField, valid=None) -> float:
    """Mean of ``|du| + |dv|`` over valid pixels (all pixels when ``valid`` is None)."""
    if pred.shape != gt.shape:
        raise GeometryMismatchError(f"flow shapes {pred.shape} vs {gt.shape}")
    valid = np.ones(pred.shape, dtype=bool) if valid is None else np.asarray(getattr(valid, "values", valid), dtype=bool)
    if valid.shape != pred.shape:
        raise GeometryMismatchError("valid mask does not match flow geometry")
    if not valid.any():
        raise EmptyInputError("flow L1 is undefined without valid pixels")
    err = np.abs(pred.u - gt.u) + np.abs(pred.v - gt.v)
    return float(err[valid].mean())


def _forward_diffs(a: np.ndarray):
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1] = a[:, 1:] - a[:, :-1]
    gy[:-1, :] = a[1:, :] - a[:-1, :]
    return gx, gy


def _as_uv(flow):
    if isinstance(flow, FlowField):
        return flow.u, flow.v
    u, v = flow
    return np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)


def charbonnier_smooth(flow, eps: float = 1e-3) -> float:
    """Charbonnier penalty on forward-difference flow gradients, summed over pixels.

    The last column (row) has zero x (y) gradient.  ``flow`` is a
    :class:`FlowField` or a ``(u, v)`` pair.
    """
    if eps <= 0:
        raise ContractError("Charbonnier epsilon must be positive")
    u, v = _as_uv(flow)
    ux, uy = _forward_diffs(u)
    vx, vy = _forward_diffs(v)
    return float(np.sqrt(ux**2 + vx**2 + eps**2).sum() + np.sqrt(uy**2 + vy**2 + eps**2).sum())


def charbonnier_smooth_grad(flow, eps: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`charbonnier_smooth` w.r.t. ``u`` and ``v``."""
    u, v = _as_uv(flow)
    ux, uy = _forward_diffs(u)
    vx, vy = _forward_diffs(v)
    rx = np.sqrt(ux**2 + vx**2 + eps**2)
    ry = np.sqrt(uy**2 + vy**2 + eps**2)

    def back(dx, dy):
        # a forward difference d[i] = a[i+1] - a[i] pushes +d to i+1 and -d to i
        g = np.zeros_like(dx)
        g[:, 1:] += dx[:, :-1]
        g[:, :-1] -= dx[:, :-1]
        g[1:, :] += dy[:-1, :]
        g[:-1, :] -= dy[:-1, :]
        return g

    return back(ux / rx, uy / ry), back(vx / rx, vy / ry)


def flow_sup_loss(pred: FlowField, gt: FlowField, valid=None, w: LossWeights = LossWeights()) -> float:
    return w.lambda_flow * flow_l1(pred, gt, valid) + w.lambda_smooth * charbonnier_smooth(pred, w.eps_charb)


def total_loss(l_sup: float, l_unsup: float, w: LossWeights = LossWeights()) -> float:
    return w.w_sup * l_sup + w.w_unsup * l_unsup


def loss_report(mt_logits, mt_gt, mfut_logits=None, mfut_gt=None, pred_flow: FlowField | None = None,
                gt_flow: FlowField | None = None, valid=None, events=None, t_ref: float | None = None,
                w: LossWeights = LossWeights()) -> dict:
    """Every loss term that the supplied inputs allow; missing terms are ``None``.

    The supervised loss is the mask loss plus the supervised flow loss when
    ground-truth flow is given.  The unsupervised loss is the negated IWE
    variance of ``events`` transported with ``pred_flow`` to ``t_ref``.
    """
    from .cmax import build_iwe, transport_events, variance_focus

    z = _arr(mt_logits)
    rep = {
        "bce": bce(z, mt_gt),
        "dice": dice_loss(expit(z), mt_gt, w.eps_dice),
        "bce_dice": bce_dice(z, mt_gt, w),
        "mask": mask_loss(z, mt_gt, mfut_logits, mfut_gt, w),
        "flow_l1": None,
        "smooth": None,
        "flow_sup": None,
        "unsup": None,
    }
    l_sup = rep["mask"]
    if pred_flow is not None:
        rep["smooth"] = charbonnier_smooth(pred_flow, w.eps_charb)
        if gt_flow is not None:
            rep["flow_l1"] = flow_l1(pred_flow, gt_flow, valid)
            rep["flow_sup"] = w.lambda_flow * rep["flow_l1"] + w.lambda_smooth * rep["smooth"]
            l_sup += rep["flow_sup"]
        if events is not None and len(events):
            t_ref = float(events.t[0]) if t_ref is None else t_ref
            pts = transport_events(events, pred_flow, t_ref)
            rep["unsup"] = -variance_focus(build_iwe(pts, pred_flow.height, pred_flow.width))
    rep["total"] = total_loss(l_sup, rep["unsup"] or 0.0, w)
    return rep
