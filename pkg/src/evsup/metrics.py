"""Pixel and event IoU, instance extraction and Hungarian instance matching."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .errors import GeometryMismatchError

_EIGHT = np.ones((3, 3), dtype=int)


def _mask(a) -> np.ndarray:
    return np.asarray(getattr(a, "values", a)).astype(bool)


def iou(a, b, empty: float = 1.0) -> float:
    """``|a & b| / |a | b|``; ``empty`` is returned when both masks are empty."""
    a, b = _mask(a), _mask(b)
    if a.shape != b.shape:
        raise GeometryMismatchError(f"mask shapes {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return empty
    return np.count_nonzero(a & b) / union


def miou(pred, gt, empty: float = 1.0) -> float:
    """Mean of the IMO-class and ego-class IoU."""
    p, g = _mask(pred), _mask(gt)
    return (iou(p, g, empty) + iou(~p, ~g, empty)) / 2.0


def piou(kept, imo_labels, empty: float = 1.0) -> float:
    """Event-level IoU between retained events and oracle IMO events.

    ``kept`` and ``imo_labels`` are boolean flags over the same event
    sequence, or collections of event indices.
    """
    a, b = _as_index_set(kept), _as_index_set(imo_labels)
    union = len(a | b)
    return empty if union == 0 else len(a & b) / union


def _as_index_set(x) -> set:
    if isinstance(x, (set, frozenset)):
        return set(x)
    arr = np.asarray(x)
    if arr.dtype == bool:
        return set(np.flatnonzero(arr).tolist())
    return set(arr.astype(np.int64).tolist())


@dataclass(frozen=True, eq=False)
class InstanceLabels:
    """Integer label image: 0 = background, ``1..count`` = instances."""

    labels: np.ndarray
    count: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @classmethod
    def from_array(cls, labels) -> "InstanceLabels":
        """Relabel arbitrary non-negative ids to contiguous ``1..K`` (ascending id order)."""
        labels = np.asarray(labels, dtype=np.int64)
        ids = np.unique(labels[labels > 0])
        lut = np.zeros(int(labels.max(initial=0)) + 1, dtype=np.int64)
        lut[ids] = np.arange(1, len(ids) + 1)
        return cls(lut[labels], len(ids))


def connected_components(mask) -> InstanceLabels:
    """8-connected components numbered in raster-scan discovery order."""
    lab, n = ndimage.label(_mask(mask), structure=_EIGHT)
    if n:
        # renumber explicitly by first raster occurrence
        flat = lab.ravel()
        pos = flat > 0
        _, first = np.unique(flat[pos], return_index=True)
        order = np.argsort(np.flatnonzero(pos)[first], kind="stable")
        lut = np.zeros(n + 1, dtype=np.int64)
        lut[order + 1] = np.arange(1, n + 1)
        lab = lut[lab]
    return InstanceLabels(lab.astype(np.int64), int(n))


def iou_matrix(pred: InstanceLabels, gt: InstanceLabels) -> np.ndarray:
    """``(pred.count, gt.count)`` pairwise IoU from a joint label histogram."""
    if pred.shape != gt.shape:
        raise GeometryMismatchError(f"label shapes {pred.shape} vs {gt.shape}")
    kp, kg = pred.count + 1, gt.count + 1
    joint = np.bincount((pred.labels * kg + gt.labels).ravel(), minlength=kp * kg).reshape(kp, kg)
    area_p = joint.sum(axis=1)[1:, None]
    area_g = joint.sum(axis=0)[None, 1:]
    inter = joint[1:, 1:].astype(np.float64)
    union = area_p + area_g - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


@dataclass
class MatchReport:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_gt: list[int] = field(default_factory=list)
    gt_count: int = 0
    r_at_05: float = 100.0
    miou: float | None = None

    def to_json(self) -> dict:
        return {
            "pairs": [{"pred": p, "gt": g, "iou": v} for p, g, v in self.pairs],
            "unmatched_gt": list(self.unmatched_gt),
            "r_at_05": self.r_at_05,
            "miou": self.miou,
        }


def hungarian_match(pred: InstanceLabels, gt: InstanceLabels) -> MatchReport:
    """One-to-one instance assignment maximising total IoU.

    The cost ``1 - IoU`` is padded to a square matrix with dummy entries of
    cost 1.  Assignments with zero overlap are not reported as pairs.
    """
    m = iou_matrix(pred, gt)
    n = max(pred.count, gt.count)
    cost = np.ones((n, n))
    cost[: pred.count, : gt.count] = 1.0 - m
    rows, cols = linear_sum_assignment(cost)
    pairs = [
        (int(r) + 1, int(c) + 1, float(m[r, c]))
        for r, c in zip(rows, cols)
        if r < pred.count and c < gt.count and m[r, c] > 0
    ]
    matched = {g for _, g, _ in pairs}
    rep = MatchReport(
        pairs=pairs,
        unmatched_gt=[g for g in range(1, gt.count + 1) if g not in matched],
        gt_count=gt.count,
    )
    rep.r_at_05 = r_at_05(rep, gt.count)
    rep.miou = miou(pred.labels > 0, gt.labels > 0)
    return rep


def r_at_05(report: MatchReport, gt_count: int) -> float:
    """Percentage of GT instances whose matched IoU exceeds 0.5 (100 when there are none)."""
    if gt_count == 0:
        return 100.0
    return 100.0 * sum(1 for _, _, v in report.pairs if v > 0.5) / gt_count
