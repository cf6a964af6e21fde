"""IMO masks, the suppression operator and forward warping of mask logits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .errors import ContractError, GeometryMismatchError
from .events import EventStream
from .flow import FlowField

#: Logit used for backward samples that fall outside the image (ego).
FILL_LOGIT = -10.0

_STRUCT_3x3 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class IMOMask:
    """Binary per-pixel mask, 1 = independently moving object."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values)
        if v.ndim != 2:
            raise ContractError("mask must be 2-D")
        if v.dtype != bool:
            if not np.all((v == 0) | (v == 1)):
                raise ContractError("mask values must be 0 or 1")
            v = v.astype(bool)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, height: int, width: int) -> "IMOMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_logits(self, magnitude: float = 10.0) -> "MaskLogits":
        return MaskLogits(np.where(self.values, magnitude, -magnitude))

    def __eq__(self, other) -> bool:
        if not isinstance(other, IMOMask):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MaskLogits:
    """Soft mask; probability of IMO is ``logistic(values)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ContractError("logits must be 2-D")
        if not np.all(np.isfinite(v)):
            raise ContractError("logits must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def probabilities(self) -> np.ndarray:
        return expit(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskLogits):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


def suppress(stream: EventStream, mask: IMOMask, keep: Literal["imo", "ego"] = "imo") -> EventStream:
    """Gate events by the mask value at their pixel.

    ``keep="imo"`` retains events on mask pixels, ``keep="ego"`` the rest.
    """
    if mask.shape != stream.shape:
        raise GeometryMismatchError(f"mask {mask.shape} vs stream {stream.shape}")
    if keep not in ("imo", "ego"):
        raise ContractError(f"keep must be 'imo' or 'ego', got {keep!r}")
    on = mask.values[stream.y, stream.x]
    return stream.take(on if keep == "imo" else ~on)


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float) -> np.ndarray:
    """Sample ``img`` at real coordinates; neighbours outside the image read ``fill``."""
    h, w = img.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(xi, yi):
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        out = np.full(xs.shape, fill, dtype=np.float64)
        out[inside] = img[yi[inside], xi[inside]]
        return out

    return (
        (1 - fx) * (1 - fy) * tap(x0, y0)
        + fx * (1 - fy) * tap(x0 + 1, y0)
        + (1 - fx) * fy * tap(x0, y0 + 1)
        + fx * fy * tap(x0 + 1, y0 + 1)
    )


def warp_mask(logits: MaskLogits, flow: FlowField, dt_p: float, fill: float = FILL_LOGIT) -> MaskLogits:
    """Backward-warp logits ``dt_p`` µs into the future.

    ``out(x) = in(x - d(x))`` with ``d`` the flow rescaled from ``flow.dur_ref``
    to ``dt_p``; sampling is bilinear in logit space.
    """
    if flow.shape != logits.shape:
        raise GeometryMismatchError(f"flow {flow.shape} vs logits {logits.shape}")
    h, w = logits.shape
    du, dv = flow.scaled_to(dt_p)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return MaskLogits(bilinear_sample(logits.values, xs - du, ys - dv, fill))


def threshold(logits: MaskLogits, tau: float = 0.5) -> IMOMask:
    """Binary mask of pixels with ``logistic(logit) >= tau``."""
    if not 0.0 < tau < 1.0:
        raise ContractError(f"tau must lie in (0, 1), got {tau}")
    return IMOMask(expit(logits.values) >= tau)


def dilate(mask: IMOMask, k: int) -> IMOMask:
    """``k`` iterations of 3x3 binary dilation (``k=0`` is the identity)."""
    if k < 0:
        raise ContractError("dilation iterations must be >= 0")
    if k == 0:
        return mask
    # scipy treats iterations=0 as "until convergence", hence the guard above
    return IMOMask(ndimage.binary_dilation(mask.values, structure=_STRUCT_3x3, iterations=k))


def anticipate(logits_now: MaskLogits, flow: FlowField, dt_p: float, tau: float = 0.5) -> IMOMask:
    """Future IMO mask: warp the current logits forward, then threshold."""
    return threshold(warp_mask(logits_now, flow, dt_p), tau)
