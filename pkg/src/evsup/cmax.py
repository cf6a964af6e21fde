"""Event transport, the Image of Warped Events and contrast maximization.

Flow is parametrised per square tile.  Each event's pixel selects its tile,
and the event is moved along that tile's displacement to a reference time.
The transported points are splatted bilinearly, and the IWE variance is the
sharpness score to maximise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, EmptyInputError, GeometryMismatchError, InvalidIntervalError
from .events import EventStream
from .flow import FlowField


@dataclass(frozen=True, eq=False)
class IWE:
    intensity: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape

    @property
    def mass(self) -> float:
        return float(self.intensity.sum())


@dataclass(frozen=True, eq=False)
class TileFlowParams:
    """Piecewise-constant flow on ``tile x tile`` blocks (remainder tiles at the edges).

    ``u`` and ``v`` have shape ``(rows, cols)`` and hold displacement in pixels
    over ``dur_ref`` µs.
    """

    height: int
    width: int
    tile: int
    u: np.ndarray
    v: np.ndarray
    dur_ref: int

    def __post_init__(self):
        if self.tile < 1:
            raise ContractError("tile size must be >= 1")
        if self.dur_ref <= 0:
            raise ContractError("flow reference duration must be positive")
        grid = (math.ceil(self.height / self.tile), math.ceil(self.width / self.tile))
        u = np.array(self.u, dtype=np.float64).reshape(grid)
        v = np.array(self.v, dtype=np.float64).reshape(grid)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, height: int, width: int, tile: int, dur_ref: int) -> "TileFlowParams":
        grid = (math.ceil(height / tile), math.ceil(width / tile))
        return cls(height, width, tile, np.zeros(grid), np.zeros(grid), dur_ref)

    @property
    def grid(self) -> tuple[int, int]:
        return self.u.shape

    def tile_index(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Flat (row-major) tile index of each pixel."""
        return (np.asarray(y) // self.tile) * self.grid[1] + np.asarray(x) // self.tile

    def to_flow(self) -> FlowField:
        """Materialise as a dense field, nearest (constant) within each tile."""
        rows = np.arange(self.height) // self.tile
        cols = np.arange(self.width) // self.tile
        return FlowField(self.u[np.ix_(rows, cols)], self.v[np.ix_(rows, cols)], self.dur_ref)


def transport_events(stream: EventStream, flow: FlowField, t_ref: float) -> np.ndarray:
    """Move each event to ``t_ref`` along the flow sampled at its own pixel.

    Returns an ``(N, 2)`` array of ``(x', y')``; every point has unit weight and
    polarity is ignored.
    """
    if flow.shape != stream.shape:
        raise GeometryMismatchError(f"flow {flow.shape} vs stream {stream.shape}")
    s = (t_ref - stream.t) / flow.dur_ref
    xp = stream.x + s * flow.u[stream.y, stream.x]
    yp = stream.y + s * flow.v[stream.y, stream.x]
    return np.column_stack([xp, yp])


def _taps(xp: np.ndarray, yp: np.ndarray):
    """Integer corners and fractional offsets of a bilinear splat."""
    x0 = np.floor(xp)
    y0 = np.floor(yp)
    fx = xp - x0
    fy = yp - y0
    return x0.astype(np.int64), y0.astype(np.int64), fx, fy


def _corners(x0, y0, fx, fy):
    # (dx, dy, weight, d weight/dx', d weight/dy')
    return (
        (0, 0, (1 - fx) * (1 - fy), -(1 - fy), -(1 - fx)),
        (1, 0, fx * (1 - fy), (1 - fy), -fx),
        (0, 1, (1 - fx) * fy, -fy, (1 - fx)),
        (1, 1, fx * fy, fy, fx),
    )


def _splat(xp: np.ndarray, yp: np.ndarray, height: int, width: int):
    """Bilinear splat restricted to the bounding box of the touched pixels.

    Returns ``(image, x_lo, y_lo)`` where ``image`` covers columns
    ``x_lo..`` and rows ``y_lo..`` of the full frame.
    """
    x0, y0, fx, fy = _taps(xp, yp)
    if len(xp) == 0:
        return np.zeros((0, 0)), 0, 0
    x_lo = int(max(0, min(x0.min(), width - 1)))
    y_lo = int(max(0, min(y0.min(), height - 1)))
    x_hi = int(min(width, max(x0.max() + 2, 1)))
    y_hi = int(min(height, max(y0.max() + 2, 1)))
    rw, rh = max(x_hi - x_lo, 0), max(y_hi - y_lo, 0)
    acc = np.zeros(rw * rh, dtype=np.float64)
    if rw and rh:
        for dx, dy, w, _, _ in _corners(x0, y0, fx, fy):
            xi = x0 + dx
            yi = y0 + dy
            ok = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
            idx = (yi[ok] - y_lo) * rw + (xi[ok] - x_lo)
            acc += np.bincount(idx, weights=w[ok], minlength=rw * rh)
    return acc.reshape(rh, rw), x_lo, y_lo


def build_iwe(points: np.ndarray, height: int, width: int) -> IWE:
    """Splat unit-weight points bilinearly onto their four neighbouring pixels.

    Contributions to pixels outside the frame are dropped.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    img = np.zeros((height, width), dtype=np.float64)
    roi, x_lo, y_lo = _splat(points[:, 0], points[:, 1], height, width)
    img[y_lo:y_lo + roi.shape[0], x_lo:x_lo + roi.shape[1]] = roi
    return IWE(img)


def variance_focus(iwe: IWE) -> float:
    """Population variance of the IWE pixel intensities."""
    return _variance(iwe.intensity, iwe.intensity.size)


def _variance(roi: np.ndarray, n_pixels: int) -> float:
    # pixels outside the roi are zero, so only the two sums are needed
    s1 = roi.sum()
    s2 = np.square(roi).sum()
    return float(s2 / n_pixels - (s1 / n_pixels) ** 2)


def _displaced(stream: EventStream, du: np.ndarray, dv: np.ndarray, t_ref: float, dur_ref: int):
    s = (t_ref - stream.t) / dur_ref
    return stream.x + s * du, stream.y + s * dv, s


def contrast_objective(stream: EventStream, params: TileFlowParams, t_ref: float) -> float:
    """IWE variance after transporting with the tiled flow (to be maximised)."""
    if (params.height, params.width) != stream.shape:
        raise GeometryMismatchError("tile parameters do not match stream geometry")
    k = params.tile_index(stream.x, stream.y)
    xp, yp, _ = _displaced(stream, params.u.ravel()[k], params.v.ravel()[k], t_ref, params.dur_ref)
    roi, _, _ = _splat(xp, yp, params.height, params.width)
    return _variance(roi, params.height * params.width)


def _point_gradients(xp, yp, height, width):
    """Objective value and ``d variance / d (x'_i, y'_i)`` for each point."""
    n_pix = height * width
    roi, x_lo, y_lo = _splat(xp, yp, height, width)
    value = _variance(roi, n_pix)
    gx = np.zeros_like(xp)
    gy = np.zeros_like(yp)
    if roi.size == 0:
        return value, gx, gy
    centered = (roi - roi.sum() / n_pix) * (2.0 / n_pix)
    x0, y0, fx, fy = _taps(xp, yp)
    for dx, dy, _, wx, wy in _corners(x0, y0, fx, fy):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        c = centered[yi[ok] - y_lo, xi[ok] - x_lo]
        gx[ok] += c * wx[ok]
        gy[ok] += c * wy[ok]
    return value, gx, gy


def contrast_gradient(stream: EventStream, params: TileFlowParams, t_ref: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of :func:`contrast_objective` w.r.t. each tile's ``(u, v)``.

    Returns two ``(rows, cols)`` arrays.  The splat is piecewise linear in the
    point positions, so the gradient is exact except where a point sits on an
    integer coordinate.
    """
    if (params.height, params.width) != stream.shape:
        raise GeometryMismatchError("tile parameters do not match stream geometry")
    k = params.tile_index(stream.x, stream.y)
    xp, yp, s = _displaced(stream, params.u.ravel()[k], params.v.ravel()[k], t_ref, params.dur_ref)
    _, gx, gy = _point_gradients(xp, yp, params.height, params.width)
    n_tiles = params.u.size
    du = np.bincount(k, weights=s * gx, minlength=n_tiles).reshape(params.grid)
    dv = np.bincount(k, weights=s * gy, minlength=n_tiles).reshape(params.grid)
    return du, dv


@dataclass(frozen=True)
class CmaxConfig:
    """Search settings: a coarse displacement grid, then normalised gradient ascent.

    Displacements are pixels per window.  A refinement step that does not
    increase the objective is rejected and the step length halved.
    """

    grid_range: float = 16.0
    grid_step: float = 1.0
    iters: int = 50
    step: float = 0.05

    def __post_init__(self):
        if self.grid_range < 0 or self.grid_step <= 0 or self.iters < 0 or self.step <= 0:
            raise ContractError(f"invalid cmax config {self}")

    def candidates(self) -> np.ndarray:
        n = int(math.floor(self.grid_range / self.grid_step + 1e-9))
        return np.arange(-n, n + 1) * self.grid_step


def _fit_tile(x, y, s, height, width, cfg: CmaxConfig) -> tuple[float, float]:
    def score(du, dv):
        roi, _, _ = _splat(x + s * du, y + s * dv, height, width)
        return _variance(roi, height * width)

    cands = cfg.candidates()
    best = (-np.inf, 0.0, 0.0)
    # candidates ordered by distance from zero so ties resolve to the smallest motion
    order = sorted(((a, b) for a in cands for b in cands), key=lambda ab: (ab[0] ** 2 + ab[1] ** 2, ab))
    for du, dv in order:
        f = score(du, dv)
        if f > best[0]:
            best = (f, float(du), float(dv))
    f, du, dv = best
    step = cfg.step
    for _ in range(cfg.iters):
        _, gx, gy = _point_gradients(x + s * du, y + s * dv, height, width)
        g = np.array([np.dot(s, gx), np.dot(s, gy)])
        norm = math.hypot(*g)
        if norm == 0.0:
            break
        nu, nv = du + step * g[0] / norm, dv + step * g[1] / norm
        fn = score(nu, nv)
        if fn > f:
            f, du, dv = fn, nu, nv
        else:
            step *= 0.5
    return du, dv


def estimate_flow_params(
    stream: EventStream,
    tile: int,
    config: CmaxConfig | None = None,
    t0: int | None = None,
    t1: int | None = None,
) -> TileFlowParams:
    """Per-tile contrast-maximisation fit of the displacement over ``[t0, t1)``.

    Events are transported to ``t0``.  Each tile is fitted using only its own
    events, so tiles are independent.  A tile without events gets zero motion.
    """
    cfg = config or CmaxConfig()
    if len(stream) == 0:
        raise EmptyInputError("contrast maximization needs at least one event")
    t0 = int(stream.t[0]) if t0 is None else int(t0)
    t1 = int(stream.t[-1]) + 1 if t1 is None else int(t1)
    if t0 >= t1:
        raise InvalidIntervalError(f"empty interval [{t0}, {t1})")
    params = TileFlowParams.zeros(stream.height, stream.width, tile, t1 - t0)
    k = params.tile_index(stream.x, stream.y)
    s_all = (t0 - stream.t) / (t1 - t0)
    u = params.u.ravel().copy()
    v = params.v.ravel().copy()
    for ti in np.unique(k):
        sel = k == ti
        u[ti], v[ti] = _fit_tile(
            stream.x[sel].astype(np.float64), stream.y[sel].astype(np.float64), s_all[sel],
            stream.height, stream.width, cfg,
        )
    return TileFlowParams(stream.height, stream.width, tile, u, v, t1 - t0)


def estimate_flow_cmax(
    stream: EventStream,
    tile: int,
    config: CmaxConfig | None = None,
    t0: int | None = None,
    t1: int | None = None,
) -> FlowField:
    """Dense flow (displacement over the window length) by contrast maximization."""
    return estimate_flow_params(stream, tile, config, t0, t1).to_flow()
