"""Deterministic synthetic scenes with oracle labels, masks and flow.

The scene is a piecewise-constant intensity image, rendered at integer pixel
positions every micro-step.  Any pixel whose intensity changes between two
consecutive renders emits one event, with polarity set by the sign of the
change.

* The background is a random stripe texture (levels 0/1) that translates at
  ``camera_velocity``, the image-plane motion the camera induces.
* IMOs are rectangles or disks at level 2.  They occlude the background and
  translate at their own velocity.

This edge-crossing model is not a photometric sensor simulation.
"""
from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError
from .events import EventStream
from .flow import FlowField
from .suppression import IMOMask

US = 1_000_000


@dataclass(frozen=True)
class IMOSpec:
    """A moving object.

    ``position`` is the top-left corner of the bounding box.  ``size`` is
    ``(w, h)``; for a disk ``size[0]`` is the diameter.
    """

    shape: str = "rectangle"
    size: tuple[float, float] = (24.0, 18.0)
    position: tuple[float, float] = (30.0, 30.0)
    velocity: tuple[float, float] = (100.0, 60.0)

    def __post_init__(self):
        if self.shape not in ("rectangle", "disk"):
            raise ContractError(f"unknown IMO shape {self.shape!r}")
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        object.__setattr__(self, "position", tuple(float(s) for s in self.position))
        object.__setattr__(self, "velocity", tuple(float(s) for s in self.velocity))
        if min(self.size) <= 0:
            raise ContractError("IMO size must be positive")

    def at(self, t_us: int) -> tuple[float, float]:
        return (self.position[0] + self.velocity[0] * t_us / US,
                self.position[1] + self.velocity[1] * t_us / US)

    def footprint(self, t_us: int, height: int, width: int) -> np.ndarray:
        px, py = self.at(t_us)
        xs = np.arange(width, dtype=np.float64)
        ys = np.arange(height, dtype=np.float64)
        if self.shape == "rectangle":
            cols = (xs >= px) & (xs < px + self.size[0])
            rows = (ys >= py) & (ys < py + self.size[1])
            return rows[:, None] & cols[None, :]
        r = self.size[0] / 2.0
        return ((ys[:, None] - (py + r)) ** 2 + (xs[None, :] - (px + r)) ** 2) < r * r


@dataclass(frozen=True)
class SceneConfig:
    """Scene geometry and motion.  Times are µs, velocities px/s.

    ``edge_density`` is the number of background stripe edges per 100 px
    along each axis.  With ``clear_imo_background`` set, the background is
    blanked inside the region the IMOs sweep, so background edges never
    overlap an IMO.
    """

    width: int = 128
    height: int = 96
    duration: int = 300_000
    camera_velocity: tuple[float, float] = (40.0, 0.0)
    edge_density: float = 4.0
    imos: tuple[IMOSpec, ...] = (IMOSpec(),)
    cadence: int = 100_000
    step: int = 1_000
    seed: int = 0
    clear_imo_background: bool = False

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ContractError("scene geometry must be positive")
        if self.duration <= 0 or self.cadence <= 0 or self.step <= 0:
            raise ContractError("duration, cadence and step must be positive")
        if self.duration % self.cadence:
            raise ContractError("cadence must divide duration")
        if self.duration % self.step:
            raise ContractError("micro-step must divide duration")
        if self.edge_density < 0:
            raise ContractError("edge density must be non-negative")
        imos = tuple(i if isinstance(i, IMOSpec) else IMOSpec(**i) for i in self.imos)
        object.__setattr__(self, "imos", imos)
        object.__setattr__(self, "camera_velocity", tuple(float(v) for v in self.camera_velocity))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["imos"] = [asdict(i) for i in self.imos]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        d["imos"] = tuple(IMOSpec(**i) for i in d.get("imos", ()))
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_scene(seed: int = 0) -> SceneConfig:
    """128x96 scene: panning textured background plus one rectangle IMO."""
    return SceneConfig(seed=seed)


def single_edge_scene(seed: int = 0) -> SceneConfig:
    """One vertical edge crossing a 64x64 frame at 8 px per 50 ms window.

    The edge is the right side of a rectangle whose other sides lie off-frame,
    so every row sees exactly one crossing per column: 512 events in total.
    """
    return SceneConfig(
        width=64, height=64, duration=50_000, cadence=50_000,
        camera_velocity=(0.0, 0.0), edge_density=0.0,
        imos=(IMOSpec("rectangle", (120.0, 84.0), (-100.0, -10.0), (160.0, 0.0)),),
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class LabeledStream:
    stream: EventStream
    labels: np.ndarray
    masks: dict[int, IMOMask]
    flows: dict[int, FlowField]
    config: SceneConfig
    warnings: tuple[str, ...] = field(default=())


def _occupancy(cfg: SceneConfig, t_us: int) -> np.ndarray:
    occ = np.zeros((cfg.height, cfg.width), dtype=bool)
    for spec in cfg.imos:
        occ |= spec.footprint(t_us, cfg.height, cfg.width)
    return occ


class _Renderer:
    def __init__(self, cfg: SceneConfig):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 0])
        secs = cfg.duration / US
        self.edges = []
        for extent, vel in ((cfg.width, cfg.camera_velocity[0]), (cfg.height, cfg.camera_velocity[1])):
            lo, hi = -abs(vel) * secs - 2.0, extent + abs(vel) * secs + 2.0
            n = int(round(cfg.edge_density / 100.0 * (hi - lo)))
            self.edges.append(np.sort(rng.uniform(lo, hi, n)))
        self.blank = None
        if cfg.clear_imo_background and cfg.imos:
            swept = np.zeros((cfg.height, cfg.width), dtype=bool)
            for t in range(0, cfg.duration + 1, cfg.step):
                swept |= self.imo(t)
            self.blank = np.zeros_like(swept)
            ys, xs = np.nonzero(swept)
            if len(xs):
                self.blank[max(ys.min() - 1, 0):ys.max() + 2, max(xs.min() - 1, 0):xs.max() + 2] = True

    def background(self, t_us: int) -> np.ndarray:
        cfg = self.cfg
        vx, vy = cfg.camera_velocity
        cols = np.searchsorted(self.edges[0], np.arange(cfg.width) - vx * t_us / US, side="right") % 2
        rows = np.searchsorted(self.edges[1], np.arange(cfg.height) - vy * t_us / US, side="right") % 2
        bg = (rows[:, None] + cols[None, :]) % 2
        if self.blank is not None:
            bg[self.blank] = 0
        return bg

    def imo(self, t_us: int) -> np.ndarray:
        return _occupancy(self.cfg, t_us)

    def render(self, t_us: int):
        occ = self.imo(t_us)
        return np.where(occ, 2, self.background(t_us)).astype(np.int8), occ


def gt_future_mask(scene, t_us: int) -> IMOMask:
    """Analytic IMO occupancy at ``t_us``, from the config rather than events.

    ``scene`` is a :class:`SceneConfig` or a :class:`LabeledStream`.
    """
    cfg = scene.config if isinstance(scene, LabeledStream) else scene
    return IMOMask(_occupancy(cfg, t_us))


def gt_swept_mask(scene, t0: int, t1: int) -> IMOMask:
    """Union of IMO footprints at every micro-step boundary in ``[t0, t1]``."""
    cfg = scene.config if isinstance(scene, LabeledStream) else scene
    occ = np.zeros((cfg.height, cfg.width), dtype=bool)
    start = (t0 // cfg.step) * cfg.step
    for t in range(start, t1 + cfg.step, cfg.step):
        occ |= gt_future_mask(cfg, min(t, t1)).values
    return IMOMask(occ)


def gt_flow(cfg: SceneConfig, t0: int, t1: int) -> FlowField:
    """Displacement over ``[t0, t1)`` indexed by pixel.

    Pixels an IMO covers at either end of the interval take that IMO's
    displacement.  All other pixels take the camera-induced displacement.
    """
    dur = t1 - t0
    u = np.full((cfg.height, cfg.width), cfg.camera_velocity[0] * dur / US)
    v = np.full((cfg.height, cfg.width), cfg.camera_velocity[1] * dur / US)
    for spec in cfg.imos:
        cover = spec.footprint(t0, cfg.height, cfg.width) | spec.footprint(t1, cfg.height, cfg.width)
        u[cover] = spec.velocity[0] * dur / US
        v[cover] = spec.velocity[1] * dur / US
    return FlowField(u, v, dur)


def generate(cfg: SceneConfig) -> LabeledStream:
    """Simulate the scene and return events, oracle labels, GT masks and GT flow.

    Within each micro-step, event timestamps are drawn without replacement
    from the step's microseconds (seeded), so they are unique whenever a
    step emits at most ``step`` events.
    """
    r = _Renderer(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    xs, ys, ts, ps, ls = [], [], [], [], []
    prev, prev_occ = r.render(0)
    for t in range(0, cfg.duration, cfg.step):
        cur, occ = r.render(t + cfg.step)
        diff = cur.astype(np.int16) - prev
        yy, xx = np.nonzero(diff)
        n = len(xx)
        if n:
            jitter = rng.choice(cfg.step, size=n, replace=n > cfg.step)
            order = np.argsort(jitter, kind="stable")
            xs.append(xx[order])
            ys.append(yy[order])
            ts.append(t + jitter[order])
            ps.append(np.sign(diff[yy, xx])[order])
            ls.append((prev_occ | occ)[yy, xx][order])
        prev, prev_occ = cur, occ
    cat = lambda a, dt: np.concatenate(a).astype(dt) if a else np.zeros(0, dtype=dt)
    stream = EventStream(cfg.width, cfg.height, cat(xs, np.int64), cat(ys, np.int64), cat(ts, np.int64), cat(ps, np.int8))
    labels = cat(ls, np.uint8)
    labels.flags.writeable = False

    masks = {t: gt_future_mask(cfg, t) for t in range(0, cfg.duration + 1, cfg.cadence)}
    flows = {t: gt_flow(cfg, t, t + cfg.cadence) for t in range(0, cfg.duration, cfg.cadence)}
    warn = []
    for i, spec in enumerate(cfg.imos):
        for t in masks:
            if not spec.footprint(t, cfg.height, cfg.width).any():
                warn.append(f"IMO {i} is outside the frame at t={t}us")
    for w in warn:
        _warnings.warn(w, stacklevel=2)
    return LabeledStream(stream, labels, masks, flows, cfg, tuple(warn))
