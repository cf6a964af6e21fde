"""Event stream data model, slicing and voxel-grid encoding.

Timestamps are integer microseconds and every window is half-open
``[t0, t1)``.  Pixel coordinates follow ``x`` = column, ``y`` = row with the
origin at the top-left corner.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ContractError, InvalidIntervalError


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """An immutable, time-sorted sequence of polarity events.

    Columns are stored as parallel numpy arrays.  Unsorted input is stably
    sorted by timestamp on construction, so events sharing a timestamp keep
    their insertion order.
    """

    width: int
    height: int
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ContractError(f"invalid geometry {self.width}x{self.height}")
        x = np.array(self.x, dtype=np.int64).reshape(-1)
        y = np.array(self.y, dtype=np.int64).reshape(-1)
        t = np.array(self.t, dtype=np.int64).reshape(-1)
        p = np.array(self.p, dtype=np.int8).reshape(-1)
        if not (len(x) == len(y) == len(t) == len(p)):
            raise ContractError("event columns have different lengths")
        if len(x):
            if x.min() < 0 or x.max() >= self.width or y.min() < 0 or y.max() >= self.height:
                raise ContractError("event coordinates outside sensor geometry")
            if not np.all((p == 1) | (p == -1)):
                raise ContractError("polarity must be -1 or +1")
            if np.any(np.diff(t) < 0):
                order = np.argsort(t, kind="stable")
                x, y, t, p = x[order], y[order], t[order], p[order]
        for name, arr in (("x", x), ("y", y), ("t", t), ("p", p)):
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(width, height, z, z, z, z)

    @classmethod
    def from_events(cls, width: int, height: int, events) -> "EventStream":
        events = list(events)
        if not events:
            return cls.empty(width, height)
        x, y, t, p = zip(*events)
        return cls(width, height, x, y, t, p)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None

    def take(self, index) -> "EventStream":
        """Sub-stream selected by a boolean mask or a sorted index array."""
        return EventStream(
            self.width, self.height, self.x[index], self.y[index], self.t[index], self.p[index]
        )


def slice_by_time(stream: EventStream, t0: int, t1: int) -> EventStream:
    """Events with ``t0 <= t < t1``."""
    if t0 >= t1:
        raise InvalidIntervalError(f"empty interval [{t0}, {t1})")
    lo = np.searchsorted(stream.t, t0, side="left")
    hi = np.searchsorted(stream.t, t1, side="left")
    return stream.take(slice(lo, hi))


def slice_by_budget(stream: EventStream, t_ref: int, n: int) -> EventStream:
    """The latest ``n`` events strictly before ``t_ref``, in temporal order.

    Fewer are returned when fewer precede ``t_ref``.
    """
    if n < 0:
        raise ContractError("event budget must be non-negative")
    hi = int(np.searchsorted(stream.t, t_ref, side="left"))
    return stream.take(slice(max(0, hi - n), hi))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Signed ``bins x H x W`` accumulation of the events in ``[t0, t1)``."""

    data: np.ndarray
    t0: int
    t1: int

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def time_bins(t: np.ndarray, bins: int, t0: int, t1: int) -> np.ndarray:
    """Bin index ``min(floor(bins*(t-t0)/(t1-t0)), bins-1)`` in exact integer math."""
    b = (bins * (np.asarray(t, dtype=np.int64) - t0)) // (t1 - t0)
    return np.minimum(b, bins - 1)


def encode_voxel(stream: EventStream, bins: int = 2, t0: int | None = None, t1: int | None = None) -> VoxelGrid:
    """Accumulate signed polarity into ``bins`` temporal bins.

    Each event in ``[t0, t1)`` adds its polarity to exactly one cell; events
    outside the window are ignored.  Without an explicit window the stream's
    own span ``[t_first, t_last + 1)`` is used.
    """
    if bins < 1:
        raise ContractError("bins must be >= 1")
    if t0 is None or t1 is None:
        if not len(stream):
            raise InvalidIntervalError("cannot infer a window from an empty stream")
        t0 = int(stream.t[0]) if t0 is None else t0
        t1 = int(stream.t[-1]) + 1 if t1 is None else t1
    window = slice_by_time(stream, t0, t1)
    data = np.zeros((bins, stream.height, stream.width), dtype=np.float64)
    b = time_bins(window.t, bins, t0, t1)
    np.add.at(data, (b, window.y, window.x), window.p.astype(np.float64))
    data.flags.writeable = False
    return VoxelGrid(data, int(t0), int(t1))
