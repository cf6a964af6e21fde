"""Dense displacement fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement ``(u, v)`` in pixels accumulated over ``dur_ref`` µs.

    ``u`` is the column (x) component, ``v`` the row (y) component.  The
    velocity at a pixel is ``u / dur_ref``.
    """

    u: np.ndarray
    v: np.ndarray
    dur_ref: int

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64)
        v = np.array(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ContractError("flow components must be equal-shape 2-D arrays")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ContractError("flow must be finite")
        if self.dur_ref <= 0:
            raise ContractError("flow reference duration must be positive")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "dur_ref", int(self.dur_ref))

    @classmethod
    def constant(cls, height: int, width: int, du: float, dv: float, dur_ref: int) -> "FlowField":
        return cls(np.full((height, width), float(du)), np.full((height, width), float(dv)), dur_ref)

    @classmethod
    def zeros(cls, height: int, width: int, dur_ref: int = 1) -> "FlowField":
        return cls.constant(height, width, 0.0, 0.0, dur_ref)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def scaled_to(self, duration: float) -> tuple[np.ndarray, np.ndarray]:
        """Displacement over ``duration`` µs assuming constant velocity."""
        f = duration / self.dur_ref
        return self.u * f, self.v * f

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlowField):
            return NotImplemented
        return (
            self.dur_ref == other.dur_ref
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )

    __hash__ = None
