"""Sinusoidal time encoding and time-conditioned cross-attention.

A single encoded target time is broadcast as the query at every spatial
position.  Keys and values are the flattened feature vectors.  The batch
axis is fixed to 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, GeometryMismatchError


def positional_encode(dt: float, d: int) -> np.ndarray:
    """``d``-dim encoding: ``sin(w_k dt)`` at even and ``cos(w_k dt)`` at odd slots.

    ``w_k = 10000 ** (-2k/d)``.  ``dt`` is in seconds.
    """
    if d < 2 or d % 2:
        raise ContractError(f"encoding dimension must be even and >= 2, got {d}")
    k = np.arange(d // 2)
    omega = 1.0 / 10000.0 ** (2 * k / d)
    out = np.empty(d, dtype=np.float64)
    out[0::2] = np.sin(omega * dt)
    out[1::2] = np.cos(omega * dt)
    return out


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    """Per-head projections ``wq, wk, wv`` of shape ``(heads, C, C//heads)`` and ``wo`` ``(C, C)``."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    seed: int = 0

    def __post_init__(self):
        h, c, dk = np.shape(self.wq)
        if c % h or dk != c // h:
            raise ContractError("channel count must be divisible by the head count")
        for name in ("wq", "wk", "wv"):
            if np.shape(getattr(self, name)) != (h, c, dk):
                raise ContractError(f"{name} has shape {np.shape(getattr(self, name))}")
        if np.shape(self.wo) != (c, c):
            raise ContractError("output projection must be C x C")
        for name in ("wq", "wk", "wv", "wo"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(a)):
                raise ContractError(f"{name} is not finite")
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def channels(self) -> int:
        return self.wo.shape[0]

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def init(cls, channels: int = 64, heads: int = 4, seed: int = 0) -> "AttentionWeights":
        """Seeded uniform(-1/sqrt(C), 1/sqrt(C)) initialisation."""
        if heads < 1 or channels % heads:
            raise ContractError("channel count must be divisible by the head count")
        rng = np.random.default_rng(seed)
        lim = 1.0 / np.sqrt(channels)
        dk = channels // heads
        draw = lambda *shape: rng.uniform(-lim, lim, size=shape)
        return cls(draw(heads, channels, dk), draw(heads, channels, dk), draw(heads, channels, dk),
                   draw(channels, channels), seed)

    @classmethod
    def identity(cls, channels: int, heads: int = 1) -> "AttentionWeights":
        """Projections that slice the identity (useful for hand checks)."""
        dk = channels // heads
        eye = np.eye(channels)
        per_head = np.stack([eye[:, i * dk:(i + 1) * dk] for i in range(heads)])
        return cls(per_head, per_head.copy(), per_head.copy(), eye)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AttentionWeights):
            return NotImplemented
        return self.seed == other.seed and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in ("wq", "wk", "wv", "wo")
        )

    __hash__ = None


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_attention_forward(features: np.ndarray, t_enc: np.ndarray, w: AttentionWeights,
                            return_attention: bool = False):
    """Multi-head cross-attention of a broadcast time query over spatial features.

    ``features`` is ``(C, H, W)``.  Returns a ``(C, H, W)`` array, plus
    ``(heads, H*W, H*W)`` attention weights when ``return_attention`` is set.

    Every query row is the same vector, so each head's attention row is
    computed once and then broadcast.  The result is bit-identical at every
    spatial position.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ContractError("features must be (C, H, W)")
    c, h, wd = features.shape
    t_enc = np.asarray(t_enc, dtype=np.float64).reshape(-1)
    if c != w.channels or t_enc.shape[0] != c:
        raise GeometryMismatchError(f"channels: features {c}, encoding {t_enc.shape[0]}, weights {w.channels}")
    n = h * wd
    seq = features.reshape(c, n).T  # (HW, C)
    dk = c // w.heads
    heads_out = []
    rows = []
    for i in range(w.heads):
        q = t_enc @ w.wq[i]
        k = seq @ w.wk[i]
        v = seq @ w.wv[i]
        a = _softmax((k @ q) / np.sqrt(dk))
        rows.append(a)
        heads_out.append(a @ v)
    out_row = np.concatenate(heads_out) @ w.wo  # (C,)
    out = np.broadcast_to(out_row[:, None, None], (c, h, wd)).copy()
    if return_attention:
        attn = np.stack([np.broadcast_to(r, (n, n)) for r in rows])
        return out, attn
    return out


def atc(features: np.ndarray, dt: float, w: AttentionWeights) -> np.ndarray:
    """Time-conditioned embedding of ``features`` for a target offset ``dt`` (seconds)."""
    return cross_attention_forward(features, positional_encode(dt, w.channels), w)
