"""Patch-token keep-sets derived from IMO masks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .suppression import IMOMask, dilate


@dataclass(frozen=True)
class TokenGrid:
    patch: int
    rows: int
    cols: int
    kept: tuple[int, ...]

    @property
    def total(self) -> int:
        return self.rows * self.cols

    def to_json(self) -> dict:
        return {"patch": self.patch, "grid": [self.rows, self.cols], "kept": list(self.kept),
                "utilization": utilization(self)}


def mask_to_tokens(mask: IMOMask, patch: int, k_dilate: int = 0) -> TokenGrid:
    """Keep every patch that contains at least one (dilated) IMO pixel.

    Patches on the right and bottom edges may cover fewer pixels and still
    count as full tokens.
    """
    if patch < 1:
        raise ContractError("patch size must be >= 1")
    m = dilate(mask, k_dilate).values
    h, w = m.shape
    rows, cols = math.ceil(h / patch), math.ceil(w / patch)
    padded = np.zeros((rows * patch, cols * patch), dtype=bool)
    padded[:h, :w] = m
    hit = padded.reshape(rows, patch, cols, patch).any(axis=(1, 3))
    return TokenGrid(patch, rows, cols, tuple(int(i) for i in np.flatnonzero(hit)))


def utilization(tg: TokenGrid) -> float:
    return len(tg.kept) / tg.total
