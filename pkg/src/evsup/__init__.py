"""Anticipatory motion suppression for event-camera streams."""
from .errors import (
    ContractError,
    EmptyInputError,
    EvsupError,
    FormatError,
    GeometryMismatchError,
    InvalidIntervalError,
)
from .events import Event, EventStream, VoxelGrid, encode_voxel, slice_by_budget, slice_by_time
from .flow import FlowField
from .suppression import IMOMask, MaskLogits, anticipate, dilate, suppress, threshold, warp_mask

__version__ = "0.1.0"
