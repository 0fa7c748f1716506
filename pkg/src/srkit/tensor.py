"""Dense NCHW tensor conventions and shape validation.

Feature maps are plain numpy arrays of shape ``(n, c, h, w)`` with dtype
float32, stored row-major, so the flat data order is batch, then channel,
then row, then column. Production code stays in float32 end to end;
float64 appears only inside finite-difference oracles, which rerun the
same (dtype-preserving) ops on upcast copies.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError

AXIS_NAMES = ("batch", "channel", "height", "width")


class Shape(NamedTuple):
    """Extents of a rank-4 feature map."""

    n: int
    c: int
    h: int
    w: int


def check_nchw(x: np.ndarray, name: str = "x") -> Shape:
    """Validate a rank-4 feature map and return its Shape."""
    if x.ndim != 4:
        raise DimensionError(f"{name} must be rank 4 (n,c,h,w), got rank {x.ndim}")
    for axis, extent in enumerate(x.shape):
        if extent < 1:
            raise DimensionError(f"{name} has empty {AXIS_NAMES[axis]} axis")
    return Shape(*x.shape)


def check_axis(actual: int, expected: int, axis: str, name: str = "x") -> None:
    if actual != expected:
        raise DimensionError(f"{name}: {axis} axis is {actual}, expected {expected}")

