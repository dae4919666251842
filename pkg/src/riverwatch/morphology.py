"""Binary morphology with square structuring elements.

Pixels outside the image count as background for both erosion and dilation,
so structures touching the border erode away and dilation never wraps.
Square all-ones kernels are separable; both operators run as two axis passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Kernel:
    """Square all-ones structuring element with its anchor at the center."""

    size: int = 5

    def __post_init__(self):
        if not (isinstance(self.size, int) and self.size > 0 and self.size % 2 == 1):
            raise ValueError(f"kernel size must be an odd positive int, got {self.size!r}")

    @property
    def radius(self) -> int:
        return self.size // 2


def _axis_pass(mask: np.ndarray, size: int, axis: int, erode_pass: bool) -> np.ndarray:
    r = size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(mask, pad, constant_values=False)
    if erode_pass:
        out = np.ones_like(mask)
    else:
        out = np.zeros_like(mask)
    length = mask.shape[axis]
    index: list = [slice(None), slice(None)]
    for offset in range(size):
        index[axis] = slice(offset, offset + length)
        if erode_pass:
            out &= padded[tuple(index)]
        else:
            out |= padded[tuple(index)]
    return out


def _check_mask(mask: np.ndarray) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.dtype != bool:
        raise ValueError("mask must be a 2-D boolean array")
    return arr


def erode(mask: np.ndarray, kernel: Kernel = Kernel()) -> np.ndarray:
    """Each output pixel is the AND of the input over the kernel window."""
    arr = _check_mask(mask)
    return _axis_pass(_axis_pass(arr, kernel.size, 0, True), kernel.size, 1, True)


def dilate(mask: np.ndarray, kernel: Kernel = Kernel()) -> np.ndarray:
    """Each output pixel is the OR of the input over the kernel window."""
    arr = _check_mask(mask)
    return _axis_pass(_axis_pass(arr, kernel.size, 0, False), kernel.size, 1, False)


def opening(mask: np.ndarray, kernel: Kernel = Kernel()) -> np.ndarray:
    """Erosion followed by dilation; removes features smaller than the kernel."""
    return dilate(erode(mask, kernel), kernel)
