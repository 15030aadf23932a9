"""Gray-labelled rectangular QAM constellations."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import InvalidDimensionError

__all__ = ["QamConstellation", "qam_map", "qam_demap_hard"]


@dataclass(frozen=True)
class QamConstellation:
    """``order``-ary QAM with per-axis reflected Gray labels and unit mean energy.

    Odd powers of two use a rectangular grid with one more bit on the
    in-phase axis (8-QAM is 4x2). ``points[label]`` is the symbol carrying
    ``label``, whose bits are read MSB first.
    """

    order: int = 4
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = self.order
        if m < 2 or m & (m - 1):
            raise InvalidDimensionError(f"QAM order must be a power of two >= 2, got {m}")
        pts = np.empty(m, dtype=complex)
        levels_i = 2 * np.arange(self.levels_i) - (self.levels_i - 1)
        levels_q = 2 * np.arange(self.levels_q) - (self.levels_q - 1)
        for ji, ai in enumerate(levels_i):
            for jq, aq in enumerate(levels_q):
                label = ((ji ^ (ji >> 1)) << self.bits_q) | (jq ^ (jq >> 1))
                pts[label] = ai + 1j * aq
        pts *= self.step
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def bits_per_symbol(self) -> int:
        return int(self.order).bit_length() - 1

    @property
    def bits_i(self) -> int:
        return (self.bits_per_symbol + 1) // 2

    @property
    def bits_q(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def levels_i(self) -> int:
        return 1 << self.bits_i

    @property
    def levels_q(self) -> int:
        return 1 << self.bits_q

    @cached_property
    def step(self) -> float:
        # half the spacing between neighbouring levels, chosen for unit energy
        li, lq = self.levels_i, self.levels_q
        energy = (li * li - 1) / 3 + (lq * lq - 1) / 3
        return 1.0 / np.sqrt(energy)

    @property
    def alpha(self) -> float:
        return (4 - 4 / np.sqrt(self.order)) / np.log2(self.order)

    @property
    def beta(self) -> float:
        return 3 / (self.order - 1)

    def bits_to_labels(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        b = self.bits_per_symbol
        if bits.ndim != 1 or bits.size % b:
            raise InvalidDimensionError(f"bit count must be a multiple of {b}, got {bits.size}")
        weights = 1 << np.arange(b - 1, -1, -1)
        return bits.reshape(-1, b) @ weights

    def labels_to_bits(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64).ravel()
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()

    def slice(self, symbols) -> np.ndarray:
        """Hard decision: Gray label of the nearest constellation point."""
        return kernels.slice_labels(symbols, 1.0 / self.step, self.levels_i, self.levels_q, self.bits_q)


def qam_map(bits, constellation: QamConstellation) -> np.ndarray:
    return constellation.points[constellation.bits_to_labels(bits)]


def qam_demap_hard(symbols, constellation: QamConstellation) -> np.ndarray:
    return constellation.labels_to_bits(constellation.slice(np.asarray(symbols).ravel()))
