"""Geometric interval grid ``I_0 = [0, 1]``, ``I_l = ((1+eta)^(l-1), (1+eta)^l]``.

All endpoints are kept as exact rationals; ``float`` arrays are derived for
the numeric code paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .instance import as_fraction

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class Interval:
    index: int
    left: Fraction
    right: Fraction
    length: Fraction
    notational_left: Fraction


@dataclass(frozen=True)
class IntervalGrid:
    eta: Fraction
    horizon: Fraction
    count: int  # L; intervals are 0..L
    intervals: tuple[Interval, ...]

    @property
    def L(self) -> int:
        return self.count

    def __len__(self) -> int:
        return self.count + 1

    def length(self, l: int) -> Fraction:
        return self.intervals[l].length

    def notational_left(self, l: int) -> Fraction:
        """``(1+eta)^(l-1)`` with the ``l = 0`` value taken as 1/2."""
        return self.intervals[l].notational_left

    @property
    def lengths(self) -> np.ndarray:
        return np.array([float(iv.length) for iv in self.intervals])

    @property
    def notational_lefts(self) -> np.ndarray:
        return np.array([float(iv.notational_left) for iv in self.intervals])

    def eligible(self, l: int, release) -> bool:
        return self.intervals[l].notational_left >= as_fraction(release)


def build_grid(T, eta) -> IntervalGrid:
    T = as_fraction(T)
    eta = as_fraction(eta)
    if T < 0:
        raise ValueError(f"horizon must be nonnegative, got {T}")
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    base = 1 + eta
    L, power = 0, Fraction(1)
    while power < T + 1:
        L += 1
        power *= base
    intervals = [Interval(0, Fraction(0), Fraction(1), Fraction(1), HALF)]
    left = Fraction(1)
    for l in range(1, L + 1):
        right = left * base
        intervals.append(Interval(l, left, right, right - left, left))
        left = right
    return IntervalGrid(eta, T, L, tuple(intervals))


def eligible_intervals(grid: IntervalGrid, release) -> list[int]:
    r = as_fraction(release)
    return [iv.index for iv in grid.intervals if iv.notational_left >= r]


def priority_stamp(grid: IntervalGrid, l: int) -> Fraction:
    """True left endpoint of ``I_l`` (0 for ``l = 0``)."""
    if not 0 <= l <= grid.count:
        raise IndexError(f"interval {l} outside 0..{grid.count}")
    return grid.intervals[l].left
