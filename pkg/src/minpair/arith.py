"""Pair coding, dyadic valuation classes, and exact partial densities.

Ordered pairs of naturals are coded with the Cantor pairing function.  The
positive naturals split into disjoint classes by 2-adic valuation (class e
holds the n divisible by 2^e but not 2^(e+1)); class e has density
2^-(e+1), so the classes partition the positive naturals with geometric
weight.  Densities of finite initial segments are exact rationals.
"""

from __future__ import annotations

from fractions import Fraction
from math import isqrt
from typing import Iterable, NamedTuple


def pair(x: int, y: int) -> int:
    """Cantor code (x+y)(x+y+1)/2 + y of the ordered pair (x, y)."""
    if x < 0 or y < 0:
        raise ValueError(f"pair requires naturals, got ({x}, {y})")
    s = x + y
    return s * (s + 1) // 2 + y


def unpair(code: int) -> tuple[int, int]:
    """Inverse of pair."""
    if code < 0:
        raise ValueError(f"unpair requires a natural, got {code}")
    w = (isqrt(8 * code + 1) - 1) // 2
    y = code - w * (w + 1) // 2
    return w - y, y


def class_index(n: int) -> int | None:
    """2-adic valuation of n, or None for n = 0 (divisible by every power)."""
    if n < 0:
        raise ValueError(f"class_index requires a natural, got {n}")
    if n == 0:
        return None
    return (n & -n).bit_length() - 1


def class_members(e: int, bound: int) -> list[int]:
    """All members of valuation class e below bound, ascending."""
    if e < 0:
        raise ValueError(f"class index must be a natural, got {e}")
    return list(range(1 << e, bound, 1 << (e + 1)))


def partial_density(points: Iterable[int], bound: int) -> Fraction:
    """Exact fraction of [0, bound) covered by the given points; bound >= 1."""
    if bound < 1:
        raise ValueError(f"density bound must be >= 1, got {bound}")
    hits = len({p for p in points if 0 <= p < bound})
    return Fraction(hits, bound)


class PriorityIndex(NamedTuple):
    """A requirement, identified by candidate index e and side, ordered by
    position 2e + side (tuple order coincides with position order)."""

    e: int
    side: int

    @property
    def position(self) -> int:
        return 2 * self.e + self.side

    @classmethod
    def from_position(cls, position: int) -> "PriorityIndex":
        if position < 0:
            raise ValueError(f"position must be a natural, got {position}")
        return cls(position // 2, position % 2)
