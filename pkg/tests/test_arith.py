from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from minpair.arith import (
    PriorityIndex,
    class_index,
    class_members,
    pair,
    partial_density,
    unpair,
)


def test_pair_formula_values():
    assert pair(0, 0) == 0
    assert pair(3, 1) == 11  # (4*5)/2 + 1
    assert pair(0, 1) == 2


def test_pair_rejects_negatives():
    with pytest.raises(ValueError):
        pair(-1, 0)
    with pytest.raises(ValueError):
        unpair(-3)


def test_pair_unpair_roundtrip_exhaustive():
    for x in range(1000):
        base = x * (x + 1) // 2
        for y in range(1000):
            code = pair(x, y)
            assert unpair(code) == (x, y)
        assert pair(x, 0) == base  # spot-check the diagonal start


@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_pair_unpair_roundtrip_large(x, y):
    assert unpair(pair(x, y)) == (x, y)


@given(st.integers(0, 10**6))
def test_unpair_pair_roundtrip(code):
    x, y = unpair(code)
    assert pair(x, y) == code


def test_pair_monotone_in_each_argument():
    for x in range(30):
        for y in range(30):
            assert pair(x + 1, y) > pair(x, y)
            assert pair(x, y + 1) > pair(x, y)


def test_class_index_values():
    assert class_index(12) == 2  # 12 = 4 * 3
    assert class_index(7) == 0
    assert class_index(0) is None


def test_class_members():
    assert class_members(0, 8) == [1, 3, 5, 7]
    assert class_members(1, 16) == [2, 6, 10, 14]
    assert class_members(3, 8) == []


def test_classes_partition_positive_naturals():
    for bound in (1, 7, 64, 129):
        seen = {}
        for e in range(bound.bit_length() + 1):
            for n in class_members(e, bound):
                assert n not in seen
                seen[n] = e
        # everything positive below the bound is covered by exactly one class
        assert sorted(seen) == list(range(1, bound))
        for n in range(1, bound):
            assert class_index(n) == seen[n]


def test_class_density_exact_at_aligned_bounds():
    for e in range(5):
        block = 1 << (e + 1)
        for k in (1, 3, 8):
            bound = k * block
            got = partial_density(class_members(e, bound), bound)
            assert got == Fraction(1, block)


def test_partial_density_values():
    assert partial_density(range(0, 10, 2), 10) == Fraction(1, 2)
    assert partial_density(class_members(0, 8), 8) == Fraction(1, 2)
    assert partial_density([], 5) == 0


def test_partial_density_rejects_zero_bound():
    with pytest.raises(ValueError):
        partial_density([1], 0)


def test_priority_index_round_trip_and_order():
    pairs = [PriorityIndex.from_position(p) for p in range(12)]
    assert [pi.position for pi in pairs] == list(range(12))
    assert pairs == sorted(pairs)  # tuple order is position order
    assert PriorityIndex(3, 1).position == 7
    assert PriorityIndex.from_position(7) == PriorityIndex(3, 1)
