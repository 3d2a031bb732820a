from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from masquerade.money import fmt, scale, to_decimal, to_ticks
from masquerade.tokenset import TokenSet


class TestMoney:
    def test_round_trip(self):
        assert to_ticks("123.4567") == 1234567
        assert fmt(1234567) == "123.4567"
        assert to_decimal(1234567) == Decimal("123.4567")

    def test_negative_format(self):
        assert fmt(-5) == "-0.0005"

    def test_half_even(self):
        assert to_ticks("0.00005") == 0
        assert to_ticks("0.00015") == 2
        assert scale(Decimal("0.5"), 3) == 2

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            to_ticks("abc")
        with pytest.raises(ValueError):
            to_ticks("inf")

    @given(st.integers(-10**12, 10**12))
    def test_fmt_inverse(self, t):
        assert to_ticks(fmt(t)) == t


class TestTokenSet:
    def test_runs_merge(self):
        s = TokenSet.from_ids([5, 1, 2, 3, 7])
        assert s.runs == ((1, 3), (5, 1), (7, 1))
        assert str(s) == "{1-3,5,7}"
        assert TokenSet.from_runs([(4, 2), (1, 3)]).runs == ((1, 5),)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            TokenSet.from_runs([(1, 3), (2, 2)])

    def test_huge_runs(self):
        s = TokenSet(((1, 10**40),))
        assert s.size == 10**40
        assert s.count_below(10**30) == 10**30 - 1
        assert s.max() == 10**40

    @given(st.sets(st.integers(1, 200)), st.integers(0, 210))
    def test_matches_plain_set(self, ids, probe):
        s = TokenSet.from_ids(ids)
        assert list(s) == sorted(ids)
        assert len(s) == len(ids)
        assert (probe in s) == (probe in ids)
        assert s.count_below(probe) == sum(1 for i in ids if i < probe)
