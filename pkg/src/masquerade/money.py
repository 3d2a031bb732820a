"""Fixed-point currency helpers.

All currency is held as integer ticks of 1e-4 so that runs are exact and
reproducible across platforms.
"""
from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Union

SCALE = 10_000
QUANTUM = Decimal("0.0001")

Number = Union[int, float, str, Decimal]


def to_ticks(value: Number) -> int:
    """Convert a decimal amount to integer ticks (round half to even)."""
    if isinstance(value, float):
        value = repr(value)
    try:
        d = Decimal(value)
    except InvalidOperation as exc:
        raise ValueError(f"not a number: {value!r}") from exc
    if not d.is_finite():
        raise ValueError(f"not a finite number: {value!r}")
    return int((d * SCALE).to_integral_value(rounding=ROUND_HALF_EVEN))


def to_decimal(ticks: int) -> Decimal:
    return (Decimal(ticks) / SCALE).quantize(QUANTUM)


def fmt(ticks: int) -> str:
    """Render ticks with exactly four fractional digits."""
    sign = "-" if ticks < 0 else ""
    whole, frac = divmod(abs(ticks), SCALE)
    return f"{sign}{whole}.{frac:04d}"


def scale(fraction: Decimal, ticks: int) -> int:
    """Multiply ticks by an exact fraction, rounding half to even."""
    return int((fraction * ticks).to_integral_value(rounding=ROUND_HALF_EVEN))
