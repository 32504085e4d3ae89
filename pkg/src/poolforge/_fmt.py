"""Report number formatting."""

from __future__ import annotations

import math
from decimal import ROUND_HALF_EVEN, Decimal

_QUANTUM = Decimal("0.000001")


def fmt_float(x: float | None) -> str:
    """Six decimals, round-half-even on the shortest decimal repr. None/NaN print as empty."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    d = Decimal(repr(float(x))).quantize(_QUANTUM, rounding=ROUND_HALF_EVEN)
    if d == 0:
        d = abs(d)  # no "-0.000000"
    return f"{d:f}"


def json_float(x: float | None):
    """Float for JSON payloads, rounded like fmt_float; None stays null."""
    s = fmt_float(x)
    return float(s) if s else None
