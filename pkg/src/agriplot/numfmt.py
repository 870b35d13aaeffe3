"""Number formatting used by display templates (round-half-up semantics)."""

from decimal import Decimal, ROUND_HALF_UP


def round_half_up(value: float, ndigits: int) -> float:
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def fixed(value: float, ndigits: int) -> str:
    """Round-half-up and keep exactly ndigits decimals, e.g. 1.0 -> "1.0000"."""
    q = Decimal(1).scaleb(-ndigits)
    return str(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def compact(value: float) -> str:
    """Shortest plain decimal: 0.763 -> "0.763", 94.0 -> "94"."""
    if value == int(value):
        return str(int(value))
    return repr(value)
