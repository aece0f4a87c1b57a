"""Exact Hz <-> rad/s conversion at the I/O boundary.

Values cross the boundary as decimal text. Multiplying by 2 pi in 50-digit
decimal arithmetic and rounding once makes every written frequency read back
to the identical double, which plain ``float * 2 pi`` cannot guarantee.
"""

from __future__ import annotations

import math
from decimal import Context, Decimal, InvalidOperation

_CTX = Context(prec=50)
_TWO_PI = _CTX.multiply(Decimal(2), Decimal("3.14159265358979323846264338327950288419716939937510"))


_YAML_SPECIAL = {".inf": "inf", "+.inf": "inf", "-.inf": "-inf", ".nan": "nan"}


def _clean(text) -> str:
    raw = str(text).strip().replace("_", "")
    return _YAML_SPECIAL.get(raw.lower(), raw)


def parse_number(text) -> float:
    """Float from YAML/CSV text, accepting forms like ``1.12e6``, ``-inf`` and ``-.inf``."""
    if isinstance(text, bool):
        raise ValueError(f"expected a number, got {text!r}")
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(_clean(text))
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}") from None


def hz_to_rad(text) -> float:
    """Angular frequency for a value written in Hz (correctly rounded)."""
    if isinstance(text, bool):
        raise ValueError(f"expected a number, got {text!r}")
    raw = repr(float(text)) if isinstance(text, (int, float)) else _clean(text)
    try:
        dec = Decimal(raw)
    except InvalidOperation:
        raise ValueError(f"expected a number, got {text!r}") from None
    if not dec.is_finite():
        return float(dec)
    return float(_CTX.multiply(dec, _TWO_PI))


def rad_to_hz(omega: float) -> float:
    """Nearest double to ``omega / 2 pi`` (display value, may not round-trip)."""
    if not math.isfinite(omega):
        return omega
    return float(_CTX.divide(Decimal(omega), _TWO_PI))


def format_hz(omega: float) -> str:
    """Shortest decimal Hz text that :func:`hz_to_rad` maps back to ``omega`` exactly."""
    if not math.isfinite(omega):
        return repr(float(omega))
    exact = _CTX.divide(Decimal(omega), _TWO_PI)
    # prefer the shortest neighbouring double, which is usually what a person typed
    x = float(exact)
    candidates = [x]
    lo = hi = x
    for _ in range(3):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        candidates += [lo, hi]
    hits = [c for c in candidates if hz_to_rad(repr(c)) == omega]
    if hits:
        best = min(hits, key=lambda c: (len(repr(c)), abs(Decimal(c) - exact)))
        return repr(best)
    for digits in range(17, 40):
        text = format(Decimal(format(exact, f".{digits - 1}e")), "f")
        if hz_to_rad(text) == omega:
            return text
    return format(exact, "f")


def format_float(x: float) -> str:
    """Shortest round-trip text for a dimensionless double."""
    return repr(float(x))


def format_report(x: float) -> str:
    """Twelve-significant-digit text used in derived report tables."""
    return format(float(x), ".12g")
