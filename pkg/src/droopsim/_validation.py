"""Small input-checking helpers shared by the parameter dataclasses."""
import math

from .errors import InvalidParams


def check_finite(name, value):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise InvalidParams(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise InvalidParams(f"{name} must be finite, got {value!r}")
    return float(value)


def check_positive(name, value):
    value = check_finite(name, value)
    if value <= 0:
        raise InvalidParams(f"{name} must be > 0, got {value!r}")
    return value


def check_non_negative(name, value):
    value = check_finite(name, value)
    if value < 0:
        raise InvalidParams(f"{name} must be >= 0, got {value!r}")
    return value


def check_in_range(name, value, low, high, *, low_open=False, high_open=False):
    value = check_finite(name, value)
    below = value <= low if low_open else value < low
    above = value >= high if high_open else value > high
    if below or above:
        lb = "(" if low_open else "["
        rb = ")" if high_open else "]"
        raise InvalidParams(f"{name} must be in {lb}{low}, {high}{rb}, got {value!r}")
    return value


def check_positive_int(name, value):
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise InvalidParams(f"{name} must be a positive integer, got {value!r}")
    if value <= 0:
        raise InvalidParams(f"{name} must be a positive integer, got {value!r}")
    return value
