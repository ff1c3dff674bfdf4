"""Three-level ordinal scale shared by appraisal records and adverts."""

LEVELS = ("low", "medium", "high")

_CODE = {"low": -1, "medium": 0, "high": 1}


def check_level(value: str, field: str = "ordinal") -> str:
    if value not in _CODE:
        raise ValueError(f"{field} must be one of {LEVELS}, got {value!r}")
    return value


def encode(value: str) -> int:
    """low -> -1, medium -> 0, high -> 1."""
    return _CODE[value]
