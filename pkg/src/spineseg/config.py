"""Plain-text configuration: dotted ``key = value`` lines.

Example::

    # repair settings
    restore.connectivity = eight
    restore.dark_range = 1 84
    filter.threshold = 0.55

Values stay strings until a typed getter coerces them.  Command-line
flags beat environment variables beat file values beat defaults; the
merge itself lives with the pipeline settings.
"""

from __future__ import annotations

import os

from .errors import UnsupportedValueError

ENV_PREFIX = "SPINESEG_"


def parse_config_text(text: str) -> dict[str, str]:
    """Parse dotted key-value lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UnsupportedValueError(f"config line {lineno} has no '=': {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise UnsupportedValueError(f"config line {lineno} has an empty key")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def env_overrides(keys, environ=None) -> dict[str, str]:
    """Pick up SPINESEG_SECTION_KEY variables for the given dotted keys."""
    environ = os.environ if environ is None else environ
    out = {}
    for key in keys:
        name = ENV_PREFIX + key.replace(".", "_").upper()
        if name in environ:
            out[key] = environ[name]
    return out


def as_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise UnsupportedValueError(f"{key}: expected an integer, got {value!r}") from None


def as_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise UnsupportedValueError(f"{key}: expected a number, got {value!r}") from None


def as_bool(value: str, key: str) -> bool:
    if value in ("true", "True", "1", "yes"):
        return True
    if value in ("false", "False", "0", "no"):
        return False
    raise UnsupportedValueError(f"{key}: expected a boolean, got {value!r}")


def as_int_pair(value: str, key: str) -> tuple[int, int]:
    parts = value.split()
    if len(parts) != 2:
        raise UnsupportedValueError(f"{key}: expected two integers, got {value!r}")
    return (as_int(parts[0], key), as_int(parts[1], key))
