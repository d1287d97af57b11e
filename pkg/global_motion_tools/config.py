"""
Flat key=value configuration files.

Config files use dotenv syntax (comments with #, optional quotes) and are read
with python-dotenv without touching the process environment. Values are
coerced to the types of the target dataclass's fields; keys the dataclass does
not know raise ConfigError.
"""

import dataclasses
import typing
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar, Union

from dotenv import dotenv_values

from .errors import ConfigError
from .logger import get_logger

__all__ = ["read_flat_config", "coerce_value", "options_from_mapping"]

logger = get_logger(__name__)

T = TypeVar("T")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_flat_config(path: Union[str, Path]) -> Dict[str, str]:
    """
    Parse a key=value file.

    Raises:
        ConfigError: If the file is missing or a line has no value
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"{path}: keys without a value: {missing}")
    logger.debug(f"Read {len(values)} config keys from {path}")
    return {key: str(value) for key, value in values.items()}


def coerce_value(raw: Any, annotation: Any, key: str) -> Any:
    """Convert a config string to the annotated field type."""
    if not isinstance(raw, str):
        return raw
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is Union:
        # Optional[X]
        if raw.strip().lower() in ("", "none", "null"):
            return None
        inner = [a for a in args if a is not type(None)]
        return coerce_value(raw, inner[0], key)
    try:
        if annotation is bool:
            lowered = raw.strip().lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(raw)
        if annotation is int:
            return int(raw)
        if annotation is float:
            return float(raw)
        if origin in (tuple, list):
            item_type = args[0] if args else str
            items = [item.strip() for item in raw.split(",") if item.strip()]
            converted = [coerce_value(item, item_type, key) for item in items]
            return tuple(converted) if origin is tuple else converted
    except ValueError as e:
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(annotation, '__name__', annotation)}") from e
    return raw


def options_from_mapping(cls: Type[T], data: Mapping[str, Any], ignore: Optional[set] = None) -> T:
    """
    Build a dataclass from a flat mapping of strings or already-typed values.

    Args:
        cls: Target dataclass
        data: Keys are field names
        ignore: Keys to skip silently

    Raises:
        ConfigError: On unknown keys or unreadable values
    """
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    ignore = ignore or set()
    unknown = sorted(set(data) - names - ignore)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {unknown}")
    kwargs = {key: coerce_value(value, hints[key], key) for key, value in data.items() if key in names}
    return cls(**kwargs)
