from __future__ import annotations

import logging
import math
from typing import Any

import numpy

log = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy scalars and arrays, and nested containers of them, to plain
    Python values
    """
    match value:
        case Jsonable():
            return to_jsonable(value.as_jsonable())
        case numpy.ndarray():
            return [to_jsonable(v) for v in value.tolist()]
        case numpy.generic():
            return to_jsonable(value.item())
        case dict():
            return {str(k): to_jsonable(v) for k, v in value.items()}
        case list() | tuple():
            return [to_jsonable(v) for v in value]
        case float() if not math.isfinite(value):
            # Not representable in JSON
            return None
        case _:
            return value


class Jsonable:
    """
    Object that can be serialized as a JSON-compatible dict tagged with its
    class
    """
    def as_jsonable(self) -> dict[str, Any]:
        return {
            "__module__": self.__class__.__module__,
            "__class__": self.__class__.__name__,
        }

