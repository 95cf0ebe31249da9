from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import pandas

from .errors import DataError

log = logging.getLogger(__name__)


def read_table(
        path: Path,
        columns: Sequence[str],
        optional: Sequence[str] = (),
        dtype: dict[str, str] | None = None) -> pandas.DataFrame:
    """
    Read a CSV table, checking that the required columns are present.

    An empty file gives an empty frame with the required columns. Optional
    columns are kept when present.
    """
    try:
        frame = pandas.read_csv(path, dtype=dtype)
    except pandas.errors.EmptyDataError:
        log.debug("%s: empty table", path)
        return pandas.DataFrame({name: [] for name in columns})
    except (pandas.errors.ParserError, UnicodeDecodeError, ValueError) as e:
        raise DataError(f"{path}: cannot parse table: {e}") from e

    if missing := [name for name in columns if name not in frame.columns]:
        raise DataError(f"{path}: missing columns {', '.join(missing)}")
    keep = list(columns) + [name for name in optional if name in frame.columns]
    return frame[keep]


def sorted_frame(frame: pandas.DataFrame, keys: Sequence[str]) -> pandas.DataFrame:
    """
    Sort rows by key columns with a stable sort and a clean index, so that
    output does not depend on input order
    """
    return frame.sort_values(list(keys), kind="mergesort").reset_index(drop=True)
