from __future__ import annotations

import logging
import math
import re
from pathlib import Path
from typing import Iterable, Literal, NamedTuple

import numpy
import pandas
import scipy.stats
import yaml

from .errors import DataError, ValidationError
from .simulator import ReclassEventStream, ReclassRecord
from .tables import read_table, sorted_frame

log = logging.getLogger(__name__)

ClassLevel = Literal["section", "subclass", "main_group"]

LEVELS: tuple[ClassLevel, ...] = ("section", "subclass", "main_group")

# Section letter, two digit class, subclass letter, optional main group and
# subdivision
CODE_RE = re.compile(r"^(?P<subclass>[A-HY]\d{2}[A-Z])(?:(?P<group>\d{1,4})(?:/(?P<subgroup>\d{1,6}))?)?$")

YEAR_RE = re.compile(r"(\d{4})")

CODE_SEPARATOR = ";"


def parse_level(name: str) -> ClassLevel:
    """
    Normalize a level name, accepting "maingroup" and "main-group"
    """
    match name.lower().replace("-", "_"):
        case "section":
            return "section"
        case "subclass":
            return "subclass"
        case "main_group" | "maingroup":
            return "main_group"
        case _:
            raise ValidationError(f"unknown classification level {name!r}")


def normalize_code(code: str) -> str:
    """
    Uppercase a code and remove the padding spaces found in database exports
    """
    return re.sub(r"\s+", "", code).upper()


def truncate_code(code: str, level: ClassLevel) -> str:
    """
    Class identifier of a classification code at the given level
    """
    normalized = normalize_code(code)
    if not (mo := CODE_RE.match(normalized)):
        raise ValidationError(f"malformed classification code {code!r}")
    match level:
        case "section":
            return normalized[0]
        case "subclass":
            return mo.group("subclass")
        case "main_group":
            if mo.group("group") is None:
                raise ValidationError(f"code {code!r} has no main group")
            return mo.group("subclass") + mo.group("group")
        case _:
            raise ValidationError(f"unknown classification level {level!r}")


def family_classes(codes: Iterable[str], level: ClassLevel) -> frozenset[str]:
    """
    Distinct class identifiers of a family's codes
    """
    return frozenset(truncate_code(code, level) for code in codes)


class EditionSnapshot:
    """
    Classification state of every family in one database edition
    """
    def __init__(
            self,
            edition_label: str,
            records: dict[str, tuple[int, frozenset[str]]] | None = None,
            diagnostics: list[str] | None = None,
            filtered: int = 0):
        self.edition_label = edition_label
        self.records: dict[str, tuple[int, frozenset[str]]] = records if records is not None else {}
        # Per-row problems found while loading
        self.diagnostics: list[str] = diagnostics if diagnostics is not None else []
        # Rows left out by the filing year and jurisdiction filters
        self.filtered = filtered

    def __repr__(self) -> str:
        return f"EditionSnapshot({self.edition_label!r}, {len(self.records)} families)"

    def __len__(self) -> int:
        return len(self.records)

    @property
    def year(self) -> int | None:
        """
        Year of the edition, when its label contains one
        """
        if mo := YEAR_RE.search(self.edition_label):
            return int(mo.group(1))
        try:
            return int(self.edition_label)
        except ValueError:
            return None

    def add(self, family_id: str, filing_year: int, codes: Iterable[str]):
        """
        Add a family, merging codes with any existing record of the same family
        """
        codes = frozenset(codes)
        if (old := self.records.get(family_id)) is not None:
            if old[0] != filing_year:
                self.diagnostics.append(
                    f"family {family_id}: filing years {old[0]} and {filing_year} differ, keeping the earliest")
            self.records[family_id] = (min(old[0], filing_year), old[1] | codes)
        else:
            self.records[family_id] = (filing_year, codes)

    def to_frame(self) -> pandas.DataFrame:
        frame = pandas.DataFrame(
            [(family_id, filing_year, CODE_SEPARATOR.join(sorted(codes)))
             for family_id, (filing_year, codes) in self.records.items()],
            columns=["family_id", "filing_year", "codes"])
        return sorted_frame(frame, ["family_id"])


def load_snapshot(
        path: Path,
        label: str | None = None,
        year_bounds: tuple[int, int] | None = None,
        require_jurisdiction: bool = False,
        allow_empty: bool = False) -> EditionSnapshot:
    """
    Load one edition from a CSV file with columns family_id, filing_year and
    codes (semicolon separated).

    With require_jurisdiction, the optional us_and_foreign column selects the
    families with applications both in the US and elsewhere.
    """
    path = Path(path)
    if label is None:
        label = path.stem
    frame = read_table(
        path, ["family_id", "filing_year", "codes"], optional=["us_and_foreign"],
        dtype={"family_id": "str", "codes": "str"})
    if require_jurisdiction and "us_and_foreign" not in frame.columns and not frame.empty:
        raise DataError(f"{path}: jurisdiction filter needs a us_and_foreign column")

    res = EditionSnapshot(label)
    for lineno, row in enumerate(frame.itertuples(index=False), start=2):
        where = f"{path}:{lineno}"
        if pandas.isna(row.family_id):
            res.diagnostics.append(f"{where}: missing family id")
            continue
        family_id = str(row.family_id).strip()
        try:
            filing_year = int(row.filing_year)
        except (TypeError, ValueError):
            res.diagnostics.append(f"{where}: family {family_id} has no valid filing year")
            continue

        if year_bounds is not None and not year_bounds[0] <= filing_year <= year_bounds[1]:
            res.filtered += 1
            continue
        if require_jurisdiction and not _truthy(row.us_and_foreign):
            res.filtered += 1
            continue

        codes: set[str] = set()
        raw = "" if pandas.isna(row.codes) else str(row.codes)
        for code in raw.split(CODE_SEPARATOR):
            if not (code := normalize_code(code)):
                continue
            if CODE_RE.match(code):
                codes.add(code)
            else:
                res.diagnostics.append(f"{where}: family {family_id}: malformed code {code!r} dropped")
        if not codes and not allow_empty:
            res.diagnostics.append(f"{where}: family {family_id} has no valid codes")
            continue
        res.add(family_id, filing_year, codes)

    for msg in res.diagnostics:
        log.warning("%s", msg)
    if res.filtered:
        log.info("%s: %d rows filtered out", path, res.filtered)
    return res


def _truthy(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "y")
    return bool(value) and not pandas.isna(value)


def load_manifest(path: Path) -> dict[str, Path]:
    """
    Read a YAML mapping of edition labels to snapshot files, in file order.

    Relative paths are resolved against the directory of the manifest.
    """
    path = Path(path)
    with path.open("rt") as fd:
        try:
            data = yaml.load(fd, Loader=yaml.SafeLoader)
        except yaml.YAMLError as e:
            raise DataError(f"{path}: cannot parse manifest: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise DataError(f"{path}: manifest must map edition labels to files")
    return {str(label): path.parent / str(name) for label, name in data.items()}


class Tally(NamedTuple):
    positive: int = 0
    negative: int = 0
    baseline: int = 0

    def __add__(self, other):
        return Tally(self.positive + other.positive, self.negative + other.negative, self.baseline + other.baseline)


class DiffResult:
    """
    Codes added and removed per class and filing year between two editions
    """
    COLUMNS = ("class_id", "filing_year", "positive", "negative", "baseline")

    def __init__(
            self,
            earlier_label: str,
            later_label: str,
            level: ClassLevel = "subclass",
            tallies: dict[tuple[str, int], Tally] | None = None):
        self.earlier_label = earlier_label
        self.later_label = later_label
        self.level = level
        self.tallies: dict[tuple[str, int], Tally] = tallies if tallies is not None else {}

    def __repr__(self) -> str:
        return f"DiffResult({self.earlier_label!r}→{self.later_label!r}, {self.level}, {len(self.tallies)} cells)"

    def add(self, class_id: str, filing_year: int, tally: Tally):
        key = (class_id, filing_year)
        self.tallies[key] = self.tallies.get(key, Tally()) + tally

    def merge(self, other: DiffResult) -> DiffResult:
        """
        Combine tallies computed on disjoint sets of families
        """
        if (self.earlier_label, self.later_label, self.level) != (
                other.earlier_label, other.later_label, other.level):
            raise ValidationError(f"cannot merge {self!r} with {other!r}")
        res = DiffResult(self.earlier_label, self.later_label, self.level, dict(self.tallies))
        for (class_id, filing_year), tally in other.tallies.items():
            res.add(class_id, filing_year, tally)
        return res

    def _label_year(self, label: str) -> int:
        if mo := YEAR_RE.search(label):
            return int(mo.group(1))
        try:
            return int(label)
        except ValueError:
            raise ValidationError(f"edition label {label!r} does not name a year") from None

    @property
    def window_start(self) -> int:
        return self._label_year(self.earlier_label)

    @property
    def window_size(self) -> int:
        return self._label_year(self.later_label) - self.window_start

    def to_frame(self) -> pandas.DataFrame:
        frame = pandas.DataFrame(
            [(class_id, filing_year, *tally) for (class_id, filing_year), tally in self.tallies.items()],
            columns=list(self.COLUMNS))
        return sorted_frame(frame, ["class_id", "filing_year"])

    @classmethod
    def from_frame(
            cls, frame: pandas.DataFrame, earlier_label: str, later_label: str,
            level: ClassLevel = "subclass") -> DiffResult:
        res = cls(earlier_label, later_label, level)
        for row in frame.itertuples(index=False):
            res.add(str(row.class_id), int(row.filing_year),
                    Tally(int(row.positive), int(row.negative), int(row.baseline)))
        return res


def diff(
        earlier: EditionSnapshot,
        later: EditionSnapshot,
        level: ClassLevel = "subclass",
        families: Iterable[str] | None = None) -> DiffResult:
    """
    Tally class additions and removals of the families present in both
    editions.

    Filing years and baselines come from the earlier edition. families
    restricts the diff to a partition of the family ids.
    """
    res = DiffResult(earlier.edition_label, later.edition_label, level)
    if families is None:
        families = earlier.records.keys() & later.records.keys()
    for family_id in sorted(families):
        if (before := earlier.records.get(family_id)) is None or (after := later.records.get(family_id)) is None:
            continue
        filing_year = before[0]
        old = family_classes(before[1], level)
        new = family_classes(after[1], level)
        for class_id in old:
            res.add(class_id, filing_year, Tally(negative=int(class_id not in new), baseline=1))
        for class_id in new - old:
            res.add(class_id, filing_year, Tally(positive=1))
    log.debug("%r: %d families compared", res, len(earlier.records.keys() & later.records.keys()))
    return res


def net_rates_by_filing_year(diff: DiffResult) -> ReclassEventStream:
    """
    Net reclassifications per baseline classification for each filing year,
    summed over classes
    """
    frame = diff.to_frame()
    by_year = frame.groupby("filing_year")[["positive", "negative", "baseline"]].sum()
    start = diff.window_start
    records: list[ReclassRecord] = []
    skipped: list[int] = []
    for filing_year, row in by_year.iterrows():
        filing_year = int(filing_year)
        if row.baseline <= 0 or filing_year > start:
            skipped.append(filing_year)
            continue
        records.append(ReclassRecord(filing_year, start, float(row.positive - row.negative), float(row.baseline)))
    if skipped:
        log.warning("%r: skipped filing years without baseline before %d: %s",
                    diff, start, ", ".join(str(y) for y in skipped))
    return ReclassEventStream(records, window_size=max(diff.window_size, 1), skipped=skipped)


def class_sizes(snapshot: EditionSnapshot, level: ClassLevel) -> dict[str, int]:
    """
    Number of distinct families carrying each class
    """
    sizes: dict[str, int] = {}
    for _, codes in snapshot.records.values():
        for class_id in family_classes(codes, level):
            sizes[class_id] = sizes.get(class_id, 0) + 1
    return sizes


def reclass_vs_size(diff: DiffResult, earlier: EditionSnapshot, level: ClassLevel | None = None) -> pandas.DataFrame:
    """
    One row per class with its size in the earlier edition and its total
    additions and removals
    """
    if level is None:
        level = diff.level
    sizes = class_sizes(earlier, level)
    frame = diff.to_frame().groupby("class_id")[["positive", "negative"]].sum()
    class_ids = sorted(set(sizes) | set(frame.index))
    res = pandas.DataFrame({
        "class_id": class_ids,
        "size": [sizes.get(c, 0) for c in class_ids],
        "positive": [int(frame["positive"].get(c, 0)) for c in class_ids],
        "negative": [int(frame["negative"].get(c, 0)) for c in class_ids],
    })
    return res


class SizeScaling(NamedTuple):
    # Free log-log fit
    slope: float
    intercept: float
    r2: float
    # Mean log10(count/size), the offset of a unit-slope fit
    offset: float
    n_classes: int

    @property
    def constant(self) -> float:
        """
        Proportionality constant of count to size
        """
        return 10 ** self.offset


def size_scaling(table: pandas.DataFrame, column: str = "positive") -> SizeScaling:
    """
    Log-log relation between class size and a reclassification count
    """
    usable = table[(table["size"] > 0) & (table[column] > 0)]
    if len(usable) < 2:
        raise ValidationError(f"need at least 2 classes with nonzero size and {column}, got {len(usable)}")
    log_size = numpy.log10(usable["size"].to_numpy(dtype=float))
    log_count = numpy.log10(usable[column].to_numpy(dtype=float))
    if numpy.ptp(log_size) == 0:
        raise ValidationError("all classes have the same size")
    fit = scipy.stats.linregress(log_size, log_count)
    offset = float(numpy.mean(log_count - log_size))
    if not math.isfinite(fit.slope):
        raise ValidationError("log-log fit is undefined")
    return SizeScaling(
        slope=float(fit.slope), intercept=float(fit.intercept), r2=float(fit.rvalue ** 2),
        offset=offset, n_classes=len(usable))
