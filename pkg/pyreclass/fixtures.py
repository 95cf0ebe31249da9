from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy
import yaml

from .errors import ValidationError
from .snapshots import DiffResult, EditionSnapshot, Tally

log = logging.getLogger(__name__)

DEFAULT_SUBCLASSES = ("A01B", "B60L", "C07D", "F03D", "G06F", "H01L", "H04W", "Y02E")

# Subclass that receives the donor families of proportional fixtures
DONOR_SUBCLASS = "Y10S"


def make_code(subclass: str, rng: numpy.random.Generator) -> str:
    """
    Random group-level code inside a subclass
    """
    return f"{subclass}{int(rng.integers(1, 100))}/{int(rng.integers(0, 100)):02d}"


def subclass_names(count: int) -> list[str]:
    """
    Deterministic distinct subclass identifiers, cycling over sections A–H
    """
    if count > 8 * 100 * 26:
        raise ValidationError(f"cannot name {count} subclasses")
    return [f"{'ABCDEFGH'[i % 8]}{(i // 8) % 100:02d}{chr(ord('A') + i // 800)}" for i in range(count)]


def reclassification_fixture(
        seed: int = 0,
        families: int = 1000,
        years: tuple[int, int] = (1990, 2010),
        subclasses: Sequence[str] = DEFAULT_SUBCLASSES,
        labels: tuple[str, str] = ("2013", "2016"),
        remove_probability: float = 0.1,
        add_probability: float = 0.15) -> tuple[EditionSnapshot, EditionSnapshot, DiffResult]:
    """
    Two editions and the subclass-level tallies of the changes planted
    between them.

    Some families only appear in one of the editions, and some codes change
    group without changing subclass: neither shows up in the plan.
    """
    if len(subclasses) < 2:
        raise ValidationError("at least two subclasses are needed")
    rng = numpy.random.default_rng(seed)
    earlier = EditionSnapshot(labels[0])
    later = EditionSnapshot(labels[1])
    plan = DiffResult(labels[0], labels[1], "subclass")
    pool = list(subclasses)

    for i in range(families):
        family_id = f"F{i:06d}"
        filing_year = int(rng.integers(years[0], years[1] + 1))
        size = int(rng.integers(1, min(3, len(pool)) + 1))
        before = {str(c) for c in rng.choice(pool, size=size, replace=False)}
        codes_before: dict[str, set[str]] = {c: {make_code(c, rng)} for c in before}
        for c in before:
            # Extra codes in the same subclass
            if rng.random() < 0.2:
                codes_before[c].add(make_code(c, rng))

        presence = rng.random()
        if presence < 0.05:
            # Dropped before the later edition
            earlier.add(family_id, filing_year, set().union(*codes_before.values()))
            continue
        elif presence < 0.10:
            # New in the later edition
            later.add(family_id, filing_year, set().union(*codes_before.values()))
            continue

        after = set(before)
        for c in sorted(before):
            if len(after) > 1 and rng.random() < remove_probability:
                after.discard(c)
        for c in pool:
            if c not in before and rng.random() < add_probability:
                after.add(c)

        codes_after: dict[str, set[str]] = {}
        for c in after:
            if c in codes_before:
                codes_after[c] = set(codes_before[c])
                if rng.random() < 0.1:
                    codes_after[c] = {make_code(c, rng)}
            else:
                codes_after[c] = {make_code(c, rng)}

        earlier.add(family_id, filing_year, set().union(*codes_before.values()))
        later.add(family_id, filing_year, set().union(*codes_after.values()))
        for c in before:
            plan.add(c, filing_year, Tally(negative=int(c not in after), baseline=1))
        for c in after - before:
            plan.add(c, filing_year, Tally(positive=1))

    return earlier, later, plan


def proportional_fixture(
        sizes: Mapping[str, int] | Sequence[int],
        rate: float = 0.05,
        seed: int = 0,
        years: tuple[int, int] = (1990, 2010),
        labels: tuple[str, str] = ("2013", "2016")) -> tuple[EditionSnapshot, EditionSnapshot]:
    """
    Editions where every class of size s receives exactly rate·s additions.

    Additions land on donor families of a separate subclass, so class sizes
    are not affected by the additions of other classes.
    """
    if not isinstance(sizes, Mapping):
        sizes = dict(zip(subclass_names(len(sizes)), sizes))
    if DONOR_SUBCLASS in sizes:
        raise ValidationError(f"{DONOR_SUBCLASS} is reserved for donor families")
    rng = numpy.random.default_rng(seed)
    earlier = EditionSnapshot(labels[0])
    later = EditionSnapshot(labels[1])

    serial = 0
    for class_id, size in sizes.items():
        additions = rate * size
        if not math.isclose(additions, round(additions), abs_tol=1e-9):
            raise ValidationError(f"class {class_id} of size {size}: {rate}·size is not an integer")
        for _ in range(size):
            family_id = f"P{serial:07d}"
            serial += 1
            codes = {make_code(class_id, rng)}
            filing_year = int(rng.integers(years[0], years[1] + 1))
            earlier.add(family_id, filing_year, codes)
            later.add(family_id, filing_year, codes)
        for _ in range(round(additions)):
            family_id = f"P{serial:07d}"
            serial += 1
            codes = {make_code(DONOR_SUBCLASS, rng)}
            filing_year = int(rng.integers(years[0], years[1] + 1))
            earlier.add(family_id, filing_year, codes)
            later.add(family_id, filing_year, codes | {make_code(class_id, rng)})
    return earlier, later


def rate_fixture(
        rates: Mapping[int, float],
        families_per_year: int = 1000,
        labels: tuple[str, str] = ("2013", "2016"),
        subclasses: Sequence[str] = DEFAULT_SUBCLASSES,
        seed: int = 0) -> tuple[EditionSnapshot, EditionSnapshot]:
    """
    Editions whose net reclassifications per classification in each filing
    year match the given rates, to the rounding of whole codes.

    Every family starts with two subclasses; positive rates add a third one
    to some families, negative rates remove one.
    """
    if len(subclasses) < 3:
        raise ValidationError("at least three subclasses are needed")
    rng = numpy.random.default_rng(seed)
    earlier = EditionSnapshot(labels[0])
    later = EditionSnapshot(labels[1])
    pool = list(subclasses)

    for filing_year, rate in sorted(rates.items()):
        baseline = 2 * families_per_year
        net = round(rate * baseline)
        if abs(net) > families_per_year:
            raise ValidationError(f"rate {rate} for {filing_year} needs more than one change per family")
        for i in range(families_per_year):
            family_id = f"R{filing_year}-{i:06d}"
            chosen = [str(c) for c in rng.choice(pool, size=3, replace=False)]
            before = {make_code(chosen[0], rng), make_code(chosen[1], rng)}
            if i < net:
                after = before | {make_code(chosen[2], rng)}
            elif i < -net:
                after = {next(iter(sorted(before)))}
            else:
                after = before
            earlier.add(family_id, filing_year, before)
            later.add(family_id, filing_year, after)
    return earlier, later


def panel_fixture(plan: Mapping[str, tuple[int, Sequence[str]]], label: str = "panel") -> EditionSnapshot:
    """
    Edition from explicit family id → (filing year, codes)
    """
    res = EditionSnapshot(label)
    for family_id, (filing_year, codes) in plan.items():
        res.add(family_id, filing_year, codes)
    return res


def write_editions(editions: Sequence[EditionSnapshot], directory: Path) -> Path:
    """
    Write editions as snapshot CSV files with a manifest listing them
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, str] = {}
    for edition in editions:
        name = f"{edition.edition_label}.csv"
        edition.to_frame().to_csv(directory / name, index=False)
        manifest[edition.edition_label] = name
    path = directory / "manifest.yaml"
    with path.open("wt") as fd:
        yaml.dump(manifest, stream=fd, sort_keys=False)
    log.info("%s: wrote %d editions", path, len(editions))
    return path
