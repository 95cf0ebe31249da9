from __future__ import annotations

import concurrent.futures
import logging
from typing import Iterable, Literal, NamedTuple, Sequence

import numpy
import pandas

from .errors import NumericalError, ValidationError
from .model import ModelParams
from .tables import sorted_frame

log = logging.getLogger(__name__)

Mode = Literal["patents", "classifications"]

MODES: tuple[Mode, ...] = ("patents", "classifications")

# Longest simulation accepted
MAX_HORIZON = 10_000


def _row_offset(t: int) -> int:
    """
    Position of row t in the packed lower triangle
    """
    return t * (t + 1) // 2


def _advance(row: numpy.ndarray, t: int, params: ModelParams) -> numpy.ndarray:
    """
    Apply one year of dynamics to the cohort counts at time t.

    Every cohort tau grows by beta·n_tau(t)/(t-tau+1), and a new cohort
    alpha·n(t) is introduced at t+1.
    """
    lags = t - numpy.arange(t + 1, dtype=float)
    res = numpy.empty(t + 2)
    res[:t + 1] = row * (1 + params.beta / (lags + 1))
    res[t + 1] = params.alpha * row.sum()
    return res


class CohortMatrix:
    """
    Counts n_tau(t) per filing-year cohort tau at each time t, for
    0 <= tau <= t <= horizon.

    Cells are stored as a packed lower triangle, one row per time.
    """
    def __init__(
            self, *,
            params: ModelParams,
            horizon: int,
            mode: Mode = "patents",
            w0: float = 1.0,
            data: numpy.ndarray | None = None):
        self.params = params
        self.horizon = horizon
        self.mode = mode
        self.w0 = w0
        size = _row_offset(horizon + 1)
        if data is None:
            data = numpy.zeros(size)
        elif len(data) != size:
            raise ValidationError(f"cohort data has {len(data)} cells, expected {size} for horizon {horizon}")
        self.data = data

    def __repr__(self) -> str:
        return f"CohortMatrix({self.params}, horizon={self.horizon}, mode={self.mode})"

    def _check_time(self, t: int):
        if not 0 <= t <= self.horizon:
            raise ValidationError(f"time {t} is outside the simulated range 0–{self.horizon}")

    def row(self, t: int) -> numpy.ndarray:
        """
        Counts n_tau(t) for tau = 0..t, as a read-only view
        """
        self._check_time(t)
        start = _row_offset(t)
        view = self.data[start:start + t + 1]
        view.flags.writeable = False
        return view

    def cell(self, tau: int, t: int) -> float:
        """
        Count n_tau(t), 0 when the cohort does not exist yet
        """
        self._check_time(t)
        if tau > t:
            return 0.0
        if tau < 0:
            raise ValidationError(f"filing year must be nonnegative, got {tau}")
        return float(self.data[_row_offset(t) + tau])

    def total(self, t: int) -> float:
        return float(self.row(t).sum())

    def to_frame(self) -> pandas.DataFrame:
        """
        Long table with columns tau, t, count
        """
        t_index, tau_index = numpy.tril_indices(self.horizon + 1)
        frame = pandas.DataFrame({"tau": tau_index, "t": t_index, "count": self.data})
        return sorted_frame(frame, ["tau", "t"])

    @classmethod
    def from_frame(
            cls, frame: pandas.DataFrame, *,
            params: ModelParams, mode: Mode = "patents", w0: float = 1.0) -> CohortMatrix:
        """
        Rebuild a matrix from a tau, t, count table; missing cells are zero
        """
        if frame.empty:
            raise ValidationError("cohort table is empty")
        if (frame["tau"] > frame["t"]).any() or (frame["tau"] < 0).any():
            raise ValidationError("cohort table has cells with tau outside 0–t")
        horizon = int(frame["t"].max())
        res = cls(params=params, horizon=horizon, mode=mode, w0=w0)
        t = frame["t"].to_numpy(dtype=int)
        tau = frame["tau"].to_numpy(dtype=int)
        res.data[t * (t + 1) // 2 + tau] = frame["count"].to_numpy(dtype=float)
        return res


class SimulationConfig(NamedTuple):
    params: ModelParams
    horizon: int
    # (tau, count) pairs added to n_tau(tau) at year tau
    initial_cohorts: tuple[tuple[int, float], ...] = ((0, 1.0),)
    mode: Mode = "patents"
    # Classifications per new patent, classification mode only
    w0: float = 1.0

    def validate(self) -> SimulationConfig:
        self.params.validate(strict=False)
        if not 0 <= self.horizon <= MAX_HORIZON:
            raise ValidationError(f"horizon must be in 0–{MAX_HORIZON}, got {self.horizon}")
        if self.mode not in MODES:
            raise ValidationError(f"unknown simulation mode {self.mode!r}")
        if self.w0 <= 0:
            raise ValidationError(f"w0 must be positive, got {self.w0}")
        if not self.initial_cohorts:
            raise ValidationError("at least one initial cohort is needed")
        for tau, count in self.initial_cohorts:
            if count <= 0:
                raise ValidationError(f"initial count for cohort {tau} must be positive, got {count}")
            if not 0 <= tau <= self.horizon:
                raise ValidationError(f"initial cohort {tau} is outside the simulated range 0–{self.horizon}")
        return self

    def injections(self) -> dict[int, float]:
        """
        Exogenous count added to each cohort at its introduction year.

        In classification mode counts are patents, turned into
        classifications through w0.
        """
        scale = self.w0 if self.mode == "classifications" else 1.0
        res: dict[int, float] = {}
        for tau, count in self.initial_cohorts:
            res[tau] = res.get(tau, 0.0) + count * scale
        return res


def step(state: CohortMatrix, params: ModelParams, injection: float = 0.0) -> CohortMatrix:
    """
    Advance a matrix by one year, returning a new matrix one row longer
    """
    params.validate(strict=False)
    t = state.horizon
    if t + 1 > MAX_HORIZON:
        raise ValidationError(f"cannot simulate beyond {MAX_HORIZON} years")
    new_row = _advance(state.row(t), t, params)
    new_row[-1] += injection
    res = CohortMatrix(
        params=params, horizon=t + 1, mode=state.mode, w0=state.w0,
        data=numpy.concatenate((state.data, new_row)))
    if not numpy.isfinite(new_row).all():
        raise NumericalError(f"counts overflow at t={t + 1} for {params}")
    return res


def run(config: SimulationConfig) -> CohortMatrix:
    """
    Iterate the dynamics from the configured cohorts up to the horizon
    """
    config.validate()
    params = config.params
    injections = config.injections()
    res = CohortMatrix(params=params, horizon=config.horizon, mode=config.mode, w0=config.w0)

    res.data[0] = injections.get(0, 0.0)
    row = res.data[0:1]
    for t in range(config.horizon):
        new_row = _advance(row, t, params)
        new_row[-1] += injections.get(t + 1, 0.0)
        if not numpy.isfinite(new_row).all():
            raise NumericalError(f"counts overflow at t={t + 1} for {params}")
        start = _row_offset(t + 1)
        res.data[start:start + t + 2] = new_row
        row = res.data[start:start + t + 2]

    log.debug("simulated %s up to t=%d: n(t)=%g", params, config.horizon, row.sum())
    return res


def run_many(configs: Sequence[SimulationConfig], max_workers: int | None = None) -> list[CohortMatrix]:
    """
    Run independent simulations on a thread pool, returning results in input
    order
    """
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(run, configs))


def ecosystem(
        params_by_class: dict[str, ModelParams],
        horizon: int,
        w0: float = 1.0,
        max_workers: int | None = None) -> dict[str, CohortMatrix]:
    """
    Simulate one independent classification-mode matrix per class
    """
    class_ids = sorted(params_by_class)
    configs = [
        SimulationConfig(params=params_by_class[class_id], horizon=horizon, mode="classifications", w0=w0)
        for class_id in class_ids]
    return dict(zip(class_ids, run_many(configs, max_workers=max_workers)))


def totals(matrix: CohortMatrix) -> numpy.ndarray:
    """
    Total count n(t) for every simulated year
    """
    return numpy.array([matrix.row(t).sum() for t in range(matrix.horizon + 1)])


def intro_counts(matrix: CohortMatrix) -> numpy.ndarray:
    """
    Count n_tau(tau) of every cohort at its introduction
    """
    return numpy.array([matrix.data[_row_offset(t) + t] for t in range(matrix.horizon + 1)])


def unique_patents(matrix: CohortMatrix, t: int, w0: float | None = None) -> float:
    """
    Patents filed up to year t in a classification-mode run
    """
    if matrix.mode != "classifications":
        raise ValidationError("unique patent tallies need a classification-mode simulation")
    matrix._check_time(t)
    if w0 is None:
        w0 = matrix.w0
    return float(intro_counts(matrix)[:t + 1].sum() / w0)


def class_per_patent_simulated(matrix: CohortMatrix, t: int) -> float:
    """
    Classifications per patent W(t) at year t of a classification-mode run
    """
    return matrix.total(t) / unique_patents(matrix, t)


def filing_year_profile(matrix: CohortMatrix, t: int) -> numpy.ndarray:
    """
    Counts by filing year as observed at time t
    """
    return numpy.array(matrix.row(t))


def peak_year(profile: Sequence[float] | numpy.ndarray, start: int = 0) -> int:
    """
    Earliest filing year tau >= start with n_tau >= n_tau+1, or the last year
    if the profile keeps increasing.

    start=1 skips the seed cohort of a simulation started from a single item,
    which is larger than the cohorts it triggers.
    """
    values = numpy.asarray(profile, dtype=float)
    if not 0 <= start < values.size:
        raise ValidationError(f"cannot find the peak of a profile of {values.size} years from year {start}")
    values = values[start:]
    not_rising = numpy.flatnonzero(values[:-1] >= values[1:])
    if not_rising.size:
        return start + int(not_rising[0])
    return start + int(values.size - 1)


def reclassification_increments(matrix: CohortMatrix, params: ModelParams, t: int) -> numpy.ndarray:
    """
    Per-cohort increments beta·n_tau(t)/(t-tau+1) applied going from t to t+1
    """
    row = matrix.row(t)
    lags = t - numpy.arange(t + 1, dtype=float)
    return params.beta * row / (lags + 1)


def reclassified_total(matrix: CohortMatrix, params: ModelParams, t: int) -> float:
    """
    Total count added by reclassification in the step out of year t
    """
    return float(reclassification_increments(matrix, params, t).sum())


class ReclassRecord(NamedTuple):
    """
    Reclassifications of one filing-year cohort during one window.

    The window state before reclassification is at window_start, and the
    event years run from window_start + 1 to the end of the window.
    """
    filing_year: int
    window_start: int
    reclassified: float
    classifications_before: float

    @property
    def event_year(self) -> int:
        return self.window_start + 1

    @property
    def rate(self) -> float:
        return self.reclassified / self.classifications_before


class ReclassEventStream:
    """
    Reclassification records for one or more windows of the same size
    """
    COLUMNS = ("tau", "window_start", "reclassified", "classifications_before")

    def __init__(
            self, records: Iterable[ReclassRecord] = (), window_size: int = 3, skipped: Iterable[int] = ()):
        if window_size < 1:
            raise ValidationError(f"window size must be positive, got {window_size}")
        self.window_size = window_size
        # Filing years left out for lack of a baseline
        self.skipped: list[int] = list(skipped)
        self.records: list[ReclassRecord] = []
        for record in records:
            if record.event_year <= record.filing_year:
                raise ValidationError(
                    f"record for filing year {record.filing_year} has window starting at {record.window_start}")
            self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_frame(self) -> pandas.DataFrame:
        frame = pandas.DataFrame(
            [(r.filing_year, r.window_start, r.reclassified, r.classifications_before) for r in self.records],
            columns=list(self.COLUMNS))
        return sorted_frame(frame, ["window_start", "tau"])

    @classmethod
    def from_frame(cls, frame: pandas.DataFrame, window_size: int = 3) -> ReclassEventStream:
        return cls((
            ReclassRecord(int(row.tau), int(row.window_start), float(row.reclassified),
                          float(row.classifications_before))
            for row in frame.itertuples(index=False)), window_size=window_size)


def emit_reclass_events(
        matrix: CohortMatrix,
        params: ModelParams,
        windows: Sequence[tuple[int, int]]) -> ReclassEventStream:
    """
    Sum each cohort's reclassification increments over each window.

    Windows are (start, end) pairs of the two observation years; cohorts
    filed up to start get a record whose denominator is their count at start.
    All windows must have the same size.
    """
    sizes = {end - start for start, end in windows}
    if len(sizes) > 1:
        raise ValidationError(f"windows have different sizes: {sorted(sizes)}")
    window_size = sizes.pop() if sizes else 3

    records: list[ReclassRecord] = []
    for start, end in windows:
        if not 0 <= start < end <= matrix.horizon:
            raise ValidationError(f"window {start}–{end} is outside the simulated range 0–{matrix.horizon}")
        reclassified = numpy.zeros(start + 1)
        for t in range(start, end):
            reclassified += reclassification_increments(matrix, params, t)[:start + 1]
        before = matrix.row(start)
        for tau in range(start + 1):
            if before[tau] <= 0:
                continue
            records.append(ReclassRecord(tau, start, float(reclassified[tau]), float(before[tau])))
    return ReclassEventStream(records, window_size=window_size)
