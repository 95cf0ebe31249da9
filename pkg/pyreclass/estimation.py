from __future__ import annotations

import logging
import math
from typing import Any, Iterable, Literal, Mapping, NamedTuple, Sequence

import numpy
import pandas
import scipy.optimize
import scipy.stats

from .errors import EstimationError, ValidationError
from .jsonable import Jsonable
from .model import estimate_prefactor
from .simulator import CohortMatrix, ReclassEventStream, intro_counts
from .snapshots import ClassLevel, DiffResult, EditionSnapshot, family_classes
from .tables import sorted_frame

log = logging.getLogger(__name__)

__all__ = [
    "BetaFit", "AlphaEstimate", "GrowthFit", "ClassificationCountTable",
    "fit_beta", "fit_beta_compounded", "back_correct", "estimate_alpha", "estimate_alpha_series",
    "fit_growth_ols", "default_growth_window", "estimate_prefactor", "count_table",
    "measured_reclass_proportion",
]

CorrectionForm = Literal["linear", "exact"]

# Back-correction only reaches this many years past filing by default
DEFAULT_DEPTH = 10

# Linear beta fits leave out cohorts filed fewer years than this before the
# window, where the growth of the cohort during the window is largest
DEFAULT_MIN_LAG = 15

# Growth is measured on a window of this many years...
GROWTH_WINDOW_YEARS = 35
# ...ending this many years before the last observed year
GROWTH_WINDOW_GAP = 8


class BetaFit(Jsonable):
    def __init__(
            self, *,
            beta_hat: float,
            sum_squared_residual: float,
            n_samples: int,
            method: str = "linear",
            lag_offset: int = 0):
        self.beta_hat = beta_hat
        self.sum_squared_residual = sum_squared_residual
        self.n_samples = n_samples
        self.method = method
        self.lag_offset = lag_offset

    def __str__(self) -> str:
        return f"β̂={self.beta_hat:.6g} ({self.n_samples} samples, SSR={self.sum_squared_residual:.3g})"

    def as_jsonable(self) -> dict[str, Any]:
        res = super().as_jsonable()
        res["beta_hat"] = self.beta_hat
        res["sum_squared_residual"] = self.sum_squared_residual
        res["n_samples"] = self.n_samples
        res["method"] = self.method
        res["lag_offset"] = self.lag_offset
        return res


class AlphaEstimate(Jsonable):
    def __init__(self, *, alpha_hat: float, year: int, w0_hat: float | None = None):
        self.alpha_hat = alpha_hat
        self.w0_hat = w0_hat
        self.year = year

    @property
    def flags(self) -> list[str]:
        """
        Conditions worth a second look, without invalidating the estimate
        """
        res: list[str] = []
        if not 0 < self.alpha_hat < 1:
            res.append("alpha outside (0, 1)")
        if self.w0_hat is not None and self.w0_hat < 1:
            res.append("w0 below 1")
        return res

    def as_jsonable(self) -> dict[str, Any]:
        res = super().as_jsonable()
        res["alpha_hat"] = self.alpha_hat
        res["w0_hat"] = self.w0_hat
        res["year"] = self.year
        res["flags"] = self.flags
        return res


class GrowthFit(NamedTuple):
    g_hat: float
    r2: float


class ClassificationCountTable:
    """
    Classification counts C[Y, Y'] of patents filed in year Y as observed in
    year Y', with the present year P of the latest observation
    """
    def __init__(
            self,
            entries: Mapping[tuple[int, int], float],
            present_year: int | None = None,
            unique_families: Mapping[int, float] | None = None):
        self.entries: dict[tuple[int, int], float] = {}
        for (filing_year, observation_year), count in entries.items():
            if count < 0:
                raise ValidationError(f"negative count {count} for filing year {filing_year}")
            if observation_year < filing_year:
                raise ValidationError(
                    f"observation year {observation_year} precedes filing year {filing_year}")
            self.entries[(int(filing_year), int(observation_year))] = float(count)
        latest = max((y for _, y in self.entries), default=None)
        if present_year is None:
            if latest is None:
                raise ValidationError("cannot infer the present year of an empty table")
            present_year = latest
        elif latest is not None and latest > present_year:
            raise ValidationError(f"observation year {latest} is after the present year {present_year}")
        self.present_year = present_year
        self.unique_families: dict[int, float] = dict(unique_families or {})

    def filing_years(self) -> list[int]:
        return sorted({y for y, _ in self.entries})

    def count(self, filing_year: int, observation_year: int | None = None) -> float:
        if observation_year is None:
            observation_year = self.present_year
        try:
            return self.entries[(filing_year, observation_year)]
        except KeyError:
            raise ValidationError(
                f"no count for filing year {filing_year} observed in {observation_year}") from None

    def to_frame(self) -> pandas.DataFrame:
        rows = [
            (y, obs, count, self.unique_families.get(y, math.nan) if obs == self.present_year else math.nan)
            for (y, obs), count in self.entries.items()]
        frame = pandas.DataFrame(
            rows, columns=["filing_year", "observation_year", "classifications", "unique_families"])
        if frame["unique_families"].isna().all():
            frame = frame.drop(columns="unique_families")
        return sorted_frame(frame, ["filing_year", "observation_year"])

    @classmethod
    def from_frame(cls, frame: pandas.DataFrame, present_year: int | None = None) -> ClassificationCountTable:
        entries: dict[tuple[int, int], float] = {}
        unique: dict[int, float] = {}
        for row in frame.itertuples(index=False):
            key = (int(row.filing_year), int(row.observation_year))
            entries[key] = entries.get(key, 0.0) + float(row.classifications)
            families = getattr(row, "unique_families", math.nan)
            if not pandas.isna(families):
                unique[key[0]] = float(families)
        return cls(entries, present_year=present_year, unique_families=unique)

    @classmethod
    def from_matrix(cls, matrix: CohortMatrix, present_year: int | None = None) -> ClassificationCountTable:
        """
        Counts observed at the present year of a simulation
        """
        if present_year is None:
            present_year = matrix.horizon
        row = matrix.row(present_year)
        entries = {(tau, present_year): float(row[tau]) for tau in range(present_year + 1) if row[tau] > 0}
        unique = None
        if matrix.mode == "classifications":
            intro = intro_counts(matrix)
            unique = {tau: float(intro[tau] / matrix.w0) for tau, _ in entries}
        return cls(entries, present_year=present_year, unique_families=unique)


def _window_lags(stream: ReclassEventStream, lag_offset: int, min_lag: int) -> tuple[numpy.ndarray, numpy.ndarray]:
    """
    First event lag and observed rate of every usable record
    """
    if lag_offset < 0:
        raise ValidationError(f"lag offset must be nonnegative, got {lag_offset}")
    if not len(stream):
        raise ValidationError("cannot fit beta on an empty event stream")
    first_lag = numpy.array(
        [r.event_year - r.filing_year + lag_offset for r in stream], dtype=float)
    before = numpy.array([r.classifications_before for r in stream], dtype=float)
    reclassified = numpy.array([r.reclassified for r in stream], dtype=float)
    if (first_lag <= 0).any():
        raise ValidationError("event year coincides with filing year")
    if (empty := int((before <= 0).sum())):
        log.warning("skipped %d samples without classifications before the window", empty)
    rates = numpy.divide(reclassified, before, out=numpy.zeros_like(before), where=before > 0)
    selected = (first_lag - lag_offset >= min_lag) & (before > 0)
    if not selected.any():
        raise ValidationError(f"no samples with a lag of at least {min_lag} years")
    if (short := int((first_lag - lag_offset < min_lag).sum())):
        log.info("skipped %d samples with lag below %d", short, min_lag)
    return first_lag[selected], rates[selected]


def inverse_lag_sum(first_lag: numpy.ndarray, window_size: int) -> numpy.ndarray:
    """
    Σ_j 1/(first_lag + j) over the event years of a window
    """
    j = numpy.arange(window_size, dtype=float)
    return (1 / (first_lag[:, None] + j)).sum(axis=1)


def fit_beta(
        stream: ReclassEventStream,
        window_size: int | None = None,
        lag_offset: int = 0,
        min_lag: int = DEFAULT_MIN_LAG) -> BetaFit:
    """
    Least-squares fit through the origin of r = beta·Σ_j 1/(t_j - tau).

    With lag_offset=1 the inverse lags become 1/(t_j - tau + 1). Samples whose
    first event lag is below min_lag are left out. The default suits streams
    emitted by the simulator; min_lag=1 uses every sample.
    """
    if window_size is None:
        window_size = stream.window_size
    if window_size < 1:
        raise ValidationError(f"window size must be positive, got {window_size}")
    first_lag, rates = _window_lags(stream, lag_offset, min_lag)
    h = inverse_lag_sum(first_lag, window_size)
    beta_hat = float(rates @ h / (h @ h))
    residuals = rates - beta_hat * h
    return BetaFit(
        beta_hat=beta_hat, sum_squared_residual=float(residuals @ residuals),
        n_samples=len(rates), lag_offset=lag_offset)


def fit_beta_compounded(
        stream: ReclassEventStream,
        window_size: int | None = None,
        min_lag: int = 1,
        bounds: tuple[float, float] = (0.0, 5.0)) -> BetaFit:
    """
    Fit r = ∏_j (1 + beta/(t_j - tau)) - 1, which accounts for the growth of
    the cohort during the window
    """
    if window_size is None:
        window_size = stream.window_size
    first_lag, rates = _window_lags(stream, 0, min_lag)

    def predicted(beta: float) -> numpy.ndarray:
        res = numpy.ones_like(first_lag)
        for j in range(window_size):
            res *= 1 + beta / (first_lag + j)
        return res - 1

    def ssr(beta: float) -> float:
        residuals = rates - predicted(beta)
        return float(residuals @ residuals)

    result = scipy.optimize.minimize_scalar(
        ssr, bounds=bounds, method="bounded", options={"xatol": 1e-12})
    if not result.success:
        raise EstimationError(f"compounded beta fit failed: {result.message}")
    return BetaFit(
        beta_hat=float(result.x), sum_squared_residual=float(result.fun),
        n_samples=len(rates), method="compounded")


def correction_factors(
        beta: float, first: int, last: int, form: CorrectionForm = "linear") -> numpy.ndarray:
    """
    Factors for lags k = first..last undoing the yearly growth 1 + beta/k
    """
    k = numpy.arange(first, last + 1, dtype=float)
    match form:
        case "linear":
            return 1 - beta / k
        case "exact":
            return 1 / (1 + beta / k)
        case _:
            raise ValidationError(f"unknown back-correction form {form!r}")


def back_correct(
        table: ClassificationCountTable,
        beta: float,
        Y: int,
        depth: int | None = DEFAULT_DEPTH,
        form: CorrectionForm = "linear",
        observation_year: int | None = None) -> float:
    """
    Estimate the count C[Y, observation_year] of filing year Y from its count
    at the present year.

    The default estimates the count at introduction, C[Y, Y]. Only lags up to
    depth years past filing are corrected; depth=None corrects all of them.
    """
    if beta < 0:
        raise ValidationError(f"beta must be nonnegative, got {beta}")
    if form == "linear" and beta >= 1:
        raise ValidationError(f"back-correction needs beta < 1, got {beta}")
    if depth is not None and depth < 0:
        raise ValidationError(f"depth must be nonnegative, got {depth}")
    if observation_year is None:
        observation_year = Y
    present = table.present_year
    if not Y <= observation_year <= present:
        raise ValidationError(f"observation year {observation_year} is outside {Y}–{present}")

    count = table.count(Y, present)
    last = present - Y
    if depth is not None:
        last = min(last, depth)
    first = observation_year - Y + 1
    if first > last or beta == 0:
        return count
    return float(count * numpy.prod(correction_factors(beta, first, last, form)))


def estimate_alpha(
        table: ClassificationCountTable,
        beta: float,
        Y: int,
        depth: int | None = DEFAULT_DEPTH,
        form: CorrectionForm = "linear",
        lagged_denominator: bool = False) -> AlphaEstimate:
    """
    Triggering rate of filing year Y: its introduction count over the counts
    of all earlier filing years.

    Earlier filing years are estimated as observed in year Y, or in year
    Y - 1 with lagged_denominator=True.

    On tables from the simulator, form="exact" with depth=None recovers
    alpha, exactly with lagged_denominator=True; the linear form with the
    default depth is only approximate.
    """
    introduction = back_correct(table, beta, Y, depth=depth, form=form)
    observed = Y - 1 if lagged_denominator else Y
    earlier = [y for y in table.filing_years() if y <= observed and y < Y]
    denominator = math.fsum(
        back_correct(table, beta, y, depth=depth, form=form, observation_year=observed)
        for y in earlier)
    if denominator <= 0:
        raise EstimationError(f"no classifications filed before {Y} to estimate alpha")

    w0_hat: float | None = None
    if (families := table.unique_families.get(Y)):
        w0_hat = introduction / families

    res = AlphaEstimate(alpha_hat=introduction / denominator, year=Y, w0_hat=w0_hat)
    for flag in res.flags:
        log.warning("estimate for %d: %s (alpha=%g, w0=%s)", Y, flag, res.alpha_hat, w0_hat)
    return res


def estimate_alpha_series(
        table: ClassificationCountTable,
        beta: float,
        years: Iterable[int],
        **kwargs) -> list[AlphaEstimate]:
    """
    Per-year triggering rate estimates
    """
    return [estimate_alpha(table, beta, y, **kwargs) for y in years]


def default_growth_window(years: Sequence[int]) -> tuple[int, int]:
    """
    Window ending GROWTH_WINDOW_GAP years before the last observed year,
    GROWTH_WINDOW_YEARS long, clipped to the first observed year
    """
    if not years:
        raise ValidationError("cannot choose a growth window without years")
    first, last = min(years), max(years)
    end = last - GROWTH_WINDOW_GAP
    start = max(first, end - GROWTH_WINDOW_YEARS)
    if end - start < 2:
        raise ValidationError(f"years {first}–{last} are too few for a growth window")
    return start, end


def fit_growth_ols(
        series: Mapping[int, float] | Iterable[tuple[int, float]] | pandas.Series,
        year_range: tuple[int, int] | None = None) -> GrowthFit:
    """
    Growth factor exp(slope) of an OLS fit of log(count) on year.

    year_range is inclusive; it defaults to default_growth_window.
    """
    if isinstance(series, pandas.Series):
        data = series
    elif isinstance(series, Mapping):
        data = pandas.Series(series)
    else:
        pairs = list(series)
        data = pandas.Series([c for _, c in pairs], index=[y for y, _ in pairs], dtype=float)
    data = data.sort_index()

    if year_range is None:
        year_range = default_growth_window(list(data.index))
    start, end = year_range
    data = data[(data.index >= start) & (data.index <= end)]
    if len(data) < 3:
        raise ValidationError(f"need at least 3 points in {start}–{end}, got {len(data)}")
    if (nonpositive := data[data <= 0]).size:
        raise ValidationError(f"cannot take the log of count {nonpositive.iloc[0]} in {nonpositive.index[0]}")

    fit = scipy.stats.linregress(data.index.to_numpy(dtype=float), numpy.log(data.to_numpy(dtype=float)))
    return GrowthFit(g_hat=math.exp(fit.slope), r2=float(fit.rvalue ** 2))


def count_table(
        snapshot: EditionSnapshot, level: ClassLevel = "subclass",
        present_year: int | None = None) -> ClassificationCountTable:
    """
    Count table of one edition: distinct classifications and families per
    filing year, observed at the present year
    """
    classifications: dict[int, float] = {}
    families: dict[int, float] = {}
    for filing_year, codes in snapshot.records.values():
        classes = family_classes(codes, level)
        classifications[filing_year] = classifications.get(filing_year, 0.0) + len(classes)
        families[filing_year] = families.get(filing_year, 0.0) + 1
    if present_year is None:
        present_year = snapshot.year
    if present_year is None:
        raise ValidationError(f"edition {snapshot.edition_label!r} has no year: present year needed")
    return ClassificationCountTable(
        {(y, present_year): count for y, count in classifications.items()},
        present_year=present_year, unique_families=families)


def measured_reclass_proportion(diff: DiffResult) -> float:
    """
    Net reclassifications over the baseline classification count of one
    reclassification moment.

    A diff without baseline classifications, such as one between empty or
    disjoint editions, gives NaN.
    """
    frame = diff.to_frame()
    baseline = frame["baseline"].sum()
    if baseline <= 0:
        log.warning("%r has no baseline classifications", diff)
        return math.nan
    return float((frame["positive"].sum() - frame["negative"].sum()) / baseline)
