from __future__ import annotations

import logging
import math
from typing import Any, Iterable, Literal, NamedTuple, Sequence

import numpy
import pandas
import scipy.linalg
import scipy.stats

from .errors import InactiveClassError, RankDeficiencyError, ValidationError
from .estimation import fit_growth_ols
from .jsonable import Jsonable
from .simulator import CohortMatrix, class_per_patent_simulated, totals
from .snapshots import ClassLevel, EditionSnapshot, family_classes, normalize_code, truncate_code
from .tables import sorted_frame

log = logging.getLogger(__name__)

GrowthMode = Literal["classifications", "unique", "fractional"]

RobustnessSpec = Literal["controls", "year_avg", "fractional"]

ROBUSTNESS_SPECS: tuple[RobustnessSpec, ...] = ("controls", "year_avg", "fractional")

# Groups with more classifications per patent than this are outliers
DEFAULT_OUTLIER_THRESHOLD = 9.0

# Section left out of regressions
EXCLUDED_SECTION = "Y"

CONSTANT = "Constant"


class ClassPanel:
    """
    Yearly counts per class: classifications inside the class, unique
    patents, fractional patents and classifications carried by the class's
    patents
    """
    COLUMNS = ("classifications", "unique", "fractional", "carried")

    def __init__(self, frame: pandas.DataFrame, level: ClassLevel = "subclass"):
        self.frame = frame
        self.level = level

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def empty(self) -> bool:
        return self.frame.empty

    def class_ids(self) -> list[str]:
        if self.frame.empty:
            return []
        return sorted(self.frame.index.unique(level="class_id"))

    def years(self) -> tuple[int, int]:
        if self.frame.empty:
            raise ValidationError("panel is empty")
        years = self.frame.index.get_level_values("year")
        return int(years.min()), int(years.max())

    def series(self, class_id: str, column: str = "unique",
               year_range: tuple[int, int] | None = None) -> pandas.Series:
        """
        Yearly values of one column for a class, with zeros for years
        without patents
        """
        if column not in self.COLUMNS:
            raise ValidationError(f"unknown panel column {column!r}")
        if year_range is None:
            year_range = self.years()
        start, end = year_range
        try:
            data = self.frame.xs(class_id, level="class_id")[column]
        except KeyError:
            raise ValidationError(f"class {class_id!r} is not in the panel") from None
        return data.reindex(range(start, end + 1), fill_value=0).astype(float)

    def year_totals(self, column: str) -> pandas.Series:
        """
        Yearly totals of a column across all classes
        """
        return self.frame.groupby(level="year")[column].sum()

    def to_frame(self) -> pandas.DataFrame:
        return sorted_frame(self.frame.reset_index(), ["class_id", "year"])

    @classmethod
    def from_frame(cls, frame: pandas.DataFrame, level: ClassLevel = "subclass") -> ClassPanel:
        frame = frame.astype({"class_id": str, "year": int})
        return cls(frame.set_index(["class_id", "year"]).sort_index()[list(cls.COLUMNS)], level=level)


def build_panel(
        snapshot: EditionSnapshot,
        level: ClassLevel = "subclass",
        year_range: tuple[int, int] | None = None,
        code_level: ClassLevel | None = None) -> ClassPanel:
    """
    Count, for every class and filing year, the codes falling in the class,
    the patents carrying it, the fractional patents and the codes carried by
    those patents.

    Codes are distinct normalized codes, or distinct classes at code_level
    when given.
    """
    counts: dict[tuple[str, int], list[float]] = {}
    for family_id, (year, codes) in snapshot.records.items():
        if year_range is not None and not year_range[0] <= year <= year_range[1]:
            continue
        if code_level is None:
            full = {normalize_code(code) for code in codes}
        else:
            full = set(family_classes(codes, code_level))
        classes = family_classes(codes, level)
        if not classes:
            continue
        share = 1 / len(classes)
        inside: dict[str, int] = {}
        for code in full:
            class_id = truncate_code(code, level)
            inside[class_id] = inside.get(class_id, 0) + 1
        for class_id in classes:
            row = counts.setdefault((class_id, year), [0.0, 0.0, 0.0, 0.0])
            row[0] += inside.get(class_id, 0)
            row[1] += 1
            row[2] += share
            row[3] += len(full)

    index = pandas.MultiIndex.from_tuples(sorted(counts), names=["class_id", "year"])
    frame = pandas.DataFrame(
        [counts[key] for key in index], index=index, columns=list(ClassPanel.COLUMNS))
    log.debug("panel of %d classes from %r", frame.index.get_level_values(0).nunique(), snapshot)
    return ClassPanel(frame, level=level)


def check_active(panel: ClassPanel, class_id: str, year_range: tuple[int, int]) -> pandas.Series:
    """
    Unique patent series of a class, which must have at least one patent in
    every year of the range
    """
    series = panel.series(class_id, "unique", year_range)
    if (inactive := series[series < 1]).size:
        raise InactiveClassError(class_id, int(inactive.index[0]))
    return series


def group_growth(
        panel: ClassPanel,
        class_id: str,
        year_range: tuple[int, int],
        mode: GrowthMode = "unique") -> float:
    """
    Growth factor of a class from an OLS fit of its log yearly counts
    """
    check_active(panel, class_id, year_range)
    series = panel.series(class_id, mode, year_range)
    return fit_growth_ols(series, year_range).g_hat


def class_per_family(panel: ClassPanel, class_id: str, year_range: tuple[int, int] | None = None) -> float:
    """
    Classifications carried by the class's patents per unique patent
    """
    unique = panel.series(class_id, "unique", year_range).sum()
    if unique <= 0:
        raise ValidationError(f"class {class_id!r} has no patents")
    return float(panel.series(class_id, "carried", year_range).sum() / unique)


def year_avg_class_per_family(
        panel: ClassPanel, class_id: str, year_range: tuple[int, int] | None = None) -> float:
    """
    Mean over years with patents of the yearly classifications per patent
    """
    unique = panel.series(class_id, "unique", year_range)
    carried = panel.series(class_id, "carried", year_range)
    active = unique > 0
    if not active.any():
        raise ValidationError(f"class {class_id!r} has no patents")
    return float((carried[active] / unique[active]).mean())


class GroupStats(NamedTuple):
    class_id: str
    g_k: float
    w_k: float
    w_k_year_avg: float
    g_k_fractional: float
    log_group_total: float
    log_group_total_fractional: float
    # (year, log patent count) controls
    log_recent: tuple[tuple[int, float], ...] = ()

    @property
    def section(self) -> str:
        return self.class_id[0]

    @property
    def subclass(self) -> str:
        return self.class_id[:4]

    def regressor(self, name: str) -> float:
        """
        Value of a named regression variable
        """
        match name:
            case "growth_rate":
                return self.g_k - 1
            case "growth_rate_fractional":
                return self.g_k_fractional - 1
            case "class_per_family":
                return self.w_k
            case "year_av_class_per_family":
                return self.w_k_year_avg
            case "log_group_total":
                return self.log_group_total
            case "log_group_total_fractional":
                return self.log_group_total_fractional
            case _ if name.startswith("log_patents_"):
                year = int(name.removeprefix("log_patents_"))
                for y, value in self.log_recent:
                    if y == year:
                        return value
                raise ValidationError(f"group {self.class_id} has no patent count for {year}")
            case _:
                raise ValidationError(f"unknown regression variable {name!r}")


class GroupStatsList(list):
    """
    Group statistics, with the classes that were left out
    """
    def __init__(self, stats: Iterable[GroupStats] = (), skipped: Iterable[str] = ()):
        super().__init__(stats)
        self.skipped: list[str] = list(skipped)


def group_stats(
        panel: ClassPanel,
        year_range: tuple[int, int],
        recent_years: Sequence[int] = ()) -> GroupStatsList:
    """
    Measured quantities of every class active in all years of the range
    """
    res = GroupStatsList()
    start, end = year_range
    for class_id in panel.class_ids():
        try:
            unique = check_active(panel, class_id, year_range)
        except InactiveClassError as e:
            log.info("%s: skipped: %s", class_id, e)
            res.skipped.append(class_id)
            continue
        fractional = panel.series(class_id, "fractional", year_range)
        all_years = panel.series(class_id, "unique")
        recent: list[tuple[int, float]] = []
        for year in recent_years:
            count = all_years.get(year, 0.0)
            if count <= 0:
                break
            recent.append((year, math.log(count)))
        else:
            res.append(GroupStats(
                class_id=class_id,
                g_k=fit_growth_ols(unique, year_range).g_hat,
                w_k=class_per_family(panel, class_id, year_range),
                w_k_year_avg=year_avg_class_per_family(panel, class_id, year_range),
                g_k_fractional=fit_growth_ols(fractional, year_range).g_hat,
                log_group_total=math.log(unique.sum()),
                log_group_total_fractional=math.log(fractional.sum()),
                log_recent=tuple(recent)))
            continue
        log.info("%s: skipped: no patents in %d", class_id, year)
        res.skipped.append(class_id)
    log.info("%d groups active in %d–%d, %d skipped", len(res), start, end, len(res.skipped))
    return res


def ecosystem_stats(matrices: dict[str, CohortMatrix], year_range: tuple[int, int]) -> GroupStatsList:
    """
    Group statistics of simulated classification-mode classes
    """
    start, end = year_range
    res = GroupStatsList()
    for class_id, matrix in sorted(matrices.items()):
        n = totals(matrix)
        series = pandas.Series(n[start:end + 1], index=range(start, end + 1))
        g_k = fit_growth_ols(series, year_range).g_hat
        w_series = [class_per_patent_simulated(matrix, t) for t in range(start, end + 1)]
        res.append(GroupStats(
            class_id=class_id, g_k=g_k, w_k=w_series[-1], w_k_year_avg=float(numpy.mean(w_series)),
            g_k_fractional=g_k, log_group_total=math.log(series.sum()),
            log_group_total_fractional=math.log(series.sum())))
    return res


def stats_to_frame(stats: Iterable[GroupStats]) -> pandas.DataFrame:
    rows: list[dict[str, Any]] = []
    for s in stats:
        row: dict[str, Any] = {
            "class_id": s.class_id, "g_k": s.g_k, "w_k": s.w_k, "w_k_year_avg": s.w_k_year_avg,
            "g_k_fractional": s.g_k_fractional, "log_group_total": s.log_group_total,
            "log_group_total_fractional": s.log_group_total_fractional,
        }
        for year, value in s.log_recent:
            row[f"log_patents_{year}"] = value
        rows.append(row)
    frame = pandas.DataFrame(rows, columns=None if rows else ["class_id", "g_k", "w_k"])
    return sorted_frame(frame, ["class_id"])


def stats_from_frame(frame: pandas.DataFrame) -> list[GroupStats]:
    recent_columns = sorted(c for c in frame.columns if c.startswith("log_patents_"))
    res: list[GroupStats] = []
    for row in frame.to_dict(orient="records"):
        res.append(GroupStats(
            class_id=str(row["class_id"]), g_k=float(row["g_k"]), w_k=float(row["w_k"]),
            w_k_year_avg=float(row["w_k_year_avg"]), g_k_fractional=float(row["g_k_fractional"]),
            log_group_total=float(row["log_group_total"]),
            log_group_total_fractional=float(row["log_group_total_fractional"]),
            log_recent=tuple(
                (int(c.removeprefix("log_patents_")), float(row[c]))
                for c in recent_columns if not pandas.isna(row[c]))))
    return res


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


class RegressionResult(Jsonable):
    """
    Ordinary least squares fit with conventional homoskedastic errors
    """
    def __init__(
            self, *,
            names: Sequence[str],
            coefficients: numpy.ndarray,
            std_errors: numpy.ndarray,
            r_squared: float,
            adj_r_squared: float,
            residual_std_error: float,
            f_statistic: float,
            n_obs: int,
            dependent: str = "y"):
        self.names = list(names)
        self.coefficients = coefficients
        self.std_errors = std_errors
        self.r_squared = r_squared
        self.adj_r_squared = adj_r_squared
        self.residual_std_error = residual_std_error
        self.f_statistic = f_statistic
        self.n_obs = n_obs
        self.dependent = dependent
        self.df_resid = n_obs - len(self.names)
        with numpy.errstate(divide="ignore", invalid="ignore"):
            self.t_values = coefficients / std_errors
        self.p_values = 2 * scipy.stats.t.sf(numpy.abs(self.t_values), self.df_resid)
        n_regressors = len(self.names) - (CONSTANT in self.names)
        if n_regressors and math.isfinite(f_statistic):
            self.f_pvalue = float(scipy.stats.f.sf(f_statistic, n_regressors, self.df_resid))
        elif n_regressors:
            self.f_pvalue = 0.0
        else:
            self.f_pvalue = math.nan

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])

    def p_value(self, name: str) -> float:
        return float(self.p_values[self.names.index(name)])

    def __str__(self) -> str:
        lines = [f"{self.dependent}: n={self.n_obs} R²={self.r_squared:.3f}"]
        for name, coef, se, p in zip(self.names, self.coefficients, self.std_errors, self.p_values):
            lines.append(f"  {name:<28} {coef:10.4g}{significance_stars(p):<3} ({se:.4g})")
        return "\n".join(lines)

    def as_jsonable(self) -> dict[str, Any]:
        res = super().as_jsonable()
        res["dependent"] = self.dependent
        res["coefficients"] = [
            {"name": name, "coef": float(coef), "stderr": float(se), "t": float(t), "p": float(p),
             "stars": significance_stars(p)}
            for name, coef, se, t, p in zip(
                self.names, self.coefficients, self.std_errors, self.t_values, self.p_values)]
        res["observations"] = self.n_obs
        res["r_squared"] = self.r_squared
        res["adj_r_squared"] = self.adj_r_squared
        res["residual_std_error"] = self.residual_std_error
        res["df_resid"] = self.df_resid
        res["f_statistic"] = self.f_statistic
        res["f_pvalue"] = self.f_pvalue
        return res


def ols(
        y: Sequence[float] | numpy.ndarray,
        X: Sequence[Sequence[float]] | numpy.ndarray,
        names: Sequence[str] | None = None,
        intercept: bool = True,
        dependent: str = "y") -> RegressionResult:
    """
    Least squares through a QR decomposition.

    With intercept, a Constant column is added and reported last.
    """
    y = numpy.asarray(y, dtype=float)
    X = numpy.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(y)
    if X.shape[0] != n:
        raise ValidationError(f"{n} responses but {X.shape[0]} regressor rows")
    if names is None:
        names = [f"x{i}" for i in range(X.shape[1])]
    elif len(names) != X.shape[1]:
        raise ValidationError(f"{len(names)} names for {X.shape[1]} regressors")
    names = list(names)

    # The constant goes first so that a constant regressor is the one found
    # dependent
    if intercept:
        design = numpy.column_stack((numpy.ones(n), X))
        design_names = [CONSTANT] + names
    else:
        design = X
        design_names = names
    k = design.shape[1]
    if k == 0:
        raise ValidationError("no regressors")
    if n <= k:
        raise ValidationError(f"{n} observations are not enough for {k} coefficients")

    q, r = numpy.linalg.qr(design)
    diagonal = numpy.abs(numpy.diag(r))
    scale = numpy.linalg.norm(design, axis=0)
    for i, name in enumerate(design_names):
        if scale[i] == 0 or diagonal[i] <= 1e-10 * scale[i]:
            raise RankDeficiencyError(name)

    coefficients = scipy.linalg.solve_triangular(r, q.T @ y)
    residuals = y - design @ coefficients
    ssr = float(residuals @ residuals)
    df_resid = n - k
    sigma2 = ssr / df_resid
    r_inv = scipy.linalg.solve_triangular(r, numpy.eye(k))
    std_errors = numpy.sqrt(sigma2 * (r_inv ** 2).sum(axis=1))

    if intercept:
        sst = float(((y - y.mean()) ** 2).sum())
        df_total = n - 1
    else:
        sst = float(y @ y)
        df_total = n
    r_squared = 0.0 if sst == 0 else min(1.0, max(0.0, 1 - ssr / sst))
    adj_r_squared = 1 - (1 - r_squared) * df_total / df_resid
    n_regressors = k - 1 if intercept else k
    if n_regressors == 0:
        f_statistic = math.nan
    elif r_squared >= 1:
        f_statistic = math.inf
    else:
        f_statistic = (r_squared / n_regressors) / ((1 - r_squared) / df_resid)

    if intercept:
        # Report the constant last
        order = list(range(1, k)) + [0]
        coefficients = coefficients[order]
        std_errors = std_errors[order]
        design_names = names + [CONSTANT]

    return RegressionResult(
        names=design_names, coefficients=coefficients, std_errors=std_errors,
        r_squared=r_squared, adj_r_squared=adj_r_squared, residual_std_error=math.sqrt(sigma2),
        f_statistic=f_statistic, n_obs=n, dependent=dependent)


def regression_variables(spec: RobustnessSpec, recent_years: Sequence[int] = ()) -> tuple[str, list[str]]:
    """
    Dependent variable and regressors of one robustness check
    """
    match spec:
        case "controls":
            return "growth_rate", (
                ["class_per_family", "log_group_total"] + [f"log_patents_{y}" for y in recent_years])
        case "year_avg":
            return "growth_rate", ["year_av_class_per_family", "log_group_total"]
        case "fractional":
            return "growth_rate_fractional", ["class_per_family", "log_group_total_fractional"]
        case _:
            raise ValidationError(f"unknown robustness check {spec!r}")


def regress_groups(
        stats: Sequence[GroupStats], dependent: str, regressors: Sequence[str]) -> RegressionResult:
    y = [s.regressor(dependent) for s in stats]
    X = [[s.regressor(name) for name in regressors] for s in stats]
    return ols(y, numpy.array(X, dtype=float).reshape(len(stats), len(regressors)),
               names=regressors, dependent=dependent)


def run_robustness_suite(
        stats: Sequence[GroupStats],
        spec: RobustnessSpec = "controls",
        recent_years: Sequence[int] | None = None,
        min_groups: int | None = None,
        strict: bool = True) -> dict[str, RegressionResult]:
    """
    Run one robustness regression for each section.

    Sections with too few groups raise ValidationError, or are skipped with
    strict=False. Recent-year controls default to the years found in the
    statistics.
    """
    if recent_years is None:
        recent_years = sorted({y for s in stats for y, _ in s.log_recent})
    dependent, regressors = regression_variables(spec, recent_years)
    if min_groups is None:
        min_groups = len(regressors) + 2

    by_section: dict[str, list[GroupStats]] = {}
    for s in stats:
        if s.section == EXCLUDED_SECTION:
            continue
        by_section.setdefault(s.section, []).append(s)

    res: dict[str, RegressionResult] = {}
    for section, group in sorted(by_section.items()):
        if len(group) < min_groups:
            msg = f"section {section}: {len(group)} groups, at least {min_groups} needed for {spec!r}"
            if strict:
                raise ValidationError(msg)
            log.warning("%s: skipped", msg)
            continue
        res[section] = regress_groups(group, dependent, regressors)
    return res


def pearson_r2(x: Sequence[float] | numpy.ndarray, y: Sequence[float] | numpy.ndarray) -> float:
    """
    Squared Pearson correlation coefficient
    """
    x = numpy.asarray(x, dtype=float)
    y = numpy.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValidationError(f"vectors have different lengths {len(x)} and {len(y)}")
    if len(x) < 2:
        raise ValidationError("correlation needs at least 2 points")
    if numpy.ptp(x) == 0 or numpy.ptp(y) == 0:
        raise ValidationError("correlation is undefined for a constant vector")
    return float(scipy.stats.pearsonr(x, y)[0] ** 2)


def section_correlations(stats: Iterable[GroupStats]) -> pandas.DataFrame:
    """
    Slope, intercept and R² of g_k - 1 on w_k within each section
    """
    by_section: dict[str, list[GroupStats]] = {}
    for s in stats:
        by_section.setdefault(s.section, []).append(s)
    rows = []
    for section, group in sorted(by_section.items()):
        if section == EXCLUDED_SECTION:
            continue
        w = numpy.array([s.w_k for s in group])
        growth = numpy.array([s.g_k - 1 for s in group])
        if len(group) < 3 or numpy.ptp(w) == 0:
            log.info("section %s: not enough spread for a correlation", section)
            continue
        fit = scipy.stats.linregress(w, growth)
        rows.append((section, float(fit.slope), float(fit.intercept), pearson_r2(w, growth), len(group)))
    return pandas.DataFrame(rows, columns=["section", "slope", "intercept", "r2", "groups"])


class OutlierExclusion(NamedTuple):
    kept: list[GroupStats]
    removed: list[GroupStats]
    # Subclasses of the groups found above the threshold
    subclasses: list[str]


def exclude_outlier_subclasses(
        stats: Iterable[GroupStats],
        threshold: float = DEFAULT_OUTLIER_THRESHOLD,
        whole_subclass: bool = False) -> OutlierExclusion:
    """
    Remove groups with w_k above the threshold, or every group of their
    subclasses with whole_subclass=True
    """
    stats = list(stats)
    touched = sorted({s.subclass for s in stats if s.w_k > threshold})
    if whole_subclass:
        is_removed = [s.subclass in touched for s in stats]
    else:
        is_removed = [s.w_k > threshold for s in stats]
    kept = [s for s, removed in zip(stats, is_removed) if not removed]
    removed = [s for s, removed in zip(stats, is_removed) if removed]
    if removed:
        log.warning("removed %d groups above w_k=%g in subclasses %s", len(removed), threshold, ", ".join(touched))
    return OutlierExclusion(kept, removed, touched)
