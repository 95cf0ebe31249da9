from __future__ import annotations

import logging
import time
from typing import Callable, NamedTuple, Sequence

import numpy
import scipy.stats

from . import analysis, estimation, fixtures, model, simulator, snapshots
from .errors import ValidationError
from .model import ModelParams

log = logging.getLogger(__name__)

ALPHA_GRID = (0.01, 0.025, 0.05, 0.1)
BETA_GRID = (0.0, 0.1, 0.4, 0.5, 1.0)

# Parameter box of the peak and reclassification proportion checks
BOX_ALPHAS = (0.02, 0.04, 0.06)
BOX_BETAS = (0.3, 0.45, 0.6)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0


Check = Callable[[], tuple[bool, str]]

CHECKS: list[Check] = []


def register(c: Check) -> Check:
    CHECKS.append(c)
    return c


def relative_error(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


@register
def growth_factor_interval() -> tuple[bool, str]:
    """
    g in (1.07, 1.08) for alpha in {0.024, 0.027}, beta = 0.4
    """
    gs = [model.growth_factor(ModelParams(alpha, 0.4)).g for alpha in (0.024, 0.027)]
    return all(1.07 < g < 1.08 for g in gs), ", ".join(f"g={g:.5f}" for g in gs)


@register
def decline_time_values() -> tuple[bool, str]:
    """
    T = 5.06 for beta 0.4 and 7.59 for beta 0.6, with g = 1.079
    """
    t4 = model.decline_time(0.4, 1.079)
    t6 = model.decline_time(0.6, 1.079)
    return abs(t4 - 5.06) <= 0.05 and abs(t6 - 7.59) <= 0.05, f"T={t4:.3f}, T={t6:.3f}"


@register
def reclass_proportion_value() -> tuple[bool, str]:
    """
    V = 0.056 for g = 1.08, alpha = 0.024
    """
    v = model.reclass_proportion(1.08, 0.024)
    return abs(v - 0.056) <= 0.001, f"V={v:.4f}"


@register
def class_per_patent_interval() -> tuple[bool, str]:
    """
    W in [3.66, 4.11] for W0 = 1.25, g = 1.079, alpha in [0.024, 0.027]
    """
    low = model.class_per_patent(1.25, 1.079, 0.027)
    high = model.class_per_patent(1.25, 1.079, 0.024)
    return abs(low - 3.66) <= 0.05 and abs(high - 4.11) <= 0.05, f"W in [{low:.3f}, {high:.3f}]"


@register
def oracle_equivalence() -> tuple[bool, str]:
    """
    Exact cohort counts and totals match the forward recurrence up to t = 60
    """
    worst = 0.0
    for alpha in ALPHA_GRID:
        for beta in BETA_GRID:
            params = ModelParams(alpha, beta)
            matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=60))
            for t in range(61):
                row = matrix.row(t)
                for tau in range(t + 1):
                    worst = max(worst, relative_error(model.exact_cohort_count(params, tau, t), row[tau]))
                worst = max(worst, relative_error(model.exact_total(params, t), row.sum()))
    return worst <= 1e-9, f"max relative error {worst:.2e}"


@register
def generating_function_series() -> tuple[bool, str]:
    """
    400-term series matches the closed form at z = 0.9/g
    """
    worst = 0.0
    for alpha in ALPHA_GRID:
        for beta in BETA_GRID:
            params = ModelParams(alpha, beta)
            z = 0.9 / model.growth_factor(params).g
            worst = max(worst, relative_error(
                model.generating_function_closed(params, z),
                model.generating_function_series(params, z, terms=400)))
    return worst <= 1e-6, f"max relative error {worst:.2e}"


@register
def growth_bounds_monotonicity(samples: int = 500, seed: int = 1) -> tuple[bool, str]:
    """
    1+alpha <= g < 1+alpha+beta, g increasing in alpha and in beta
    """
    rng = numpy.random.default_rng(seed)
    failures: list[str] = []
    step = 1e-3
    for alpha, beta in zip(rng.uniform(1e-3, 0.2, samples), rng.uniform(0, 1, samples)):
        g = model.growth_factor(ModelParams(alpha, beta)).g
        if not 1 + alpha <= g or (beta > 0 and not g < 1 + alpha + beta):
            failures.append(f"bounds α={alpha:.4f} β={beta:.4f}")
        if not model.growth_factor(ModelParams(alpha + step, beta)).g > g:
            failures.append(f"alpha monotonicity α={alpha:.4f} β={beta:.4f}")
        if beta > 0 and not model.growth_factor(ModelParams(alpha, beta + step)).g > g:
            failures.append(f"beta monotonicity α={alpha:.4f} β={beta:.4f}")
    return not failures, f"{samples} samples" + (f", failed: {failures[0]}" if failures else "")


@register
def slow_growth_accuracy() -> tuple[bool, str]:
    """
    |g - 1 - alpha^(1/(1+beta))| <= 10% for alpha <= 1e-4
    """
    worst = 0.0
    for alpha in (1e-4, 1e-5, 1e-6):
        for beta in numpy.linspace(0, 1, 11):
            params = ModelParams(alpha, float(beta))
            approx = model.slow_growth_approx(params) - 1
            worst = max(worst, abs(model.growth_factor(params).g - 1 - approx) / approx)
    return worst <= 0.1, f"max relative deviation {worst:.3%}"


@register
def peak_location() -> tuple[bool, str]:
    """
    Apparent peak lag within one year of beta/(g-1) for t >= 50
    """
    worst = 0.0
    for alpha in BOX_ALPHAS:
        for beta in BOX_BETAS:
            params = ModelParams(alpha, beta)
            expected = model.decline_time(beta, model.growth_factor(params).g)
            matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=120))
            for t in (50, 80, 120):
                lag = t - simulator.peak_year(simulator.filing_year_profile(matrix, t), start=1)
                worst = max(worst, abs(lag - expected))
    return worst <= 1, f"max deviation {worst:.3f} years"


@register
def reclass_proportion_convergence() -> tuple[bool, str]:
    """
    Simulated v(t)/n(t) at t = 300 within 5% of g-1-alpha
    """
    worst = 0.0
    for alpha in BOX_ALPHAS:
        for beta in BOX_BETAS:
            params = ModelParams(alpha, beta)
            g = model.growth_factor(params).g
            matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=300))
            ratio = simulator.reclassified_total(matrix, params, 300) / matrix.total(300)
            worst = max(worst, relative_error(ratio, model.reclass_proportion(g, alpha)))
    return worst <= 0.05, f"max relative error {worst:.2e}"


@register
def estimation_round_trips() -> tuple[bool, str]:
    """
    Planted beta within 5%, planted alpha within 10%, linear fixtures exact
    """
    details: list[str] = []
    passed = True

    # Noiseless linear samples
    records = [simulator.ReclassRecord(tau, 20, 0.0, 1000.0) for tau in range(15)]
    h = estimation.inverse_lag_sum(numpy.array([21.0 - tau for tau in range(15)]), 3)
    records = [r._replace(reclassified=0.4 * hi * 1000.0) for r, hi in zip(records, h)]
    linear = estimation.fit_beta(simulator.ReclassEventStream(records))
    passed &= abs(linear.beta_hat - 0.4) <= 1e-10
    details.append(f"linear β̂={linear.beta_hat:.12f}")

    for beta in (0.2, 0.4, 0.8):
        params = ModelParams(0.025, beta)
        matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=80))
        stream = simulator.emit_reclass_events(matrix, params, [(60, 63), (70, 73)])
        fit = estimation.fit_beta(stream)
        passed &= relative_error(fit.beta_hat, beta) <= 0.05
        details.append(f"β={beta}: β̂={fit.beta_hat:.4f}")

    params = ModelParams(0.025, 0.4)
    matrix = simulator.run(simulator.SimulationConfig(params=params, horizon=80))
    table = estimation.ClassificationCountTable.from_matrix(matrix)
    estimate = estimation.estimate_alpha(table, 0.4, 60, depth=None, form="exact")
    passed &= relative_error(estimate.alpha_hat, 0.025) <= 0.1
    details.append(f"α̂={estimate.alpha_hat:.5f}")
    return passed, ", ".join(details)


@register
def binomial_identity(samples: int = 100, seed: int = 2) -> tuple[bool, str]:
    """
    Convolution identity of generalized binomials on random arguments
    """
    rng = numpy.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        beta = float(rng.uniform(0, 5))
        tau = int(rng.integers(1, 13))
        u = int(rng.integers(0, tau))
        worst = max(worst, relative_error(*model.identity_check(beta, tau, u)))
    return worst <= 1e-9, f"max relative error {worst:.2e}"


@register
def snapshot_pipeline() -> tuple[bool, str]:
    """
    Diff tallies equal the planted plan; proportional additions give slope 1
    """
    earlier, later, plan = fixtures.reclassification_fixture(seed=3)
    result = snapshots.diff(earlier, later, "subclass")
    exact = result.tallies == plan.tallies

    sizes = [20 * k for k in range(1, 31)]
    earlier, later = fixtures.proportional_fixture(sizes, rate=0.05, seed=4)
    table = snapshots.reclass_vs_size(snapshots.diff(earlier, later, "subclass"), earlier, "subclass")
    scaling = snapshots.size_scaling(table[table["class_id"] != fixtures.DONOR_SUBCLASS])
    ok = exact and abs(scaling.slope - 1) <= 0.01 and abs(scaling.constant - 0.05) <= 1e-9
    return ok, f"plan {'matched' if exact else 'differs'}, slope={scaling.slope:.4f}, c={scaling.constant:.4f}"


def planted_stats(
        coefficient: float, sections: Sequence[str] = ("A", "B", "G", "H"),
        groups: int = 60, seed: int = 5) -> list[analysis.GroupStats]:
    """
    Group statistics whose growth rate has an exactly planted dependence on
    w_k, with noise orthogonal to the regressors
    """
    rng = numpy.random.default_rng(seed)
    res: list[analysis.GroupStats] = []
    for section in sections:
        w = rng.uniform(1.5, 6, groups)
        w_avg = w * rng.uniform(0.9, 1.1, groups)
        log_total = rng.normal(8, 1, groups)
        log_fractional = log_total - rng.uniform(0.3, 1.0, groups)
        recent = [log_total - 3 + rng.normal(0, 0.3, groups) for _ in range(3)]
        design = numpy.column_stack([w, log_total, *recent, numpy.ones(groups)])
        noise = rng.normal(0, 0.01, groups)
        noise -= design @ numpy.linalg.lstsq(design, noise, rcond=None)[0]
        growth = coefficient * w + 0.001 * log_total + 0.02 + noise
        fractional_growth = growth + rng.normal(0, 0.001, groups)
        for i in range(groups):
            res.append(analysis.GroupStats(
                class_id=f"{section}{i:02d}X", g_k=1 + growth[i], w_k=w[i], w_k_year_avg=w_avg[i],
                g_k_fractional=1 + fractional_growth[i], log_group_total=log_total[i],
                log_group_total_fractional=log_fractional[i],
                log_recent=tuple((2012 + j, recent[j][i]) for j in range(3))))
    return res


@register
def regression_layer() -> tuple[bool, str]:
    """
    OLS matches the normal equations, planted effects are recovered and the
    cross-class slope matches alpha/W0
    """
    rng = numpy.random.default_rng(6)
    X = rng.normal(size=(200, 3))
    y = X @ [1.5, -2.0, 0.5] + 3 + rng.normal(size=200)
    fit = analysis.ols(y, X)
    design = numpy.column_stack((X, numpy.ones(200)))
    brute = numpy.linalg.solve(design.T @ design, design.T @ y)
    ols_error = float(numpy.max(numpy.abs(fit.coefficients - brute)))

    suite = analysis.run_robustness_suite(planted_stats(0.01), "controls")
    planted_ok = all(
        abs(r.coefficient("class_per_family") - 0.01) <= 2 * r.std_error("class_per_family")
        for r in suite.values())

    alpha, w0 = 0.025, 1.25
    matrices = simulator.ecosystem(
        {f"H{i:02d}X": ModelParams(alpha, float(beta)) for i, beta in enumerate(numpy.linspace(0.2, 0.6, 9))},
        horizon=150, w0=w0)
    stats = analysis.ecosystem_stats(matrices, (110, 140))
    slope = scipy.stats.linregress([s.w_k for s in stats], [s.g_k - 1 for s in stats]).slope
    slope_error = relative_error(slope, alpha / w0)

    ok = ols_error <= 1e-8 and planted_ok and slope_error <= 0.15
    return ok, f"OLS Δ={ols_error:.1e}, planted {'recovered' if planted_ok else 'missed'}, slope={slope:.4f}"


def run_checks(names: Sequence[str] | None = None) -> list[CheckResult]:
    """
    Run the registered checks, or the named ones
    """
    selected = CHECKS
    if names:
        known = {c.__name__: c for c in CHECKS}
        if unknown := [n for n in names if n not in known]:
            raise ValidationError(f"unknown checks: {', '.join(unknown)}")
        selected = [known[n] for n in names]

    res: list[CheckResult] = []
    for check in selected:
        start = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as e:
            log.debug("%s failed", check.__name__, exc_info=True)
            passed, detail = False, f"{e.__class__.__name__}: {e}"
        elapsed = time.perf_counter() - start
        log.info("%s: %s in %.2fs", check.__name__, "pass" if passed else "FAIL", elapsed)
        res.append(CheckResult(check.__name__, passed, detail, elapsed))
    return res


def format_table(results: Sequence[CheckResult]) -> str:
    width = max((len(r.name) for r in results), default=4)
    lines = [f"{'check':<{width}}  result  time     detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'pass' if r.passed else 'FAIL':<6}  {r.elapsed:6.2f}s  {r.detail}")
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)


def describe(check: Check) -> str:
    doc = (check.__doc__ or "").strip()
    return doc.splitlines()[0] if doc else ""


def all_passed(results: Sequence[CheckResult]) -> bool:
    return bool(results) and all(r.passed for r in results)
