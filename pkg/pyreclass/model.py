from __future__ import annotations

import functools
import logging
import math
import sys
from typing import Any, NamedTuple

import numpy
import scipy.special

from .errors import NumericalError, ValidationError
from .jsonable import Jsonable

log = logging.getLogger(__name__)

# Largest value of log|x| that still fits a float
LOG_FLOAT_MAX = math.log(sys.float_info.max)

# Default bisection settings for the growth factor
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200

# Year at which the asymptotic prefactor is read off the exact total
PREFACTOR_T_STAR = 200


class ModelParams(NamedTuple):
    """
    Triggering rate alpha and reclassification rate beta, both per year
    """
    alpha: float
    beta: float

    def __str__(self) -> str:
        return f"α={self.alpha:g}, β={self.beta:g}"

    def validate(self, strict: bool = True) -> ModelParams:
        """
        Check parameter ranges.

        With strict=True, require 0 < alpha < 1 as needed by the asymptotic
        results; otherwise only require nonnegative rates, which is enough for
        the dynamics.
        """
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValidationError(f"parameters must be finite: {self}")
        if self.beta < 0:
            raise ValidationError(f"beta must be nonnegative, got {self.beta}")
        if strict:
            if not 0 < self.alpha < 1:
                raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        elif self.alpha < 0:
            raise ValidationError(f"alpha must be nonnegative, got {self.alpha}")
        return self


class GrowthSolution(Jsonable):
    """
    Asymptotic growth n(t) ≃ n0·g^t of the total count
    """
    def __init__(self, *, g: float, n0: float, residual: float, iterations: int = 0):
        self.g = g
        self.n0 = n0
        self.residual = residual
        self.iterations = iterations

    def __str__(self) -> str:
        return f"g={self.g:.12g} n0={self.n0:.6g} residual={self.residual:.3g}"

    def as_jsonable(self) -> dict[str, Any]:
        res = super().as_jsonable()
        res["g"] = self.g
        res["n0"] = self.n0
        res["residual"] = self.residual
        res["iterations"] = self.iterations
        return res


class PredictedQuantities(Jsonable):
    """
    Closed-form predictions derived from a growth factor
    """
    def __init__(
            self, *,
            decline_time_T: float,
            reclass_proportion_V: float,
            class_per_patent_W: float | None = None,
            w0: float | None = None):
        self.decline_time_T = decline_time_T
        self.reclass_proportion_V = reclass_proportion_V
        self.class_per_patent_W = class_per_patent_W
        self.w0 = w0

    def as_jsonable(self) -> dict[str, Any]:
        res = super().as_jsonable()
        res["T"] = self.decline_time_T
        res["V"] = self.reclass_proportion_V
        res["W"] = self.class_per_patent_W
        res["w0"] = self.w0
        return res


def log_gen_binomial(x: float, k: int) -> tuple[int, float]:
    """
    Sign and log-magnitude of the generalized binomial coefficient binom(x, k).

    The sign is 0 when the falling factorial contains a zero factor, in which
    case the log-magnitude is -inf.
    """
    if k < 0:
        raise ValidationError(f"binomial lower index must be nonnegative, got {k}")
    if k == 0:
        return 1, 0.0
    factors = x - numpy.arange(k, dtype=float)
    if not factors.all():
        return 0, -math.inf
    negatives = int(numpy.count_nonzero(factors < 0))
    logmag = float(numpy.log(numpy.abs(factors)).sum() - scipy.special.gammaln(k + 1))
    return (-1 if negatives % 2 else 1), logmag


def gen_binomial(x: float, k: int) -> float:
    """
    Generalized binomial coefficient binom(x, k) = x(x-1)...(x-k+1)/k! for a
    real upper index and a nonnegative integer lower index.

    The falling factorial is accumulated as a running product of (x-i)/(i+1);
    if an intermediate value overflows, the result is recomputed in log space
    with sign tracking. Results beyond the float range come out as signed
    infinities.
    """
    if k < 0:
        raise ValidationError(f"binomial lower index must be nonnegative, got {k}")
    if float(x).is_integer() and 0 <= x < k:
        return 0.0
    result = 1.0
    for i in range(k):
        result *= (x - i) / (i + 1)
        if not math.isfinite(result):
            break
    else:
        return result

    sign, logmag = log_gen_binomial(x, k)
    if logmag > LOG_FLOAT_MAX:
        return math.copysign(math.inf, sign)
    return sign * math.exp(logmag)


def gamma_binomial(x: float, y: float) -> float:
    """
    Binomial coefficient for real x and y through the Gamma function.

    Only defined here for x, y and x - y all greater than -1.
    """
    if x <= -1 or y <= -1 or x - y <= -1:
        raise ValidationError(f"gamma_binomial({x}, {y}) needs x, y, x-y > -1")
    return math.exp(
        scipy.special.gammaln(x + 1) - scipy.special.gammaln(y + 1) - scipy.special.gammaln(x - y + 1))


def cohort_from_intro(params: ModelParams, n_intro: float, tau: int, t: int) -> float:
    """
    Count of cohort tau at time t given its count n_intro at introduction
    """
    if t < tau:
        raise ValidationError(f"time {t} precedes filing year {tau}")
    if n_intro < 0:
        raise ValidationError(f"introduction count must be nonnegative, got {n_intro}")
    lag = t - tau
    return gen_binomial(lag + params.beta, lag) * n_intro


@functools.lru_cache(maxsize=4096)
def _intro_count(params: ModelParams, tau: int) -> float:
    """
    n_tau(tau) for the canonical initial condition n_tau(0) = δ(0, tau)
    """
    alpha, beta = params
    return math.fsum(
        gen_binomial(u * beta + tau - 1, tau - u) * alpha ** u
        for u in range(tau + 1))


def exact_cohort_count(params: ModelParams, tau: int, t: int) -> float:
    """
    Exact n_tau(t) for a technology starting from one item at t = tau = 0
    """
    if tau < 0 or t < tau:
        raise ValidationError(f"need 0 <= tau <= t, got tau={tau}, t={t}")
    return cohort_from_intro(params, _intro_count(params, tau), tau, t)


def exact_total(params: ModelParams, t: int) -> float:
    """
    Exact total n(t) for a technology starting from one item at t = 0
    """
    if t < 0:
        raise ValidationError(f"time must be nonnegative, got {t}")
    alpha, beta = params
    return math.fsum(
        gen_binomial((u + 1) * beta + t, t - u) * alpha ** u
        for u in range(t + 1))


def total_series(params: ModelParams, horizon: int) -> numpy.ndarray:
    """
    Exact totals n(0), ..., n(horizon) through the introduction-count recursion.

    Uses n_tau(tau) = alpha·n(tau-1) and n_tau(t) = binom(t-tau+beta, t-tau)·n_tau(tau),
    so each total is a convolution of the binomial weights with the earlier
    totals.
    """
    if horizon < 0:
        raise ValidationError(f"horizon must be nonnegative, got {horizon}")
    alpha, beta = params
    lags = numpy.arange(1, horizon + 1, dtype=float)
    # weights[L] = binom(L + beta, L)
    weights = numpy.concatenate(([1.0], numpy.cumprod((lags + beta) / lags)))
    totals = numpy.empty(horizon + 1)
    intro = numpy.empty(horizon + 1)
    intro[0] = 1.0
    for t in range(horizon + 1):
        if t > 0:
            intro[t] = alpha * totals[t - 1]
        # Σ_tau weights[t - tau]·intro[tau]
        totals[t] = weights[t::-1] @ intro[:t + 1]
    return totals


def _growth_equation(g: float, params: ModelParams) -> float:
    """
    h(g) - alpha with h(g) = g(1 - 1/g)^(1+beta), strictly increasing for g > 1.

    Same sign as (1 - 1/g)^(1+beta) - alpha/g.
    """
    alpha, beta = params
    return (g - 1) ** (1 + beta) / g ** beta - alpha


def growth_residual(g: float, params: ModelParams) -> float:
    """
    Residual of the growth factor equation (1 - 1/g)^(1+beta) = alpha/g
    """
    alpha, beta = params
    return abs((1 - 1 / g) ** (1 + beta) - alpha / g)


def growth_factor(
        params: ModelParams,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER) -> GrowthSolution:
    """
    Solve (1 - 1/g)^(1+beta) = alpha/g for the yearly growth factor g.

    The root is unique and lies in [1 + alpha, 1 + alpha + beta); it is found
    by bisection until the bracket is narrower than tol.
    """
    params.validate()
    if tol <= 0:
        raise ValidationError(f"tolerance must be positive, got {tol}")
    alpha, beta = params

    if beta == 0:
        g = 1 + alpha
        return GrowthSolution(g=g, n0=estimate_prefactor(params, g=g), residual=growth_residual(g, params))

    lo = 1 + alpha
    hi = 1 + alpha + beta
    # Keep the upper end strictly inside the bracket
    hi -= 4 * sys.float_info.epsilon * hi
    f_lo = _growth_equation(lo, params)
    f_hi = _growth_equation(hi, params)
    if f_hi <= 0:
        raise NumericalError(f"growth equation has no sign change in [{lo!r}, {hi!r}] for {params}")

    iterations = 0
    if f_lo >= 0:
        # Root at the lower end within working precision
        g = lo
    else:
        while hi - lo > tol:
            if iterations >= max_iter:
                raise NumericalError(
                    f"bisection did not converge after {max_iter} iterations for {params}:"
                    f" bracket [{lo!r}, {hi!r}]")
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                # Bracket cannot shrink any further
                break
            if _growth_equation(mid, params) < 0:
                lo = mid
            else:
                hi = mid
            iterations += 1
        g = 0.5 * (lo + hi)

    log.debug("growth factor for %s: g=%r after %d iterations", params, g, iterations)
    return GrowthSolution(
        g=g, n0=estimate_prefactor(params, g=g),
        residual=growth_residual(g, params), iterations=iterations)


def estimate_prefactor(params: ModelParams, t_star: int = PREFACTOR_T_STAR, g: float | None = None) -> float:
    """
    Asymptotic prefactor n0 of n(t) ≃ n0·g^t, read off at t = t_star
    """
    if g is None:
        g = growth_factor(params).g
    if t_star < 0:
        raise ValidationError(f"t_star must be nonnegative, got {t_star}")
    log_ratio = math.log(exact_total(params, t_star)) - t_star * math.log(g)
    return math.exp(log_ratio)


def slow_growth_approx(params: ModelParams) -> float:
    """
    Growth factor approximation 1 + alpha^(1/(1+beta)) for slow growth
    """
    if params.alpha <= 0 or params.beta < 0:
        raise ValidationError(f"slow growth approximation needs alpha > 0, beta >= 0: {params}")
    return 1 + params.alpha ** (1 / (1 + params.beta))


def alpha_for_growth(g: float, beta: float) -> float:
    """
    Triggering rate that yields growth factor g for the given beta
    """
    if g <= 1 or beta < 0:
        raise ValidationError(f"need g > 1 and beta >= 0, got g={g}, beta={beta}")
    return g * (1 - 1 / g) ** (1 + beta)


def beta_for_growth(g: float, alpha: float) -> float:
    """
    Reclassification rate that yields growth factor g for the given alpha
    """
    if g < 1 + alpha or alpha <= 0:
        raise ValidationError(f"need alpha > 0 and g >= 1 + alpha, got g={g}, alpha={alpha}")
    return (math.log(g) - math.log(alpha)) / (math.log(g) - math.log(g - 1)) - 1


def decline_time(beta: float, g: float) -> float:
    """
    Typical lag T = beta/(g-1) between the apparent peak filing year and the
    present
    """
    if g <= 1:
        raise ValidationError(f"decline time needs g > 1, got {g}")
    if beta < 0:
        raise ValidationError(f"beta must be nonnegative, got {beta}")
    return beta / (g - 1)


def reclass_proportion(g: float, alpha: float) -> float:
    """
    Asymptotic fraction V = g - 1 - alpha of the stock added yearly by
    reclassification
    """
    v = g - 1 - alpha
    if v < 0:
        raise ValidationError(f"growth factor {g} is below 1 + alpha = {1 + alpha}")
    return v


def class_per_patent(w0: float, g: float, alpha: float) -> float:
    """
    Asymptotic classifications per patent W = W0·(g-1)/alpha
    """
    if w0 <= 0 or g <= 1 or alpha <= 0:
        raise ValidationError(f"need w0 > 0, g > 1, alpha > 0, got w0={w0}, g={g}, alpha={alpha}")
    return w0 * (g - 1) / alpha


def generating_function_closed(params: ModelParams, z: float) -> float:
    """
    G(z) = 1/((1-z)^(1+beta) - alpha·z), the generating function of n(t)
    """
    if z < 0:
        raise ValidationError(f"z must be nonnegative, got {z}")
    denominator = (1 - z) ** (1 + params.beta) - params.alpha * z if z < 1 else -params.alpha * z
    if denominator <= 0:
        raise ValidationError(f"z={z} is at or beyond the singularity of G for {params}")
    return 1 / denominator


def generating_function_series(params: ModelParams, z: float, terms: int = 400) -> float:
    """
    Truncated series Σ_{t<terms} n(t)·z^t
    """
    if terms < 1:
        raise ValidationError(f"need at least one term, got {terms}")
    totals = total_series(params, terms - 1)
    powers = z ** numpy.arange(terms, dtype=float)
    return float(totals @ powers)


def identity_check(beta: float, tau: int, u: int) -> tuple[float, float]:
    """
    Both sides of the binomial convolution identity used to derive the exact
    solution:

    Σ_k binom(k+beta, k)·binom(tau+u·beta-2-k, tau-1-u-k) = binom((u+1)·beta+tau-1, tau-u-1)
    """
    if tau < 1 or not 0 <= u <= tau - 1:
        raise ValidationError(f"need tau >= 1 and 0 <= u <= tau-1, got tau={tau}, u={u}")
    lhs = math.fsum(
        gen_binomial(k + beta, k) * gen_binomial(tau + u * beta - 2 - k, tau - 1 - u - k)
        for k in range(tau - u))
    rhs = gen_binomial((u + 1) * beta + tau - 1, tau - u - 1)
    return lhs, rhs


def predict(
        params: ModelParams,
        w0: float | None = None,
        tol: float = DEFAULT_TOL) -> tuple[GrowthSolution, PredictedQuantities]:
    """
    Growth factor and the quantities predicted from it
    """
    solution = growth_factor(params, tol=tol)
    g = solution.g
    quantities = PredictedQuantities(
        decline_time_T=decline_time(params.beta, g),
        # Clamp rounding below the lower bracket end
        reclass_proportion_V=max(0.0, g - 1 - params.alpha),
        class_per_patent_W=class_per_patent(w0, g, params.alpha) if w0 is not None else None,
        w0=w0)
    return solution, quantities
