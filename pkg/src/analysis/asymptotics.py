"""
File: asymptotics.py
Description: Closed-form tail approximations for normalized sums: the
exponential correction ratios against the normal tail (moderate
deviations), the n^{1/6} simplification, the conditional-exceedance limit
1 - e^{-c}, the large-deviation tail (b0 / sqrt(n)) e^{-alpha n} and the
log-asymptote factor 2 alpha / c^2.

Lower-tail variants are evaluated on the negated law.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

from config.settings import REGIME_LIMIT
from src.analysis.cgf_engine import CgfProfile
from src.analysis.saddlepoint import lambda_coeffs, lambda_fn, solve_saddle
from src.distributions.dist_model import DistributionSpec, exact_sum_tail
from src.utilities.errors import DegenerateError, XTooSmallError
from src.utilities.numerics import log_normal_tail, safe_exp

logger = logging.getLogger(__name__)

METHODS = ("normal", "thm1", "thm2", "thm3", "thm6", "exact", "mc", "is")
ASYMPTOTIC_METHODS = ("normal", "thm1", "thm2", "thm3", "thm6")
STOCHASTIC_METHODS = ("mc", "is")


@dataclass(frozen=True)
class TailEstimate:
    """
    A tail probability (or a ratio to the normal tail) with provenance.

    Raw formula values are never clamped to [0, 1]; regime_violations
    names the advisory scaling checks that failed for this input.
    log_value keeps the natural log so callers can combine factors that
    over- or underflow on their own.
    """
    value: float
    method: str
    error_note: str
    log_value: Optional[float] = None
    regime_violations: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def in_regime(self) -> bool:
        return not self.regime_violations


def standardized_x(spec, n: float, threshold: float) -> float:
    """x such that threshold = sigma x sqrt(n)"""
    return threshold / (spec.std * math.sqrt(n))


def threshold_from_x(spec, n: float, x: float) -> float:
    return spec.std * x * math.sqrt(n)


def threshold_from_c(spec, n: float, c: float) -> float:
    return spec.std * c * n


def _moderate_regime(profile: CgfProfile, x: float, n: int,
                     check_sixth_root: bool = False) -> Tuple[str, ...]:
    violations = []
    if profile.has_density:
        if x / math.sqrt(n) > REGIME_LIMIT:
            violations.append("x_gt_sqrt_n")
    elif x * math.log(n) / math.sqrt(n) > REGIME_LIMIT:
        violations.append("x_gt_sqrt_n_over_log_n")
    if check_sixth_root and x / n ** (1.0 / 6.0) > REGIME_LIMIT:
        violations.append("x_gt_n_one_sixth")
    return tuple(violations)


def _thm1_note(profile: CgfProfile) -> str:
    # with an absolutely continuous component the log n factor drops
    return "1+O(x/√n)" if profile.has_density else "1+O(x·log n/√n)"


def _require_x(x: float, bound: float = 1.0):
    if not x > bound:
        raise XTooSmallError(f"x={x} must exceed {bound}")


def thm1_upper_ratio(profile: CgfProfile, x: float, n: int) -> TailEstimate:
    """
    Leading factor of (1 - F_n(x)) / (1 - Phi(x)):
    exp(x^3/sqrt(n) * lambda(x/sqrt(n))).
    :param profile: CGF profile of the summand law.
    :param x: Standardized threshold, x > 1.
    :param n: Number of summands.
    :return: TailEstimate holding the ratio.
    """
    _require_x(x)
    z = x / math.sqrt(n)
    exponent = x**3 / math.sqrt(n) * lambda_fn(profile, z)
    violations = _moderate_regime(profile, x, n)
    if violations:
        logger.warning(f"thm1 at x={x}, n={n} outside its regime: "
                       f"{', '.join(violations)}")
    return TailEstimate(value=safe_exp(exponent), method="thm1",
                        error_note=_thm1_note(profile), log_value=exponent,
                        regime_violations=violations)


def thm1_lower_ratio(profile: CgfProfile, x: float, n: int) -> TailEstimate:
    """
    Leading factor of F_n(-x) / Phi(-x):
    exp(-x^3/sqrt(n) * lambda(-x/sqrt(n))), computed as the upper ratio of
    the negated law.
    """
    return thm1_upper_ratio(profile.negated(), x, n)


def thm2_ratio(profile: CgfProfile, x: float, n: int,
               lower: bool = False) -> TailEstimate:
    """
    exp(c0 x^3 / sqrt(n)), the simplification valid for x = O(n^{1/6}).
    :param profile: CGF profile.
    :param x: Standardized threshold, x > 1.
    :param n: Number of summands.
    :param lower: Use the lower-tail display (c0 of the negated law).
    :return: TailEstimate holding the ratio.
    """
    _require_x(x)
    if lower:
        profile = profile.negated()
    c0, _ = lambda_coeffs(profile)
    note = "+O(x/√n)" if profile.has_density else "+O(x·log n/√n)"
    exponent = c0 * x**3 / math.sqrt(n)
    return TailEstimate(value=safe_exp(exponent), method="thm2",
                        error_note=note, log_value=exponent,
                        regime_violations=_moderate_regime(
                            profile, x, n, check_sixth_root=True))


def thm3_tail(profile: CgfProfile, x: float, n: int,
              lower: bool = False) -> TailEstimate:
    """
    [1 - Phi(x)] exp(c0 x^3 / sqrt(n)) for the upper tail, or
    Phi(-x) exp(-c0 x^3 / sqrt(n)) for the lower tail.
    """
    _require_x(x, 0.0)
    if lower:
        profile = profile.negated()
    c0, _ = lambda_coeffs(profile)
    note = ("+O(e^{-x²/2}/√n)" if profile.has_density
            else "+O(log n·e^{-x²/2}/√n)")
    log_value = log_normal_tail(x) + c0 * x**3 / math.sqrt(n)
    return TailEstimate(
        value=safe_exp(log_value), method="thm3", error_note=note,
        log_value=log_value,
        regime_violations=_moderate_regime(profile, x, n,
                                           check_sixth_root=True))


def thm4_limit(c: float) -> float:
    """
    Common limit 1 - e^{-c} of the conditional exceedance ratios.
    :param c: Positive constant.
    :return: 1 - e^{-c}
    """
    if not c > 0:
        raise DegenerateError(f"c must be positive, got {c}")
    return -math.expm1(-c)


def thm4_gaussian_reference(x: float, c: float) -> float:
    """
    [Phi(x + c/x) - Phi(x)] / [1 - Phi(x)], evaluated in log space so it
    stays finite where the normal tail underflows.
    """
    log_ratio = log_normal_tail(x + c / x) - log_normal_tail(x)
    return -math.expm1(log_ratio)


def thm4_exact_ratio(spec: DistributionSpec, x: float, c: float,
                     n: int) -> float:
    """
    Finite-n counterpart [F_n(x + c/x) - F_n(x)] / [1 - F_n(x)] from the
    exact tail of the sum.
    """
    tail_x = exact_sum_tail(spec, n, threshold_from_x(spec, n, x))
    tail_shifted = exact_sum_tail(spec, n,
                                  threshold_from_x(spec, n, x + c / x))
    if tail_x <= 0:
        raise DegenerateError(f"1 - F_n({x}) is zero at n={n}")
    return (tail_x - tail_shifted) / tail_x


def thm6_tail(profile: CgfProfile, c: float, n: float) -> TailEstimate:
    """
    Large-deviation tail 1 - F_n(c sqrt(n)) ~ (b0 / sqrt(n)) e^{-alpha n}
    for 0 < c < C1; for -C2 < c < 0 the value is F_n(c sqrt(n)) through
    the negated law.
    :param profile: CGF profile.
    :param c: Target per-summand mean in units of sigma.
    :param n: Number of summands (or elapsed time for a process).
    :return: TailEstimate.
    """
    if c == 0:
        raise DegenerateError("c = 0 gives h = 0 and an infinite b0")
    if c < 0:
        return thm6_tail(profile.negated(), -c, n)

    solution = solve_saddle(profile, c)
    violations = ()
    if not profile.has_density:
        logger.warning(f"thm6 for {profile.label}: no absolutely continuous "
                       f"component, the expansion is not guaranteed")
        violations = ("missing_condition_b",)
    log_value = (math.log(solution.b0) - 0.5 * math.log(n)
                 - solution.alpha * n)
    return TailEstimate(value=safe_exp(log_value), method="thm6",
                        error_note="relative O(1/n)", log_value=log_value,
                        regime_violations=violations)


def log_asymptote_factor(profile: CgfProfile, c: float) -> float:
    """
    2 alpha(c) / c^2: log[1 - F_n(c sqrt(n))] ~ -(2 alpha / c^2) x^2 / 2.
    """
    if c == 0:
        raise DegenerateError("log-asymptote factor needs c != 0")
    return 2.0 * solve_saddle(profile, c).alpha / c**2
