"""
File: numerics.py
Description: Small numerical building blocks: open intervals with possibly
unbounded ends, the strict exceedance rule used by every tail estimator,
and a bisection-safeguarded Newton solver for increasing functions.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import special

from config.settings import EXCEEDANCE_RTOL

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Interval:
    """
    Open interval (lower, upper). An end set to None is unbounded; infinite
    ends are never encoded as floats.
    """
    lower: Optional[float]
    upper: Optional[float]

    def contains(self, value: float) -> bool:
        """
        Strict membership; the endpoints themselves are excluded.
        :param value: Point to test.
        :return: True if lower < value < upper.
        """
        if not math.isfinite(value):
            return False
        if self.lower is not None and value <= self.lower:
            return False
        if self.upper is not None and value >= self.upper:
            return False
        return True

    def reflected(self) -> "Interval":
        """Interval of -v for v in this interval"""
        return Interval(
            lower=None if self.upper is None else -self.upper,
            upper=None if self.lower is None else -self.lower,
        )

    def describe(self) -> str:
        lo = "-inf" if self.lower is None else f"{self.lower:.6g}"
        hi = "+inf" if self.upper is None else f"{self.upper:.6g}"
        return f"({lo}, {hi})"


def normal_tail(x: float) -> float:
    """
    1 - Phi(x) through the complementary error function; keeps full
    relative accuracy far into the upper tail.
    """
    return float(0.5 * special.erfc(x / math.sqrt(2.0)))


def log_normal_tail(x: float) -> float:
    """log(1 - Phi(x)), finite even where 1 - Phi(x) underflows"""
    return float(special.log_ndtr(-x))


def safe_exp(log_value: float) -> float:
    """exp that saturates to inf instead of raising OverflowError"""
    with np.errstate(over="ignore"):
        return float(np.exp(log_value))


def exceedance_margin(threshold: float) -> float:
    """Cut-off above which a sum counts as exceeding `threshold`"""
    return threshold + EXCEEDANCE_RTOL * max(1.0, abs(threshold))


def exceeds(sums: np.ndarray, threshold: float) -> np.ndarray:
    """
    Strict exceedance indicator with a relative guard, so sums that land on
    a lattice point equal to the threshold never count through rounding.
    :param sums: Array of simulated or enumerated sums.
    :param threshold: Tail threshold t.
    :return: Boolean array of S > t.
    """
    return np.asarray(sums) > exceedance_margin(threshold)


@dataclass
class RootResult:
    root: float
    residual: float
    iterations: int
    converged: bool


def safeguarded_newton(func: Callable[[float], float],
                       fprime: Callable[[float], float],
                       lo: float, hi: float, x0: float,
                       tol: float, maxiter: int) -> RootResult:
    """
    Root of an increasing function inside the bracket [lo, hi] with
    func(lo) <= 0 <= func(hi). Newton steps are taken when they stay inside
    the current bracket, otherwise the bracket is bisected.
    :param func: Increasing function whose root is sought.
    :param fprime: Its derivative.
    :param lo: Lower bracket end.
    :param hi: Upper bracket end.
    :param x0: Initial guess, clipped into the bracket.
    :param tol: Absolute residual tolerance |func(x)| <= tol.
    :param maxiter: Iteration cap.
    :return: RootResult, converged=False if the tolerance was not met.
    """
    x = min(max(x0, lo), hi)
    fx = func(x)

    for iteration in range(1, maxiter + 1):
        if abs(fx) <= tol:
            return RootResult(x, fx, iteration - 1, True)

        if fx < 0:
            lo = x
        else:
            hi = x

        slope = fprime(x)
        step_ok = False
        if slope > 0 and math.isfinite(slope):
            candidate = x - fx / slope
            step_ok = lo < candidate < hi
        if not step_ok:
            candidate = 0.5 * (lo + hi)

        if candidate == x:
            # bracket collapsed to floating-point resolution
            return RootResult(x, fx, iteration, abs(fx) <= tol)

        x = candidate
        fx = func(x)
        logger.debug(f"newton iter {iteration}: x={x:.17g} f={fx:.3e}")

    return RootResult(x, fx, maxiter, abs(fx) <= tol)


def smoothstep(t: float) -> float:
    """Cubic blend weight 3t^2 - 2t^3 on [0, 1]"""
    t = min(max(t, 0.0), 1.0)
    return t * t * (3.0 - 2.0 * t)


def grid_bounds(interval: Interval, centre: float,
                half_width: float, shrink: float = 1e-9) -> Tuple[float, float]:
    """
    Finite window [centre - half_width, centre + half_width] clipped to lie
    strictly inside an open interval.
    """
    lo = centre - half_width
    hi = centre + half_width
    if interval.lower is not None:
        lo = max(lo, interval.lower + shrink * max(1.0, abs(interval.lower)))
    if interval.upper is not None:
        hi = min(hi, interval.upper - shrink * max(1.0, abs(interval.upper)))
    return lo, hi
