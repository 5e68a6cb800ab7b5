"""
File: saddlepoint.py
Description: Saddle-point equation mbar(h) = sigma z, the rate exponent
alpha = h mbar - kappa(h) (a Legendre transform), the correction function
lambda(z) with z^3 lambda(z) = z^2/2 - alpha and its series coefficients.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from config.settings import (
    LAMBDA_DEGENERATE_RADIUS, LAMBDA_SERIES_RADIUS, LEGENDRE_AGREEMENT_TOL,
    LEGENDRE_GRID_POINTS, SADDLE_MAX_ITER, SADDLE_RTOL
)
from src.analysis.cgf_engine import CgfProfile
from src.utilities.errors import (
    DegenerateError, NoConvergenceError, TargetOutOfRangeError
)
from src.utilities.numerics import grid_bounds, safeguarded_newton, smoothstep

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SaddleSolution:
    """
    Root of mbar(h) = sigma z and the quantities derived from it.

    Attributes:
        z: standardized target, mbar / sigma
        h: tilt root, same sign as z
        mbar: tilted mean, sigma z
        sigbar: tilted standard deviation at h
        alpha: rate exponent h mbar - kappa(h), nats per summand
        lambda_z: correction lambda(z)
        b0: leading prefactor 1 / (|h| sigbar sqrt(2 pi)); None at z = 0
        residual: mbar(h) - sigma z at the returned root
        iterations: solver iterations used
    """
    z: float
    h: float
    mbar: float
    sigbar: float
    alpha: float
    lambda_z: float
    b0: Optional[float]
    residual: float = 0.0
    iterations: int = 0


def lambda_coeffs(profile: CgfProfile) -> Tuple[float, float]:
    """
    First two coefficients of lambda(z) = c0 + c1 z + ...
    :param profile: CGF profile.
    :return: (c0, c1) = (g3 / 6 s^3, (s^2 g4 - 3 g3^2) / 24 s^6)
    """
    sigma2, gamma3, gamma4 = profile.cumulants
    sigma = math.sqrt(sigma2)
    c0 = gamma3 / (6.0 * sigma**3)
    c1 = (sigma2 * gamma4 - 3.0 * gamma3**2) / (24.0 * sigma2**3)
    return c0, c1


def inversion_series_h(profile: CgfProfile, z: float) -> float:
    """Two-term inversion of the saddle equation, h ~ z/s - g3 z^2 / 2s^4"""
    sigma2, gamma3, _ = profile.cumulants
    return z / math.sqrt(sigma2) - gamma3 * z**2 / (2.0 * sigma2**2)


def _check_target(profile: CgfProfile, z: float) -> float:
    target = profile.sigma * z
    if not profile.drift_limits.contains(target):
        raise TargetOutOfRangeError(
            f"sigma*z={target:.6g} outside the drift limits "
            f"{profile.drift_limits.describe()} of {profile.label}")
    return target


def _bracket(profile: CgfProfile, target: float) -> Tuple[float, float]:
    """
    Grow [0, h_hi] (or its mirror image) until mbar crosses the target,
    approaching a finite strip end geometrically.
    """
    direction = 1.0 if target > 0 else -1.0
    edge = profile.strip.upper if direction > 0 else profile.strip.lower
    edge = None if edge is None else abs(edge)

    inner = 0.0
    outer = abs(target) / profile.variance
    if edge is not None and outer >= edge:
        outer = 0.5 * edge

    for _ in range(SADDLE_MAX_ITER):
        if direction * profile.mbar(direction * outer) >= abs(target):
            break
        inner = outer
        if edge is None:
            outer *= 2.0
        else:
            outer += 0.5 * (edge - outer)
            if edge - outer <= 1e-12 * edge:
                raise NoConvergenceError(
                    f"no bracket for sigma*z={target:.6g} before the strip "
                    f"end {direction * edge:.6g}")
    else:
        raise NoConvergenceError(f"bracket search for sigma*z={target:.6g} "
                                 f"did not terminate")

    if direction > 0:
        return inner, outer
    return -outer, -inner


def _lambda_from_alpha(profile: CgfProfile, z: float, alpha: float) -> float:
    c0, c1 = lambda_coeffs(profile)
    series = c0 + c1 * z
    if abs(z) < LAMBDA_DEGENERATE_RADIUS:
        return series
    direct = (0.5 * z**2 - alpha) / z**3
    if abs(z) >= LAMBDA_SERIES_RADIUS:
        return direct
    weight = smoothstep(abs(z) / LAMBDA_SERIES_RADIUS)
    return weight * direct + (1.0 - weight) * series


def solve_saddle(profile: CgfProfile, z: float) -> SaddleSolution:
    """
    Solve mbar(h) = sigma z by bracketing plus safeguarded Newton, started
    from the inversion series.
    :param profile: CGF profile.
    :param z: Standardized target; sigma z must lie inside the drift limits.
    :return: SaddleSolution.
    """
    target = _check_target(profile, z)

    if z == 0:
        c0, _ = lambda_coeffs(profile)
        return SaddleSolution(z=0.0, h=0.0, mbar=0.0, sigbar=profile.sigma,
                              alpha=0.0, lambda_z=c0, b0=None)

    lo, hi = _bracket(profile, target)
    tol = SADDLE_RTOL * max(profile.sigma, abs(target))
    result = safeguarded_newton(
        func=lambda h: profile.mbar(h) - target,
        fprime=profile.sigbar2,
        lo=lo, hi=hi,
        x0=inversion_series_h(profile, z),
        tol=tol,
        maxiter=SADDLE_MAX_ITER,
    )
    if not result.converged:
        raise NoConvergenceError(
            f"saddle residual {result.residual:.3e} above {tol:.3e} after "
            f"{result.iterations} iterations (z={z}, {profile.label})")

    h = result.root
    alpha = h * target - profile.kappa(h)
    sigbar = math.sqrt(profile.sigbar2(h))
    solution = SaddleSolution(
        z=z,
        h=h,
        mbar=target,
        sigbar=sigbar,
        alpha=alpha,
        lambda_z=_lambda_from_alpha(profile, z, alpha),
        b0=1.0 / (abs(h) * sigbar * SQRT_2PI),
        residual=result.residual,
        iterations=result.iterations,
    )
    logger.debug(f"Saddle for {profile.label} at z={z}: h={h:.12g}, "
                 f"alpha={alpha:.12g} in {result.iterations} iterations")
    return solution


def lambda_fn(profile: CgfProfile, z: float) -> float:
    """
    lambda(z) = [mbar^2 / 2 sigma^2 - h mbar + kappa(h)] / z^3.
    :param profile: CGF profile.
    :param z: Nonzero standardized target.
    :return: lambda(z); near zero the two-term series is blended in.
    """
    if abs(z) < LAMBDA_DEGENERATE_RADIUS:
        raise DegenerateError(f"|z|={abs(z):.3g} is inside the cancellation "
                              f"regime; use lambda_coeffs")
    return solve_saddle(profile, z).lambda_z


def legendre_alpha_grid(profile: CgfProfile, c: float,
                        points: int = LEGENDRE_GRID_POINTS) -> float:
    """
    sup_h [h sigma c - kappa(h)] by grid search over the strip, polished
    with a bounded scalar minimisation around the best grid point.
    :param profile: CGF profile.
    :param c: Target, sigma c inside the drift limits.
    :param points: Number of grid points.
    :return: Grid estimate of alpha(c).
    """
    target = _check_target(profile, c)
    half_width = max(1.0, 2.0 * abs(target) / profile.variance)

    for _ in range(64):
        lo, hi = grid_bounds(profile.strip, 0.0, half_width)
        hs = np.linspace(lo, hi, points)
        objective = hs * target - profile.kappa_grid(hs)
        best = int(np.argmax(objective))
        at_open_edge = ((best == 0 and lo == -half_width) or
                        (best == points - 1 and hi == half_width))
        if not at_open_edge:
            break
        half_width *= 2.0

    left = hs[max(best - 1, 0)]
    right = hs[min(best + 1, points - 1)]
    polished = optimize.minimize_scalar(
        lambda h: -(h * target - float(profile.kappa_grid(np.array([h]))[0])),
        bounds=(left, right), method="bounded",
        options={"xatol": 1e-14})
    return float(max(objective[best], -polished.fun))


def legendre_alpha(profile: CgfProfile, c: float) -> float:
    """
    Rate function alpha(c), root-based, cross-checked against the grid
    supremum.
    :param profile: CGF profile.
    :param c: Target in (-C2, C1).
    :return: alpha(c) from the saddle root.
    """
    alpha = solve_saddle(profile, c).alpha
    grid_alpha = legendre_alpha_grid(profile, c)
    if abs(alpha - grid_alpha) > LEGENDRE_AGREEMENT_TOL:
        logger.warning(f"Legendre duality gap {abs(alpha - grid_alpha):.3e} "
                       f"at c={c} for {profile.label}")
    return alpha
