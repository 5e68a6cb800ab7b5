"""
File: oracles.py
Description: Ground-truth tail estimators: exact lattice convolution, naive
Monte Carlo and importance sampling under the exponentially tilted law,
whose per-sample weight exp(-h S + n kappa(h)) turns tilted draws into an
unbiased estimate of the original tail.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.settings import MIN_SAMPLES
from src.analysis.cgf_engine import CgfProfile, tilt
from src.analysis.saddlepoint import solve_saddle
from src.distributions.dist_model import DistributionSpec, FiniteLattice
from src.simulation.streams import run_chunks, summarize
from src.utilities.errors import ConfigError, UnsupportedError
from src.utilities.numerics import exceeds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationReport:
    """
    Result of a stochastic tail estimate.

    Attributes:
        estimate: estimated P(S > threshold)
        std_error: standard error of the estimate
        n_samples: number of simulated sums
        method: "mc" or "is"
        seed: run seed, reproduces the estimate bit for bit
        elapsed: wall time in seconds
        tilt: tilt parameter used (0 for naive MC)
    """
    estimate: float
    std_error: float
    n_samples: int
    method: str
    seed: int
    elapsed: float
    tilt: float = 0.0

    @property
    def relative_error(self) -> float:
        return self.std_error / self.estimate if self.estimate > 0 else math.inf


def _check_samples(n_samples: int):
    if n_samples < MIN_SAMPLES:
        raise ConfigError(f"n_samples must be at least {MIN_SAMPLES}, "
                          f"got {n_samples}", "samples")


def naive_mc_tail(spec: DistributionSpec, n: int, threshold: float,
                  n_samples: int, seed: int,
                  threads: int = 1) -> SimulationReport:
    """
    Fraction of simulated sums Z_1 + ... + Z_n above the threshold.
    :param spec: Summand law.
    :param n: Number of summands.
    :param threshold: Tail threshold on the raw sum.
    :param n_samples: Number of simulated sums (>= 100).
    :param seed: Run seed.
    :param threads: Worker threads.
    :return: SimulationReport with binomial standard error.
    """
    _check_samples(n_samples)
    start = time.perf_counter()

    def work(rng, size):
        return summarize(exceeds(spec.sample_sums(rng, n, size), threshold))

    moments = run_chunks(work, n_samples, seed, threads)
    p_hat = moments.mean
    report = SimulationReport(
        estimate=p_hat,
        std_error=math.sqrt(p_hat * (1.0 - p_hat) / n_samples),
        n_samples=n_samples,
        method="mc",
        seed=seed,
        elapsed=time.perf_counter() - start,
    )
    logger.info(f"Naive MC {spec.label} n={n} t={threshold}: "
                f"{report.estimate:.6e} ± {report.std_error:.2e}")
    return report


def tilted_is_tail(profile: CgfProfile, n: int, threshold: float,
                   n_samples: int, seed: int, tilt_h: Optional[float] = None,
                   threads: int = 1) -> SimulationReport:
    """
    Importance-sampling estimate of P(S > threshold). By default the tilt
    solves mbar(h) = threshold / n.
    :param profile: CGF profile of the summand law.
    :param n: Number of summands.
    :param threshold: Tail threshold on the raw sum.
    :param n_samples: Number of simulated sums (>= 100).
    :param seed: Run seed.
    :param tilt_h: Force a tilt parameter instead of the saddle root.
    :param threads: Worker threads.
    :return: SimulationReport with the sample standard error of the weights.
    """
    _check_samples(n_samples)
    if tilt_h is None:
        per_summand = threshold / n
        if per_summand <= 0:
            logger.warning(f"Threshold {threshold} is not above the mean; "
                           f"falling back to naive MC")
            return naive_mc_tail(profile.spec, n, threshold, n_samples, seed,
                                 threads)
        tilt_h = solve_saddle(profile, per_summand / profile.sigma).h

    start = time.perf_counter()
    tilted = tilt(profile, tilt_h)
    log_scale = n * profile.kappa(tilt_h)

    def work(rng, size):
        sums = tilted.sample_sums(rng, n, size)
        weights = np.exp(-tilt_h * sums + log_scale)
        return summarize(np.where(exceeds(sums, threshold), weights, 0.0))

    moments = run_chunks(work, n_samples, seed, threads)
    report = SimulationReport(
        estimate=moments.mean,
        std_error=moments.std_error,
        n_samples=n_samples,
        method="is",
        seed=seed,
        elapsed=time.perf_counter() - start,
        tilt=tilt_h,
    )
    logger.info(f"IS {profile.label} n={n} t={threshold} h={tilt_h:.6g}: "
                f"{report.estimate:.6e} ± {report.std_error:.2e}")
    return report


def exact_lattice_tail(spec: FiniteLattice, n: int, threshold: float) -> float:
    """
    Exact tail of a lattice sum by n - 1 successive convolutions.
    :param spec: FiniteLattice law.
    :param n: Number of summands.
    :param threshold: Tail threshold.
    :return: P(S > threshold); TooLargeError past the support limit.
    """
    if not isinstance(spec, FiniteLattice):
        raise UnsupportedError(f"exact_lattice_tail needs a lattice law, "
                               f"got {spec.label}")
    return spec.exact_sum_tail(n, threshold)
