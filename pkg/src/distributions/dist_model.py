"""
File: dist_model.py
Description: Zero-mean input laws for the summands Z_1, ..., Z_n: exact
cumulants, samplers (optionally under an exponential tilt) and exact tails
of the n-fold sum where a closed route exists.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import special, stats

from config.settings import MAX_LATTICE_SUPPORT
from src.utilities.errors import (
    ConfigError, InvalidDistributionError, TooLargeError, UnsupportedError
)
from src.utilities.numerics import exceedance_margin, exceeds, normal_tail

logger = logging.getLogger(__name__)


class DistributionSpec(ABC):
    """
    Base class for a zero-mean, finite-variance law V(x).

    Subclasses are immutable and safe to share between threads; samplers
    take a caller-owned numpy Generator.
    """

    family: str = ""
    has_density: bool = False

    @abstractmethod
    def moments(self) -> Tuple[float, float, float]:
        """Cumulants (sigma^2, gamma_3, gamma_4) of the centered law"""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int,
               h: float = 0.0) -> np.ndarray:
        """Single draws, from the h-tilted law when h != 0"""

    @abstractmethod
    def sample_sums(self, rng: np.random.Generator, n: int, size: int,
                    h: float = 0.0) -> np.ndarray:
        """Draws of Z_1 + ... + Z_n, from the h-tilted law when h != 0"""

    @abstractmethod
    def exact_sum_tail(self, n: int, threshold: float) -> float:
        """P(Z_1 + ... + Z_n > threshold)"""

    @abstractmethod
    def negated(self) -> "DistributionSpec":
        """The law of -Z"""

    @abstractmethod
    def to_config(self) -> Dict:
        """Inverse of distribution_from_config"""

    @property
    def variance(self) -> float:
        return self.moments()[0]

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def label(self) -> str:
        params = ",".join(f"{k}={v}" for k, v in self.to_config().items()
                          if k != "family")
        return f"{self.family}({params})"


def _check_count(n: int, name: str = "n"):
    if int(n) != n or n < 1:
        raise InvalidDistributionError(f"{name} must be a positive integer, "
                                       f"got {n}")


@dataclass(frozen=True)
class CenteredBernoulli(DistributionSpec):
    """
    Repeated-trials law: Z = 1 - p with probability p, Z = -p otherwise.
    """
    p: float
    family = "centered_bernoulli"
    has_density = False

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidDistributionError(
                f"Bernoulli probability must lie in (0, 1), got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def moments(self) -> Tuple[float, float, float]:
        pq = self.p * self.q
        return pq, pq * (self.q - self.p), pq * (1.0 - 6.0 * pq)

    def tilted_success(self, h: float) -> float:
        return float(special.expit(h + special.logit(self.p)))

    def sample(self, rng, size, h=0.0):
        success = self.tilted_success(h) if h else self.p
        return rng.binomial(1, success, size) - self.p

    def sample_sums(self, rng, n, size, h=0.0):
        _check_count(n)
        success = self.tilted_success(h) if h else self.p
        return rng.binomial(n, success, size) - n * self.p

    def exact_sum_tail(self, n: int, threshold: float) -> float:
        # S = K - n p with K ~ Bin(n, p); S > t  <=>  K > t + n p
        _check_count(n)
        k_cut = math.floor(exceedance_margin(threshold) + n * self.p)
        return float(stats.binom.sf(k_cut, n, self.p))

    def as_lattice(self) -> "FiniteLattice":
        return FiniteLattice(((self.q, self.p), (-self.p, self.q)))

    def negated(self) -> "CenteredBernoulli":
        return CenteredBernoulli(self.q)

    def to_config(self) -> Dict:
        return {"family": self.family, "p": self.p}


@dataclass(frozen=True)
class CenteredExponential(DistributionSpec):
    """
    Z = sign * (E - 1/rate) with E ~ Exp(rate). sign = -1 gives the
    reflected law used for lower tails.
    """
    rate: float
    sign: int = 1
    family = "centered_exponential"
    has_density = True

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidDistributionError(
                f"Exponential rate must be positive, got {self.rate}")
        if self.sign not in (1, -1):
            raise InvalidDistributionError(f"sign must be +1 or -1, "
                                           f"got {self.sign}")

    def moments(self) -> Tuple[float, float, float]:
        r = self.rate
        return 1.0 / r**2, 2.0 * self.sign / r**3, 6.0 / r**4

    def tilted_rate(self, h: float) -> float:
        return self.rate - self.sign * h

    def sample(self, rng, size, h=0.0):
        draws = rng.exponential(1.0 / self.tilted_rate(h), size)
        return self.sign * (draws - 1.0 / self.rate)

    def sample_sums(self, rng, n, size, h=0.0):
        _check_count(n)
        totals = rng.gamma(n, 1.0 / self.tilted_rate(h), size)
        return self.sign * (totals - n / self.rate)

    def exact_sum_tail(self, n: int, threshold: float) -> float:
        # sum of E_i is Gamma(n, rate)
        _check_count(n)
        if self.sign == 1:
            level = self.rate * threshold + n
            return float(special.gammaincc(n, level)) if level > 0 else 1.0
        level = n - self.rate * threshold
        return float(special.gammainc(n, level)) if level > 0 else 0.0

    def negated(self) -> "CenteredExponential":
        return CenteredExponential(self.rate, -self.sign)

    def to_config(self) -> Dict:
        config = {"family": self.family, "rate": self.rate}
        if self.sign != 1:
            config["sign"] = self.sign
        return config


@dataclass(frozen=True)
class Gaussian(DistributionSpec):
    sigma: float
    family = "gaussian"
    has_density = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidDistributionError(
                f"Gaussian sigma must be positive, got {self.sigma}")

    def moments(self) -> Tuple[float, float, float]:
        return self.sigma**2, 0.0, 0.0

    @property
    def std(self) -> float:
        return self.sigma

    def sample(self, rng, size, h=0.0):
        return rng.normal(self.sigma**2 * h, self.sigma, size)

    def sample_sums(self, rng, n, size, h=0.0):
        _check_count(n)
        return rng.normal(n * self.sigma**2 * h, self.sigma * math.sqrt(n),
                          size)

    def exact_sum_tail(self, n: int, threshold: float) -> float:
        _check_count(n)
        return normal_tail(threshold / (self.std * math.sqrt(n)))

    def negated(self) -> "Gaussian":
        return self

    def to_config(self) -> Dict:
        return {"family": self.family, "sigma": self.sigma}


def _fraction(value) -> Fraction:
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    # decimal text of the float, so 0.7 stays 7/10
    return Fraction(repr(float(value)))


def _fraction_gcd(values: Sequence[Fraction]) -> Fraction:
    denominator = reduce(lambda a, b: a * b // math.gcd(a, b),
                         (v.denominator for v in values), 1)
    numerator = reduce(math.gcd,
                       (int(v * denominator) for v in values), 0)
    return Fraction(numerator, denominator)


@dataclass(frozen=True)
class FiniteLattice(DistributionSpec):
    """
    Finite law on an arithmetic progression. Atoms are recentered at
    construction: values are stored exactly as origin + step * offset.
    """
    atoms: Tuple[Tuple[float, float], ...]
    origin: Fraction = field(init=False, compare=False, repr=False)
    step: Fraction = field(init=False, compare=False, repr=False)
    offsets: Tuple[int, ...] = field(init=False, compare=False, repr=False)
    family = "lattice"
    has_density = False

    def __post_init__(self):
        raw = [(_fraction(v), _fraction(p)) for v, p in self.atoms]
        if not raw:
            raise InvalidDistributionError("lattice needs at least one atom")
        for value, prob in raw:
            if not 0 < prob <= 1:
                raise InvalidDistributionError(
                    f"atom probability {float(prob)} outside (0, 1]")
        total = sum(p for _, p in raw)
        if abs(float(total) - 1.0) > 1e-12:
            raise InvalidDistributionError(
                f"atom probabilities sum to {float(total)}, expected 1")

        merged: Dict[Fraction, Fraction] = {}
        for value, prob in raw:
            merged[value] = merged.get(value, 0) + prob / total
        mean = sum(v * p for v, p in merged.items())
        centered = sorted((v - mean, p) for v, p in merged.items())
        if len(centered) < 2:
            raise InvalidDistributionError("lattice variance must be positive")

        origin = centered[0][0]
        step = _fraction_gcd([v - origin for v, _ in centered[1:]])
        offsets = tuple(int((v - origin) / step) for v, _ in centered)

        object.__setattr__(self, "atoms", tuple((float(v), float(p))
                                                for v, p in centered))
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "offsets", offsets)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def moments(self) -> Tuple[float, float, float]:
        values, probs = self.values, self.probs
        m2 = math.fsum(probs * values**2)
        m3 = math.fsum(probs * values**3)
        m4 = math.fsum(probs * values**4)
        return m2, m3, m4 - 3.0 * m2**2

    def tilted_probs(self, h: float) -> np.ndarray:
        log_w = h * self.values + np.log(self.probs)
        return np.exp(log_w - special.logsumexp(log_w))

    def sample(self, rng, size, h=0.0):
        probs = self.tilted_probs(h) if h else self.probs
        return rng.choice(self.values, size=size, p=probs)

    def sample_sums(self, rng, n, size, h=0.0):
        _check_count(n)
        probs = self.tilted_probs(h) if h else self.probs
        counts = rng.multinomial(n, probs, size=size)
        return counts @ self.values

    def sum_pmf(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Exact law of the n-fold sum on its lattice by n - 1 successive
        convolutions of the single-summand PMF.
        :param n: Number of summands.
        :return: (support values, probabilities) of Z_1 + ... + Z_n.
        """
        _check_count(n)
        width = self.offsets[-1]
        support = n * width + 1
        if support > MAX_LATTICE_SUPPORT:
            raise TooLargeError(
                f"{n}-fold convolution needs {support} support points, "
                f"limit is {MAX_LATTICE_SUPPORT}")

        base = np.zeros(width + 1)
        for offset, (_, prob) in zip(self.offsets, self.atoms):
            base[offset] = prob
        pmf = base
        for _ in range(n - 1):
            pmf = np.convolve(pmf, base)

        origin = float(n * self.origin)
        step = float(self.step)
        grid = origin + step * np.arange(support)
        logger.debug(f"Convolved {self.label} {n} times: {support} points")
        return grid, pmf

    def exact_sum_tail(self, n: int, threshold: float) -> float:
        grid, pmf = self.sum_pmf(n)
        return math.fsum(pmf[exceeds(grid, threshold)])

    def negated(self) -> "FiniteLattice":
        return FiniteLattice(tuple((-v, p) for v, p in self.atoms))

    def to_config(self) -> Dict:
        return {"family": self.family,
                "atoms": [[v, p] for v, p in self.atoms]}


def moments(spec: DistributionSpec) -> Tuple[float, float, float]:
    """
    Analytic cumulants of a centered law.
    :param spec: Distribution.
    :return: (sigma^2, gamma_3, gamma_4)
    """
    return spec.moments()


def sample(spec: DistributionSpec, rng: np.random.Generator,
           n: int) -> np.ndarray:
    """
    n i.i.d. draws from V.
    :param spec: Distribution.
    :param rng: Caller-owned numpy Generator.
    :param n: Number of draws (>= 1).
    :return: Array of draws.
    """
    _check_count(n)
    return spec.sample(rng, n)


def exact_sum_tail(spec: DistributionSpec, n: int, threshold: float) -> float:
    """
    Exact P(Z_1 + ... + Z_n > threshold): binomial survival, regularized
    upper incomplete gamma, normal survival or lattice convolution.
    :param spec: Distribution.
    :param n: Number of summands.
    :param threshold: Tail threshold on the raw sum.
    :return: Tail probability.
    """
    try:
        return spec.exact_sum_tail(n, threshold)
    except TooLargeError as e:
        raise UnsupportedError(f"no exact route for {spec.label} at n={n}: "
                               f"{e.message}")


_FAMILY_KEYS = {
    "centered_bernoulli": ({"p"}, set()),
    "centered_exponential": ({"rate"}, {"sign"}),
    "gaussian": ({"sigma"}, set()),
    "lattice": ({"atoms"}, set()),
}


def distribution_from_config(config: Dict,
                             path: str = "distribution") -> DistributionSpec:
    """
    Build a distribution from its config document, e.g.
    {"family": "centered_bernoulli", "p": 0.3} or
    {"family": "lattice", "atoms": [[-1, 0.5], [1, 0.5]]}.
    :param config: Parsed JSON object.
    :param path: Dotted config path used in error messages.
    :return: DistributionSpec.
    """
    if not isinstance(config, dict):
        raise ConfigError("distribution must be an object", path)
    family = config.get("family")
    if family not in _FAMILY_KEYS:
        raise ConfigError(f"unknown family {family!r}; expected one of "
                          f"{sorted(_FAMILY_KEYS)}", f"{path}.family")

    required, optional = _FAMILY_KEYS[family]
    keys = set(config) - {"family"}
    for key in sorted(keys - required - optional):
        raise ConfigError(f"unknown key {key!r} for family {family}",
                          f"{path}.{key}")
    for key in sorted(required - keys):
        raise ConfigError(f"missing key {key!r}", f"{path}.{key}")

    try:
        if family == "centered_bernoulli":
            return CenteredBernoulli(float(config["p"]))
        if family == "centered_exponential":
            return CenteredExponential(float(config["rate"]),
                                       int(config.get("sign", 1)))
        if family == "gaussian":
            return Gaussian(float(config["sigma"]))
        atoms: List = config["atoms"]
        return FiniteLattice(tuple((v, p) for v, p in atoms))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad parameter: {e}", path)
    except InvalidDistributionError as e:
        raise ConfigError(e.message, path)
