"""
File: levy_process.py
Description: Homogeneous process with stationary independent increments,
narrowed to a Brownian component plus compensated compound Poisson jumps:

    Z_t = sigma0 W_t + sum_{i <= N_t} J_i - jump_rate E[J] t

Per unit time, kappa(h) = sigma0^2 h^2 / 2 + rate (M_J(h) - 1 - h E J).
The process CGF is registered with cgf_engine, so saddle points, rate
exponents and tilting work exactly as for i.i.d. sums with n replaced by t.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import special, stats

from src.analysis.asymptotics import TailEstimate
from src.analysis.cgf_engine import (
    CgfProfile, ClosedFormCgf, register_cgf, tilt
)
from src.analysis.saddlepoint import solve_saddle
from src.simulation.oracles import SimulationReport, _check_samples
from src.simulation.streams import run_chunks, summarize
from src.utilities.errors import (
    ConfigError, DegenerateError, InvalidDistributionError, TooLargeError,
    UnsupportedError
)
from src.utilities.numerics import (
    Interval, exceedance_margin, exceeds, normal_tail, safe_exp
)

logger = logging.getLogger(__name__)

MAX_MEAN_JUMPS = 10**6


class JumpLaw(ABC):
    """Jump-size law J; unlike DistributionSpec it need not be centered"""

    family: str = ""

    @abstractmethod
    def mgf(self, h: float) -> Tuple[float, float, float]:
        """(M(h), M'(h), M''(h))"""

    @abstractmethod
    def raw_moment(self, k: int) -> float:
        pass

    @abstractmethod
    def strip(self) -> Interval:
        pass

    @abstractmethod
    def support(self) -> Interval:
        """Closed hull of the support; None marks an unbounded side"""

    @abstractmethod
    def tilted(self, h: float) -> "JumpLaw":
        pass

    @abstractmethod
    def sample_sums(self, rng: np.random.Generator, counts: np.ndarray,
                    h: float = 0.0) -> np.ndarray:
        """Sum of counts[i] i.i.d. (h-tilted) jumps for every i"""

    @abstractmethod
    def negated(self) -> "JumpLaw":
        pass

    @abstractmethod
    def to_config(self) -> Dict:
        pass


@dataclass(frozen=True)
class LatticeJumps(JumpLaw):
    """Finitely many jump sizes; a single atom gives deterministic jumps"""
    atoms: Tuple[Tuple[float, float], ...]
    family = "lattice"

    def __post_init__(self):
        atoms = tuple((float(v), float(p)) for v, p in self.atoms)
        if not atoms:
            raise InvalidDistributionError("jump law needs at least one atom")
        if any(not 0 < p <= 1 for _, p in atoms):
            raise InvalidDistributionError("jump probabilities must lie in "
                                           "(0, 1]")
        if abs(math.fsum(p for _, p in atoms) - 1.0) > 1e-12:
            raise InvalidDistributionError("jump probabilities must sum to 1")
        object.__setattr__(self, "atoms", atoms)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def mgf(self, h):
        terms = self.probs * np.exp(h * self.values)
        return (math.fsum(terms), math.fsum(terms * self.values),
                math.fsum(terms * self.values**2))

    def raw_moment(self, k):
        return math.fsum(self.probs * self.values**k)

    def strip(self):
        return Interval(None, None)

    def support(self):
        return Interval(float(self.values.min()), float(self.values.max()))

    def _tilted_probs(self, h):
        log_w = h * self.values + np.log(self.probs)
        return np.exp(log_w - special.logsumexp(log_w))

    def tilted(self, h):
        return LatticeJumps(tuple(zip(self.values, self._tilted_probs(h))))

    def sample_sums(self, rng, counts, h=0.0):
        probs = self._tilted_probs(h) if h else self.probs
        return rng.multinomial(counts, probs) @ self.values

    def negated(self):
        return LatticeJumps(tuple((-v, p) for v, p in self.atoms))

    def to_config(self):
        return {"family": self.family,
                "atoms": [[v, p] for v, p in self.atoms]}


@dataclass(frozen=True)
class ExponentialJumps(JumpLaw):
    """J = sign * E with E ~ Exp(rate)"""
    rate: float
    sign: int = 1
    family = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidDistributionError(f"jump rate parameter must be "
                                           f"positive, got {self.rate}")
        if self.sign not in (1, -1):
            raise InvalidDistributionError("sign must be +1 or -1")

    def mgf(self, h):
        r, u = self.rate, self.sign * h
        return r / (r - u), self.sign * r / (r - u)**2, 2.0 * r / (r - u)**3

    def raw_moment(self, k):
        return self.sign**k * math.factorial(k) / self.rate**k

    def strip(self):
        r = self.rate
        return Interval(None, r) if self.sign == 1 else Interval(-r, None)

    def support(self):
        return Interval(0.0, None) if self.sign == 1 else Interval(None, 0.0)

    def tilted(self, h):
        return ExponentialJumps(self.rate - self.sign * h, self.sign)

    def sample_sums(self, rng, counts, h=0.0):
        rate = self.rate - self.sign * h
        return self.sign * rng.gamma(np.asarray(counts, dtype=float),
                                     1.0 / rate)

    def negated(self):
        return ExponentialJumps(self.rate, -self.sign)

    def to_config(self):
        config = {"family": self.family, "rate": self.rate}
        if self.sign != 1:
            config["sign"] = self.sign
        return config


@dataclass(frozen=True)
class ProcessSpec:
    """
    Diffusion variance per unit time, Poisson jump intensity and jump law.
    The compensating drift -rate E[J] makes E[Z_t] = 0.
    """
    sigma0_sq: float
    jump_rate: float = 0.0
    jump_law: Optional[JumpLaw] = None
    family = "process"

    def __post_init__(self):
        if self.sigma0_sq < 0 or self.jump_rate < 0:
            raise InvalidDistributionError("sigma0_sq and jump_rate must be "
                                           "non-negative")
        if self.jump_rate > 0 and self.jump_law is None:
            raise InvalidDistributionError("jump_rate > 0 needs a jump_law")
        if not self.variance > 0:
            raise InvalidDistributionError("process variance must be positive")

    @property
    def has_jumps(self) -> bool:
        return self.jump_rate > 0

    @property
    def drift_comp(self) -> float:
        if not self.has_jumps:
            return 0.0
        return -self.jump_rate * self.jump_law.raw_moment(1)

    def _jump_cumulant(self, k: int) -> float:
        return self.jump_rate * self.jump_law.raw_moment(k) if self.has_jumps \
            else 0.0

    @property
    def variance(self) -> float:
        return self.sigma0_sq + self._jump_cumulant(2)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def has_density(self) -> bool:
        return self.sigma0_sq > 0

    def moments(self) -> Tuple[float, float, float]:
        """Cumulants of Z_1: (sigma^2, rate E J^3, rate E J^4)"""
        return self.variance, self._jump_cumulant(3), self._jump_cumulant(4)

    def negated(self) -> "ProcessSpec":
        jumps = self.jump_law.negated() if self.jump_law else None
        return ProcessSpec(self.sigma0_sq, self.jump_rate, jumps)

    def to_config(self) -> Dict:
        config = {"sigma0_sq": self.sigma0_sq, "jump_rate": self.jump_rate}
        if self.jump_law is not None:
            config["jump_law"] = self.jump_law.to_config()
        return config

    @property
    def label(self) -> str:
        jumps = (f",jumps={self.jump_law.to_config()}" if self.has_jumps
                 else "")
        return (f"process(sigma0_sq={self.sigma0_sq},"
                f"jump_rate={self.jump_rate}{jumps})")


def sample_process(spec: ProcessSpec, rng: np.random.Generator, t: float,
                   size: int, h: float = 0.0) -> np.ndarray:
    """
    Draws of Z_t under the h-tilted process: diffusion mean sigma0^2 h t,
    jump intensity rate M_J(h), jumps from the h-tilted jump law.
    :param spec: Process.
    :param rng: Caller-owned numpy Generator.
    :param t: Time horizon.
    :param size: Number of paths.
    :param h: Tilt parameter.
    :return: Array of Z_t values.
    """
    values = np.full(size, spec.drift_comp * t)
    if spec.sigma0_sq > 0:
        values += rng.normal(spec.sigma0_sq * h * t,
                             math.sqrt(spec.sigma0_sq * t), size)
    if spec.has_jumps:
        mean_jumps = spec.jump_rate * spec.jump_law.mgf(h)[0] * t
        if mean_jumps > MAX_MEAN_JUMPS:
            raise TooLargeError(f"{mean_jumps:.3g} expected jumps per path, "
                                f"limit is {MAX_MEAN_JUMPS}")
        counts = rng.poisson(mean_jumps, size)
        values += spec.jump_law.sample_sums(rng, counts, h)
    return values


@register_cgf(ProcessSpec)
class ProcessCgf(ClosedFormCgf):
    """Per-unit-time CGF of a ProcessSpec"""

    def _jump_terms(self, h):
        if not self.spec.has_jumps:
            return 0.0, 0.0, 0.0
        rate = self.spec.jump_rate
        law = self.spec.jump_law
        mean = law.raw_moment(1)
        h = np.asarray(h, dtype=float)
        values = [law.mgf(float(x)) for x in h.ravel()]
        m0 = np.array([v[0] for v in values]).reshape(h.shape)
        m1 = np.array([v[1] for v in values]).reshape(h.shape)
        m2 = np.array([v[2] for v in values]).reshape(h.shape)
        return (rate * (m0 - 1.0 - h * mean), rate * (m1 - mean), rate * m2)

    def kappa(self, h):
        h = np.asarray(h, dtype=float)
        return 0.5 * self.spec.sigma0_sq * h**2 + self._jump_terms(h)[0]

    def dkappa(self, h):
        h = np.asarray(h, dtype=float)
        return self.spec.sigma0_sq * h + self._jump_terms(h)[1]

    def d2kappa(self, h):
        h = np.asarray(h, dtype=float)
        return self.spec.sigma0_sq + self._jump_terms(h)[2]

    def strip(self) -> Interval:
        if not self.spec.has_jumps:
            return Interval(None, None)
        return self.spec.jump_law.strip()

    def drift_limits(self) -> Interval:
        spec = self.spec
        floor = spec.drift_comp
        if spec.sigma0_sq > 0:
            return Interval(None, None)
        support = spec.jump_law.support()
        upper_open = support.upper is None or support.upper > 0
        lower_open = support.lower is None or support.lower < 0
        return Interval(None if lower_open else floor,
                        None if upper_open else floor)

    def tilted_parameters(self, h: float) -> Dict:
        params = {"diffusion_mean": self.spec.sigma0_sq * h,
                  "drift": self.spec.drift_comp}
        if self.spec.has_jumps:
            params["jump_rate"] = (self.spec.jump_rate *
                                   self.spec.jump_law.mgf(h)[0])
            params["jump_law"] = self.spec.jump_law.tilted(h).to_config()
        return params

    def tilted_cgf(self, h: float, s: float) -> float:
        spec = self.spec
        value = (0.5 * spec.sigma0_sq * s**2 + spec.sigma0_sq * h * s
                 + spec.drift_comp * s)
        if spec.has_jumps:
            tilted_rate = spec.jump_rate * spec.jump_law.mgf(h)[0]
            tilted_mgf = spec.jump_law.tilted(h).mgf(s)[0]
            value += tilted_rate * (tilted_mgf - 1.0)
        return float(value)

    def tilted_sample(self, rng, size, h):
        return sample_process(self.spec, rng, 1.0, size, h)

    def tilted_sample_sums(self, rng, n, size, h):
        return sample_process(self.spec, rng, n, size, h)


def process_profile(spec: ProcessSpec) -> CgfProfile:
    return CgfProfile(spec)


def process_kappa(spec: ProcessSpec, h: float) -> float:
    """
    kappa(h) = sigma0^2 h^2/2 + rate (M_J(h) - 1 - h E J), per unit time.
    """
    return process_profile(spec).kappa(h)


def process_mbar(spec: ProcessSpec, h: float) -> float:
    """mbar(h) = sigma0^2 h + rate (M_J'(h) - E J)"""
    return process_profile(spec).mbar(h)


def process_sigbar2(spec: ProcessSpec, h: float) -> float:
    return process_profile(spec).sigbar2(h)


def process_tail(spec: ProcessSpec, c: float, t: float) -> TailEstimate:
    """
    Large-deviation analog for P(Z_t > sigma c t):
    (b0 / sqrt(t)) e^{-alpha t} at the root of mbar(h) = sigma c.
    :param spec: Process.
    :param c: Target rate in units of sigma; c < 0 gives P(Z_t < sigma c t).
    :param t: Time horizon (> 0).
    :return: TailEstimate.
    """
    if not t > 0:
        raise DegenerateError(f"t must be positive, got {t}")
    if c == 0:
        raise DegenerateError("c = 0 gives h = 0 and an infinite b0")
    if c < 0:
        return process_tail(spec.negated(), -c, t)

    solution = solve_saddle(process_profile(spec), c)
    log_value = (math.log(solution.b0) - 0.5 * math.log(t)
                 - solution.alpha * t)
    return TailEstimate(value=safe_exp(log_value), method="thm6",
                        error_note="relative O(1/t); smoothness condition "
                                   "not checked for processes",
                        log_value=log_value)


def process_exact_tail(spec: ProcessSpec, t: float, threshold: float) -> float:
    """
    Exact P(Z_t > threshold) for a pure diffusion or a compensated Poisson
    process with a single jump size.
    """
    if not spec.has_jumps:
        return normal_tail(threshold / math.sqrt(spec.sigma0_sq * t))

    law = spec.jump_law
    if (spec.sigma0_sq == 0 and isinstance(law, LatticeJumps)
            and len(law.atoms) == 1 and law.atoms[0][0] != 0):
        size = law.atoms[0][0]
        mean_count = spec.jump_rate * t
        # Z_t = size * N_t + drift t
        bound = (exceedance_margin(threshold) - spec.drift_comp * t) / size
        if size > 0:
            return float(stats.poisson.sf(math.floor(bound), mean_count))
        return float(stats.poisson.cdf(math.ceil(bound) - 1, mean_count))

    raise UnsupportedError(f"no exact tail for {spec.label}")


def process_simulate_tail(spec: ProcessSpec, c: float, t: float,
                          n_samples: int, seed: int,
                          tilt_h: Optional[float] = None,
                          threads: int = 1) -> SimulationReport:
    """
    Importance-sampling estimate of P(Z_t > sigma c t) using the
    exponentially tilted process, weight exp(-h Z_t + t kappa(h)).
    :param spec: Process.
    :param c: Target rate in units of sigma.
    :param t: Time horizon.
    :param n_samples: Number of simulated paths (>= 100).
    :param seed: Run seed.
    :param tilt_h: Force a tilt; 0 gives plain path simulation.
    :param threads: Worker threads.
    :return: SimulationReport.
    """
    _check_samples(n_samples)
    profile = process_profile(spec)
    threshold = spec.std * c * t
    if tilt_h is None:
        if c <= 0:
            logger.warning(f"c={c} is not above the mean; simulating "
                           f"without a tilt")
            tilt_h = 0.0
        else:
            tilt_h = solve_saddle(profile, c).h

    start = time.perf_counter()
    tilted = tilt(profile, tilt_h)
    log_scale = t * profile.kappa(tilt_h)

    def work(rng, size):
        values = tilted.sample_sums(rng, t, size)
        with np.errstate(over="ignore"):
            weights = np.exp(-tilt_h * values + log_scale)
        return summarize(np.where(exceeds(values, threshold), weights, 0.0))

    moments = run_chunks(work, n_samples, seed, threads)
    report = SimulationReport(
        estimate=moments.mean,
        std_error=moments.std_error,
        n_samples=n_samples,
        method="is" if tilt_h else "mc",
        seed=seed,
        elapsed=time.perf_counter() - start,
        tilt=tilt_h,
    )
    logger.info(f"Process IS {spec.label} c={c} t={t}: "
                f"{report.estimate:.6e} ± {report.std_error:.2e}")
    return report


_JUMP_KEYS = {"lattice": {"atoms"}, "exponential": {"rate", "sign"}}
_PROCESS_KEYS = {"sigma0_sq", "jump_rate", "jump_law"}


def jump_law_from_config(config: Dict, path: str) -> JumpLaw:
    if not isinstance(config, dict):
        raise ConfigError("jump_law must be an object", path)
    family = config.get("family")
    if family not in _JUMP_KEYS:
        raise ConfigError(f"unknown jump family {family!r}", f"{path}.family")
    for key in sorted(set(config) - {"family"} - _JUMP_KEYS[family]):
        raise ConfigError(f"unknown key {key!r}", f"{path}.{key}")
    try:
        if family == "lattice":
            return LatticeJumps(tuple((v, p) for v, p in config["atoms"]))
        return ExponentialJumps(float(config["rate"]),
                                int(config.get("sign", 1)))
    except KeyError as e:
        raise ConfigError(f"missing key {e}", path)
    except (TypeError, ValueError, InvalidDistributionError) as e:
        raise ConfigError(str(e), path)


def process_from_config(config: Dict, path: str = "process") -> ProcessSpec:
    """
    {"sigma0_sq": 1.0, "jump_rate": 2.0,
     "jump_law": {"family": "lattice", "atoms": [[1, 1]]}}
    """
    if not isinstance(config, dict):
        raise ConfigError("process must be an object", path)
    for key in sorted(set(config) - _PROCESS_KEYS):
        raise ConfigError(f"unknown key {key!r}", f"{path}.{key}")
    jump_law = None
    if "jump_law" in config:
        jump_law = jump_law_from_config(config["jump_law"], f"{path}.jump_law")
    try:
        return ProcessSpec(float(config.get("sigma0_sq", 0.0)),
                           float(config.get("jump_rate", 0.0)), jump_law)
    except InvalidDistributionError as e:
        raise ConfigError(e.message, path)
