"""
File: cgf_engine.py
Description: Cumulant generating function kappa(h) = log E[exp(hZ)] of a
law, its derivatives mbar(h) and sigbar2(h), the convergence strip, the
drift limits of mbar at the strip ends, and the exponentially tilted law.

Closed forms are registered per distribution type, so other modules (the
process model) can plug their own CGF into the same saddle-point machinery.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Type, Union

import numpy as np
from scipy import special

from src.distributions.dist_model import (
    CenteredBernoulli, CenteredExponential, DistributionSpec, FiniteLattice,
    Gaussian
)
from src.utilities.errors import OutOfStripError, UnsupportedError
from src.utilities.numerics import Interval

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class ClosedFormCgf(ABC):
    """
    Closed-form CGF of one law. kappa/dkappa/d2kappa accept floats or numpy
    arrays and do no strip checking; CgfProfile does that.
    """

    def __init__(self, spec):
        self.spec = spec

    @abstractmethod
    def kappa(self, h: ArrayLike) -> ArrayLike:
        pass

    @abstractmethod
    def dkappa(self, h: ArrayLike) -> ArrayLike:
        pass

    @abstractmethod
    def d2kappa(self, h: ArrayLike) -> ArrayLike:
        pass

    @abstractmethod
    def strip(self) -> Interval:
        pass

    @abstractmethod
    def drift_limits(self) -> Interval:
        pass

    @abstractmethod
    def tilted_parameters(self, h: float) -> Dict:
        pass

    @abstractmethod
    def tilted_cgf(self, h: float, s: float) -> float:
        """CGF at s of the h-tilted law, from its tilted parameters"""

    def cumulants(self) -> Tuple[float, float, float]:
        return self.spec.moments()

    @property
    def sigma(self) -> float:
        return self.spec.std

    @property
    def has_density(self) -> bool:
        return self.spec.has_density

    def negated_spec(self):
        return self.spec.negated()

    def tilted_sample(self, rng, size, h):
        return self.spec.sample(rng, size, h)

    def tilted_sample_sums(self, rng, n, size, h):
        return self.spec.sample_sums(rng, n, size, h)


_CGF_REGISTRY: Dict[type, Type[ClosedFormCgf]] = {}


def register_cgf(spec_type: type) -> Callable:
    """Class decorator registering a ClosedFormCgf for a spec type"""
    def decorator(cls: Type[ClosedFormCgf]) -> Type[ClosedFormCgf]:
        _CGF_REGISTRY[spec_type] = cls
        return cls
    return decorator


@register_cgf(CenteredBernoulli)
class BernoulliCgf(ClosedFormCgf):
    """kappa(h) = log(q + p e^h) - p h"""

    def _logit(self, h):
        return np.asarray(h) + special.logit(self.spec.p)

    def kappa(self, h):
        p, q = self.spec.p, self.spec.q
        return np.logaddexp(math.log(q), math.log(p) + np.asarray(h)) - p * h

    def dkappa(self, h):
        return special.expit(self._logit(h)) - self.spec.p

    def d2kappa(self, h):
        u = self._logit(h)
        return special.expit(u) * special.expit(-u)

    def strip(self) -> Interval:
        return Interval(None, None)

    def drift_limits(self) -> Interval:
        return Interval(-self.spec.p, self.spec.q)

    def tilted_parameters(self, h: float) -> Dict:
        return {"success_prob": self.spec.tilted_success(h),
                "atoms": (self.spec.q, -self.spec.p)}

    def tilted_cgf(self, h: float, s: float) -> float:
        u = float(self._logit(h))
        log_success = -np.logaddexp(0.0, -u)
        log_failure = -np.logaddexp(0.0, u)
        return float(np.logaddexp(log_success + s * self.spec.q,
                                  log_failure - s * self.spec.p))


@register_cgf(CenteredExponential)
class ExponentialCgf(ClosedFormCgf):
    """kappa(h) = -log(1 - u/r) - u/r with u = sign * h"""

    def kappa(self, h):
        r = self.spec.rate
        u = self.spec.sign * np.asarray(h)
        return -np.log1p(-u / r) - u / r

    def dkappa(self, h):
        r = self.spec.rate
        u = self.spec.sign * np.asarray(h)
        return self.spec.sign * u / (r * (r - u))

    def d2kappa(self, h):
        r = self.spec.rate
        u = self.spec.sign * np.asarray(h)
        return 1.0 / (r - u) ** 2

    def strip(self) -> Interval:
        r = self.spec.rate
        return Interval(None, r) if self.spec.sign == 1 else Interval(-r, None)

    def drift_limits(self) -> Interval:
        r = self.spec.rate
        if self.spec.sign == 1:
            return Interval(-1.0 / r, None)
        return Interval(None, 1.0 / r)

    def tilted_parameters(self, h: float) -> Dict:
        return {"rate": self.spec.tilted_rate(h),
                "shift": -self.spec.sign / self.spec.rate,
                "sign": self.spec.sign}

    def tilted_cgf(self, h: float, s: float) -> float:
        sign, r = self.spec.sign, self.spec.rate
        tilted_rate = self.spec.tilted_rate(h)
        return float(-sign * s / r - math.log1p(-sign * s / tilted_rate))


@register_cgf(Gaussian)
class GaussianCgf(ClosedFormCgf):
    """kappa(h) = sigma^2 h^2 / 2"""

    def kappa(self, h):
        return 0.5 * self.spec.sigma**2 * np.asarray(h) ** 2

    def dkappa(self, h):
        return self.spec.sigma**2 * np.asarray(h)

    def d2kappa(self, h):
        return self.spec.sigma**2 * np.ones_like(np.asarray(h, dtype=float))

    def strip(self) -> Interval:
        return Interval(None, None)

    def drift_limits(self) -> Interval:
        return Interval(None, None)

    def tilted_parameters(self, h: float) -> Dict:
        return {"mean": self.spec.sigma**2 * h, "sigma": self.spec.sigma}

    def tilted_cgf(self, h: float, s: float) -> float:
        mean = self.spec.sigma**2 * h
        return float(mean * s + 0.5 * self.spec.sigma**2 * s**2)


@register_cgf(FiniteLattice)
class LatticeCgf(ClosedFormCgf):
    """kappa(h) = log sum_i p_i exp(h v_i), evaluated with logsumexp"""

    def _weights(self, h):
        h = np.asarray(h, dtype=float)
        log_w = np.multiply.outer(h, self.spec.values) + np.log(self.spec.probs)
        log_norm = np.asarray(special.logsumexp(log_w, axis=-1))
        return np.exp(log_w - log_norm[..., None]), log_norm

    def kappa(self, h):
        return self._weights(h)[1]

    def dkappa(self, h):
        weights, _ = self._weights(h)
        return weights @ self.spec.values

    def d2kappa(self, h):
        weights, _ = self._weights(h)
        mean = weights @ self.spec.values
        deviations = self.spec.values - np.asarray(mean)[..., None]
        return np.sum(weights * deviations**2, axis=-1)

    def strip(self) -> Interval:
        return Interval(None, None)

    def drift_limits(self) -> Interval:
        values = self.spec.values
        return Interval(float(values.min()), float(values.max()))

    def tilted_parameters(self, h: float) -> Dict:
        return {"values": tuple(self.spec.values),
                "probs": tuple(self.spec.tilted_probs(h))}

    def tilted_cgf(self, h: float, s: float) -> float:
        probs = self.spec.tilted_probs(h)
        return float(special.logsumexp(s * self.spec.values, b=probs))


def _scalar(value) -> float:
    return float(np.asarray(value))


class CgfProfile:
    """
    kappa = log R of a law together with its strip of convergence
    (-A2, A1) and drift limits (-sigma C2, sigma C1). Immutable.
    """

    def __init__(self, spec):
        cgf_type = _CGF_REGISTRY.get(type(spec))
        if cgf_type is None:
            raise UnsupportedError(f"no closed-form CGF for "
                                   f"{type(spec).__name__}")
        self.spec = spec
        self.cgf = cgf_type(spec)
        self.strip = self.cgf.strip()
        self.drift_limits = self.cgf.drift_limits()
        self.sigma = self.cgf.sigma
        self.variance = self.sigma**2

    def _check(self, h: float):
        if not self.strip.contains(h):
            raise OutOfStripError(f"h={h} outside the strip "
                                  f"{self.strip.describe()} of {self.label}")

    @property
    def label(self) -> str:
        return getattr(self.spec, "label", type(self.spec).__name__)

    @property
    def has_density(self) -> bool:
        return self.cgf.has_density

    @property
    def cumulants(self) -> Tuple[float, float, float]:
        return self.cgf.cumulants()

    def kappa(self, h: float) -> float:
        self._check(h)
        return _scalar(self.cgf.kappa(h))

    def mbar(self, h: float) -> float:
        self._check(h)
        return _scalar(self.cgf.dkappa(h))

    def sigbar2(self, h: float) -> float:
        self._check(h)
        return _scalar(self.cgf.d2kappa(h))

    def kappa_grid(self, hs: np.ndarray) -> np.ndarray:
        """Vectorised kappa; every point must lie inside the strip"""
        hs = np.asarray(hs, dtype=float)
        if not all(self.strip.contains(h) for h in (hs.min(), hs.max())):
            raise OutOfStripError(f"grid [{hs.min()}, {hs.max()}] leaves the "
                                  f"strip {self.strip.describe()}")
        return np.asarray(self.cgf.kappa(hs), dtype=float)

    def negated(self) -> "CgfProfile":
        return CgfProfile(self.cgf.negated_spec())

    def __repr__(self):
        return (f"<CgfProfile({self.label}, strip={self.strip.describe()}, "
                f"drift={self.drift_limits.describe()})>")


@dataclass(frozen=True)
class TiltedDistribution:
    """The law dV_h(y) = exp(hy - kappa(h)) dV(y)"""
    base: object
    h: float
    mbar: float
    sigbar2: float
    parameters: Dict = field(compare=False)
    _cgf: ClosedFormCgf = field(compare=False, repr=False)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self._cgf.tilted_sample(rng, size, self.h)

    def sample_sums(self, rng: np.random.Generator, n: int,
                    size: int) -> np.ndarray:
        return self._cgf.tilted_sample_sums(rng, n, size, self.h)

    def cgf(self, s: float) -> float:
        return self._cgf.tilted_cgf(self.h, s)


@dataclass(frozen=True)
class StripBounds:
    """
    Strip (-a2, a1) and drift limits (-sigma_c2, sigma_c1) as positive
    magnitudes; None marks an unbounded end.
    """
    a1: Optional[float]
    a2: Optional[float]
    sigma_c1: Optional[float]
    sigma_c2: Optional[float]


def build_profile(spec) -> CgfProfile:
    return CgfProfile(spec)


def kappa(profile: CgfProfile, h: float) -> float:
    """
    kappa(h) = log R.
    :param profile: CGF profile.
    :param h: Point strictly inside the strip.
    :return: kappa(h); raises OutOfStripError outside the strip.
    """
    return profile.kappa(h)


def mbar(profile: CgfProfile, h: float) -> float:
    """Tilted mean kappa'(h)"""
    return profile.mbar(h)


def sigbar2(profile: CgfProfile, h: float) -> float:
    """Tilted variance kappa''(h)"""
    return profile.sigbar2(h)


def cumulants(profile: CgfProfile) -> Tuple[float, float, float]:
    return profile.cumulants


def strip(spec) -> StripBounds:
    """
    Closed-form strip and drift limits of a law.
    :param spec: Distribution (or any spec with a registered CGF).
    :return: StripBounds.
    """
    profile = spec if isinstance(spec, CgfProfile) else CgfProfile(spec)
    s, d = profile.strip, profile.drift_limits
    return StripBounds(
        a1=s.upper,
        a2=None if s.lower is None else -s.lower,
        sigma_c1=d.upper,
        sigma_c2=None if d.lower is None else -d.lower,
    )


def tilt(profile: CgfProfile, h: float) -> TiltedDistribution:
    """
    Esscher tilt of the law by h.
    :param profile: CGF profile of the base law.
    :param h: Tilt parameter inside the strip.
    :return: TiltedDistribution with mbar = kappa'(h), sigbar2 = kappa''(h).
    """
    tilted = TiltedDistribution(
        base=profile.spec,
        h=h,
        mbar=profile.mbar(h),
        sigbar2=profile.sigbar2(h),
        parameters=profile.cgf.tilted_parameters(h),
        _cgf=profile.cgf,
    )
    logger.debug(f"Tilted {profile.label} by h={h}: mean={tilted.mbar:.6g}")
    return tilted
