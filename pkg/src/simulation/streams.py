"""
File: streams.py
Description: Reproducible parallel Monte Carlo. Work is cut into fixed-size
chunks; chunk i always draws from substream i of the seed and partial sums
are reduced in chunk order, so results do not depend on the worker count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from config.settings import SIM_CHUNK_SIZE

logger = logging.getLogger(__name__)


def substream(seed: int, index: int) -> np.random.Generator:
    """
    Independent generator for (seed, index), derived in O(1).
    :param seed: Run seed.
    :param index: Substream (chunk) index.
    :return: numpy Generator on PCG64.
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(sequence))


def chunk_sizes(n_samples: int, chunk_size: int = SIM_CHUNK_SIZE) -> List[int]:
    full, rest = divmod(n_samples, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class PartialSums:
    """Compensated sums of one chunk of per-sample values"""
    count: int
    total: float
    total_sq: float


@dataclass(frozen=True)
class Moments:
    count: int
    mean: float
    variance: float

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count)


def summarize(values: np.ndarray) -> PartialSums:
    values = np.asarray(values, dtype=float)
    return PartialSums(count=values.size, total=math.fsum(values),
                       total_sq=math.fsum(values * values))


def run_chunks(work: Callable[[np.random.Generator, int], PartialSums],
               n_samples: int, seed: int, threads: int = 1) -> Moments:
    """
    Run `work(rng, size)` over all chunks and reduce in fixed order.
    :param work: Per-chunk sampler returning PartialSums.
    :param n_samples: Total number of samples.
    :param seed: Run seed.
    :param threads: Worker threads; does not affect the result.
    :return: Sample mean and unbiased sample variance.
    """
    sizes = chunk_sizes(n_samples)

    def job(index: int) -> PartialSums:
        return work(substream(seed, index), sizes[index])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(job, range(len(sizes))))
    else:
        partials = [job(i) for i in range(len(sizes))]

    count = sum(p.count for p in partials)
    total = math.fsum(p.total for p in partials)
    total_sq = math.fsum(p.total_sq for p in partials)
    mean = total / count
    variance = max(total_sq - count * mean * mean, 0.0) / max(count - 1, 1)
    logger.debug(f"Reduced {len(sizes)} chunks ({count} samples, "
                 f"{threads} threads)")
    return Moments(count=count, mean=mean, variance=variance)
