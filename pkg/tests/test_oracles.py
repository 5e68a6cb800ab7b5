import math

import pytest
from scipy import stats

from src.analysis.cgf_engine import CgfProfile
from src.simulation.oracles import (
    exact_lattice_tail, naive_mc_tail, tilted_is_tail
)
from src.simulation.streams import chunk_sizes, run_chunks, substream, summarize
from src.utilities.errors import ConfigError, UnsupportedError

# Bernoulli(0.3), 100 trials, more than 50 successes: S > 50 - 30
N_TRIALS = 100
THRESHOLD = 20.0


def test_chunking():
    assert chunk_sizes(40_000, 16_384) == [16_384, 16_384, 7_232]
    assert chunk_sizes(100, 16_384) == [100]


def test_substreams_are_reproducible():
    a = substream(5, 3).standard_normal(4)
    b = substream(5, 3).standard_normal(4)
    c = substream(5, 4).standard_normal(4)
    assert (a == b).all()
    assert not (a == c).all()


def test_run_chunks_is_thread_independent():
    def work(rng, size):
        return summarize(rng.standard_normal(size))

    single = run_chunks(work, 50_000, seed=9, threads=1)
    pooled = run_chunks(work, 50_000, seed=9, threads=4)
    assert single == pooled
    assert single.count == 50_000


def test_importance_sampling_benchmark(bernoulli):
    exact = bernoulli.exact_sum_tail(N_TRIALS, THRESHOLD)
    assert exact == pytest.approx(stats.binom.sf(50, N_TRIALS, 0.3), rel=1e-12)

    report = tilted_is_tail(CgfProfile(bernoulli), N_TRIALS, THRESHOLD,
                            n_samples=100_000, seed=0)
    assert report.method == "is"
    assert abs(report.estimate - exact) <= 4 * report.std_error
    assert report.relative_error < 0.02

    naive_bound = math.sqrt((1 - exact) / (exact * 100_000))
    assert naive_bound >= 15 * report.relative_error


def test_zero_tilt_reproduces_naive_mc(bernoulli):
    naive = naive_mc_tail(bernoulli, 30, 3.0, n_samples=20_000, seed=4)
    untilted = tilted_is_tail(CgfProfile(bernoulli), 30, 3.0,
                              n_samples=20_000, seed=4, tilt_h=0.0)
    # kappa(0) is zero up to rounding, so the weights are 1 to ~1e-15
    assert untilted.estimate == pytest.approx(naive.estimate, rel=1e-12)


def test_estimates_do_not_depend_on_threads(exponential):
    profile = CgfProfile(exponential)
    one = tilted_is_tail(profile, 50, 25.0, n_samples=40_000, seed=1)
    four = tilted_is_tail(profile, 50, 25.0, n_samples=40_000, seed=1,
                          threads=4)
    assert one.estimate == four.estimate
    assert one.std_error == four.std_error


def test_different_seeds_agree(bernoulli):
    profile = CgfProfile(bernoulli)
    a = tilted_is_tail(profile, N_TRIALS, THRESHOLD, 50_000, seed=1)
    b = tilted_is_tail(profile, N_TRIALS, THRESHOLD, 50_000, seed=2)
    assert a.estimate != b.estimate
    assert abs(a.estimate - b.estimate) <= 6 * math.hypot(a.std_error,
                                                          b.std_error)


def test_naive_mc_seeds_agree(bernoulli):
    a = naive_mc_tail(bernoulli, 20, 2.0, 20_000, seed=1)
    b = naive_mc_tail(bernoulli, 20, 2.0, 20_000, seed=2)
    assert abs(a.estimate - b.estimate) <= 6 * math.hypot(a.std_error,
                                                          b.std_error)


def test_threshold_below_mean_falls_back_to_naive(exponential):
    report = tilted_is_tail(CgfProfile(exponential), 10, -1.0,
                            n_samples=1_000, seed=0)
    assert report.method == "mc"
    assert report.tilt == 0.0


def test_sample_count_floor(bernoulli):
    with pytest.raises(ConfigError) as error:
        naive_mc_tail(bernoulli, 10, 1.0, n_samples=50, seed=0)
    assert error.value.field == "samples"
    with pytest.raises(ConfigError):
        tilted_is_tail(CgfProfile(bernoulli), 10, 1.0, n_samples=99, seed=0)


def test_exact_lattice_tail(bernoulli, exponential):
    assert exact_lattice_tail(bernoulli.as_lattice(), N_TRIALS, THRESHOLD) == \
        pytest.approx(bernoulli.exact_sum_tail(N_TRIALS, THRESHOLD),
                      rel=1e-10)
    with pytest.raises(UnsupportedError):
        exact_lattice_tail(exponential, 10, 1.0)


def test_importance_sampling_is_unbiased_across_seeds(bernoulli):
    exact = bernoulli.exact_sum_tail(N_TRIALS, THRESHOLD)
    profile = CgfProfile(bernoulli)
    reports = [tilted_is_tail(profile, N_TRIALS, THRESHOLD, 10_000, seed=seed)
               for seed in range(50)]
    mean = math.fsum(r.estimate for r in reports) / len(reports)
    pooled_se = math.sqrt(math.fsum(r.std_error**2 for r in reports)
                          / len(reports))
    assert abs(mean - exact) <= 4 * pooled_se / math.sqrt(len(reports))
