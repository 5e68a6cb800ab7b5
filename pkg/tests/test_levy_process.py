import math

import numpy as np
import pytest
from scipy import stats

from src.analysis.cgf_engine import CgfProfile, tilt
from src.analysis.levy_process import (
    ExponentialJumps, LatticeJumps, ProcessSpec, process_exact_tail,
    process_from_config, process_kappa, process_mbar, process_sigbar2,
    process_simulate_tail, process_tail, sample_process
)
from src.analysis.saddlepoint import solve_saddle
from src.utilities.errors import (
    ConfigError, DegenerateError, InvalidDistributionError, TooLargeError,
    UnsupportedError
)
from src.utilities.numerics import Interval, normal_tail


@pytest.fixture
def jump_diffusion():
    return ProcessSpec(0.5, 2.0, ExponentialJumps(1.0))


def test_poisson_rate_function(poisson_process):
    profile = CgfProfile(poisson_process)
    for a in np.linspace(1.1, 5.0, 21):
        alpha = solve_saddle(profile, a - 1.0).alpha
        assert alpha == pytest.approx(a * math.log(a) - a + 1, abs=1e-10)


def test_jump_diffusion_closed_form(jump_diffusion):
    h = 0.3
    jumps = 1 / (1 - h) - 1 - h
    assert process_kappa(jump_diffusion, h) == pytest.approx(
        0.25 * h**2 + 2 * jumps)
    assert process_mbar(jump_diffusion, h) == pytest.approx(
        0.5 * h + 2 * (1 / (1 - h)**2 - 1))
    assert process_sigbar2(jump_diffusion, h) == pytest.approx(
        0.5 + 2 * 2 / (1 - h)**3)


def test_process_cumulants(jump_diffusion):
    # E J^k = k! for unit exponential jumps
    assert jump_diffusion.moments() == pytest.approx((0.5 + 4, 12.0, 48.0))
    assert jump_diffusion.drift_comp == pytest.approx(-2.0)


def test_drift_limits(poisson_process, diffusion):
    assert CgfProfile(poisson_process).drift_limits == Interval(-1.0, None)
    assert CgfProfile(poisson_process.negated()).drift_limits == \
        Interval(None, 1.0)
    assert CgfProfile(diffusion).drift_limits == Interval(None, None)


def test_tilted_process_cgf(jump_diffusion):
    profile = CgfProfile(jump_diffusion)
    tilted = tilt(profile, 0.4)
    for s in (-0.2, 0.1, 0.3):
        assert tilted.cgf(s) == pytest.approx(
            profile.kappa(0.4 + s) - profile.kappa(0.4), rel=1e-12)


def test_process_importance_sampling(poisson_process):
    t, c = 30.0, 1.0
    exact = process_exact_tail(poisson_process, t, c * t)
    assert exact == pytest.approx(stats.poisson.sf(60, 30), rel=1e-12)

    report = process_simulate_tail(poisson_process, c, t, 100_000, seed=0)
    assert report.method == "is"
    assert report.tilt == pytest.approx(math.log(2.0))
    assert abs(report.estimate - exact) <= 4 * report.std_error


def test_process_simulation_is_reproducible(jump_diffusion):
    a = process_simulate_tail(jump_diffusion, 0.8, 10.0, 20_000, seed=3)
    b = process_simulate_tail(jump_diffusion, 0.8, 10.0, 20_000, seed=3,
                              threads=2)
    assert a.estimate == b.estimate


@pytest.mark.parametrize("t", [25.0, 100.0, 400.0])
def test_pure_diffusion_tail(diffusion, t):
    c = 1.0
    ratio = process_tail(diffusion, c, t).value / normal_tail(c * math.sqrt(t))
    assert 1 - 2 / t <= ratio <= 1 + 2 / t
    assert process_exact_tail(diffusion, t, c * t) == normal_tail(
        c * math.sqrt(t))


def test_lower_tail_through_negation(poisson_process, diffusion):
    assert process_tail(diffusion, -1.0, 50.0).value == \
        process_tail(diffusion, 1.0, 50.0).value
    lower = process_tail(poisson_process, -0.5, 30.0)
    assert lower.value == process_tail(poisson_process.negated(), 0.5,
                                       30.0).value
    # Z = 30 - N > 10  <=>  N < 20
    assert process_exact_tail(poisson_process.negated(), 30.0, 10.0) == \
        pytest.approx(stats.poisson.cdf(19, 30), rel=1e-12)


def test_process_tail_needs_nonzero_c(diffusion):
    with pytest.raises(DegenerateError):
        process_tail(diffusion, 0.0, 10.0)


def test_exact_tail_unsupported(jump_diffusion):
    with pytest.raises(UnsupportedError):
        process_exact_tail(jump_diffusion, 10.0, 5.0)


@pytest.mark.parametrize("build", [
    lambda: ProcessSpec(0.0),
    lambda: ProcessSpec(-1.0),
    lambda: ProcessSpec(0.0, 1.0),
    lambda: ProcessSpec(0.0, 1.0, LatticeJumps(((0.0, 1.0),))),
    lambda: LatticeJumps(((1.0, 0.5),)),
    lambda: ExponentialJumps(0.0),
])
def test_invalid_processes(build):
    with pytest.raises(InvalidDistributionError):
        build()


def test_sample_process_is_centered(jump_diffusion, rng):
    values = sample_process(jump_diffusion, rng, 4.0, 50_000)
    se = math.sqrt(jump_diffusion.variance * 4.0 / 50_000)
    assert abs(values.mean()) < 5 * se


def test_tilted_sampling_shifts_the_mean(poisson_process, rng):
    values = sample_process(poisson_process, rng, 10.0, 50_000,
                            h=math.log(2.0))
    # tilted intensity 2: E[Z_10] = 20 - 10
    assert values.mean() == pytest.approx(10.0, rel=0.02)


def test_jump_count_limit():
    busy = ProcessSpec(0.0, 1e6, LatticeJumps(((1.0, 1.0),)))
    with pytest.raises(TooLargeError):
        sample_process(busy, np.random.default_rng(0), 10.0, 10)


def test_process_from_config():
    spec = process_from_config({
        "sigma0_sq": 0.5, "jump_rate": 2.0,
        "jump_law": {"family": "exponential", "rate": 1.0},
    })
    assert spec == ProcessSpec(0.5, 2.0, ExponentialJumps(1.0))
    assert process_from_config(spec.to_config()) == spec


@pytest.mark.parametrize("config,field", [
    ({"sigma0_sq": 1.0, "drift": 0.1}, "process.drift"),
    ({"jump_rate": 1.0, "jump_law": {"family": "pareto"}},
     "process.jump_law.family"),
    ({"sigma0_sq": 0.0}, "process"),
])
def test_process_config_errors(config, field):
    with pytest.raises(ConfigError) as error:
        process_from_config(config)
    assert error.value.field == field


def cumulant_estimates(values, batches=25):
    """k-statistics k1..k4 with batch-means standard errors"""
    full = np.array([stats.kstat(values, k) for k in range(1, 5)])
    per_batch = np.array([[stats.kstat(chunk, k) for k in range(1, 5)]
                          for chunk in np.array_split(values, batches)])
    return full, per_batch.std(axis=0, ddof=1) / math.sqrt(batches)


def test_cumulants_are_additive_in_time(jump_diffusion, rng):
    size = 200_000
    whole = sample_process(jump_diffusion, rng, 3.0, size)
    parts = (sample_process(jump_diffusion, rng, 1.0, size)
             + sample_process(jump_diffusion, rng, 2.0, size))
    whole_k, whole_se = cumulant_estimates(whole)
    parts_k, parts_se = cumulant_estimates(parts)
    assert (np.abs(whole_k - parts_k)
            <= 4 * np.hypot(whole_se, parts_se)).all()


def test_mean_threshold_is_simulated_without_a_tilt(poisson_process):
    report = process_simulate_tail(poisson_process, -0.5, 10.0, 1_000, seed=0)
    assert report.method == "mc"
    assert report.tilt == 0.0


def test_process_sample_count_floor(poisson_process):
    with pytest.raises(ConfigError) as error:
        process_simulate_tail(poisson_process, 1.0, 10.0, 50, seed=0)
    assert error.value.field == "samples"
