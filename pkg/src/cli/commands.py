"""
File: commands.py
Description: The rate, tail, simulate and series commands. Each turns a
validated CliConfig into a RunManifest; a failing row is recorded with a
NaN value and its error code instead of aborting the run.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from config.settings import LAMBDA_SERIES_RADIUS, RESULTS_DIR
from src.analysis.asymptotics import (
    ASYMPTOTIC_METHODS, TailEstimate, thm1_upper_ratio, thm2_ratio,
    thm3_tail, thm6_tail
)
from src.analysis.cgf_engine import CgfProfile
from src.analysis.levy_process import (
    process_exact_tail, process_simulate_tail, process_tail
)
from src.analysis.saddlepoint import (
    lambda_coeffs, legendre_alpha, solve_saddle
)
from src.cli.config_loader import CliConfig, Sweep
from src.distributions.dist_model import exact_sum_tail
from src.simulation.oracles import (
    SimulationReport, naive_mc_tail, tilted_is_tail
)
from src.utilities.errors import (
    DegenerateError, SaddletailError, UnsupportedError
)
from src.utilities.numerics import log_normal_tail, normal_tail, safe_exp
from src.utilities.report_store import (
    ResultRow, RunManifest, build_manifest, rows_frame, stochastic_note
)

logger = logging.getLogger(__name__)

RATE_METHODS = ("saddle_h", "alpha", "lambda", "b0")
REFERENCE_ORDER = ("exact", "is", "mc")

RED = "\033[31m"
RESET = "\033[0m"


def _guarded_row(family: str, n_or_t: Optional[float],
                 x_or_c: Optional[float], method: str,
                 compute: Callable[[], Tuple]) -> ResultRow:
    """
    Evaluate one row; library errors become a flagged row. compute returns
    (value, note) or (value, note, method) when the estimator substituted
    another method.
    """
    try:
        value, note, *actual = compute()
        method = actual[0] if actual else method
        return ResultRow(family, n_or_t, x_or_c, method, float(value), note)
    except SaddletailError as e:
        logger.error(f"{method} at n_or_t={n_or_t}, x_or_c={x_or_c} "
                     f"failed: {e}")
        return ResultRow(family, n_or_t, x_or_c, method, math.nan, str(e))


def _estimate_note(estimate: TailEstimate) -> str:
    if estimate.in_regime:
        return estimate.error_note
    return (f"{estimate.error_note}; outside regime: "
            f"{','.join(estimate.regime_violations)}")


def _ratio_tail(x: float, estimate: TailEstimate) -> float:
    # the ratio alone may overflow where the product is still representable
    return safe_exp(log_normal_tail(x) + estimate.log_value)


def _threshold(config: CliConfig, sweep: Sweep, horizon: float,
               value: float) -> float:
    sigma = config.spec.std
    if sweep.scaling == "x":
        return sigma * value * math.sqrt(horizon)
    if sweep.scaling == "c":
        return sigma * value * horizon
    if sweep.scaling == "mean":
        return value * horizon
    return value


class TailPoint:
    """One (horizon, threshold) point of a sweep in all three scalings"""

    def __init__(self, config: CliConfig, sweep: Sweep, horizon: float,
                 value: float):
        self.horizon = horizon
        self.value = value
        self.threshold = _threshold(config, sweep, horizon, value)
        sigma = config.spec.std
        self.x = self.threshold / (sigma * math.sqrt(horizon))
        self.c = self.threshold / (sigma * horizon)

    @property
    def n(self) -> int:
        return int(self.horizon)


def _simulate(config: CliConfig, profile: CgfProfile, point: TailPoint,
              method: str, samples: int, seed: int) -> SimulationReport:
    if config.is_process:
        return process_simulate_tail(
            config.spec, point.c, point.horizon, samples, seed,
            tilt_h=0.0 if method == "mc" else None, threads=config.threads)
    if method == "mc":
        return naive_mc_tail(config.spec, point.n, point.threshold, samples,
                             seed, config.threads)
    return tilted_is_tail(profile, point.n, point.threshold, samples, seed,
                          threads=config.threads)


def _exact(config: CliConfig, point: TailPoint) -> float:
    if config.is_process:
        return process_exact_tail(config.spec, point.horizon, point.threshold)
    return exact_sum_tail(config.spec, point.n, point.threshold)


def _tail_method(config: CliConfig, profile: CgfProfile, point: TailPoint,
                 method: str, sweep: Sweep,
                 seed: int) -> Callable[[], Tuple]:
    """Closure computing (value, error_note[, method]) of one tail row"""
    x, n = point.x, point.horizon

    def compute():
        if method == "normal":
            return normal_tail(x), "CLT"
        if method == "thm1":
            estimate = thm1_upper_ratio(profile, x, n)
            return _ratio_tail(x, estimate), _estimate_note(estimate)
        if method == "thm2":
            estimate = thm2_ratio(profile, x, n)
            return _ratio_tail(x, estimate), _estimate_note(estimate)
        if method == "thm3":
            estimate = thm3_tail(profile, x, n)
            return estimate.value, _estimate_note(estimate)
        if method == "thm6":
            if not point.c > 0:
                raise UnsupportedError("thm6 rows need a threshold above the "
                                       "mean; negate the law for lower tails")
            estimate = (process_tail(config.spec, point.c, n)
                        if config.is_process else thm6_tail(profile, point.c, n))
            return estimate.value, _estimate_note(estimate)
        if method == "exact":
            return _exact(config, point), "exact"
        report = _simulate(config, profile, point, method, sweep.samples, seed)
        return (report.estimate, stochastic_note(report.std_error, seed),
                report.method)

    return compute


def _attach_references(rows: List[ResultRow]) -> List[ResultRow]:
    """
    Fill exact/ratio_to_exact of rows sharing one (horizon, threshold):
    asymptotic rows against the best available reference (exact, then is,
    then mc), stochastic rows against exact only.
    """
    by_method: Dict[str, ResultRow] = {}
    for row in rows:
        if not row.failed:
            by_method.setdefault(row.method, row)
    reference = next((by_method[m].value for m in REFERENCE_ORDER
                      if m in by_method), None)
    exact = by_method["exact"].value if "exact" in by_method else None

    attached = []
    for row in rows:
        if row.method in ASYMPTOTIC_METHODS and reference is not None:
            row = row.with_exact(reference)
        elif row.method in ("mc", "is") and exact is not None:
            row = row.with_exact(exact)
        attached.append(row)
    return attached


def _rate_rows(profile: CgfProfile, family: str, c: float) -> List[ResultRow]:
    try:
        solution = solve_saddle(profile, c)
    except SaddletailError as e:
        logger.error(f"rate at c={c} failed: {e}")
        return [ResultRow(family, None, c, method, math.nan, str(e))
                for method in RATE_METHODS]

    def b0():
        if solution.b0 is None:
            raise DegenerateError("b0 is infinite at c = 0")
        return solution.b0, ""

    computes = {
        "saddle_h": lambda: (solution.h,
                             f"residual={solution.residual:.3e}"),
        "alpha": lambda: (legendre_alpha(profile, c), ""),
        "lambda": lambda: (solution.lambda_z, ""),
        "b0": b0,
    }
    return [_guarded_row(family, None, c, method, computes[method])
            for method in RATE_METHODS]


def cmd_rate(config: CliConfig) -> RunManifest:
    """
    Rows (h, alpha, lambda, b0) per point of the c grid.
    :param config: Validated rate configuration.
    :return: RunManifest; out-of-range c values yield flagged rows.
    """
    profile = CgfProfile(config.spec)
    family = config.spec.label
    rows = []
    for c in config.grid:
        rows.extend(_rate_rows(profile, family, c))
    logger.info(f"rate: {len(rows)} rows for {family}")
    return build_manifest(config.document, config.seed, rows, "rate")


def cmd_tail(config: CliConfig) -> RunManifest:
    """
    One row per (horizon, threshold, method) in configuration order, with
    the reference columns filled from exact/is/mc rows of the same point.
    :param config: Validated tail configuration.
    :return: RunManifest.
    """
    sweep = config.sweep
    profile = CgfProfile(config.spec)
    family = config.spec.label
    rows = []
    for horizon in sweep.horizons:
        for value in sweep.values:
            point = TailPoint(config, sweep, horizon, value)
            group = [
                _guarded_row(family, horizon, value, method,
                             _tail_method(config, profile, point, method,
                                          sweep, config.seed))
                for method in sweep.methods
            ]
            rows.extend(_attach_references(group))
    logger.info(f"tail: {len(rows)} rows for {family}")
    return build_manifest(config.document, config.seed, rows, "tail")


def cmd_simulate(config: CliConfig) -> RunManifest:
    """
    Monte Carlo / importance-sampling rows for every seed, compared with the
    exact tail where one exists.
    :param config: Validated simulate configuration.
    :return: RunManifest.
    """
    sweep = config.sweep
    profile = CgfProfile(config.spec)
    family = config.spec.label
    rows = []
    for horizon in sweep.horizons:
        for value in sweep.values:
            point = TailPoint(config, sweep, horizon, value)
            try:
                exact = _exact(config, point)
            except SaddletailError as e:
                logger.info(f"No exact comparator at {horizon}: {e}")
                exact = None
            for seed in sweep.seeds:
                for method in sweep.methods:
                    row = _guarded_row(
                        family, horizon, value, method,
                        _tail_method(config, profile, point, method, sweep,
                                     seed))
                    rows.append(row if row.failed else row.with_exact(exact))
    logger.info(f"simulate: {len(rows)} rows for {family}")
    return build_manifest(config.document, config.seed, rows, "simulate")


def cmd_series(config: CliConfig) -> RunManifest:
    """
    Series coefficients c0, c1 followed by lambda(z) on the z grid.
    :param config: Validated series configuration.
    :return: RunManifest.
    """
    profile = CgfProfile(config.spec)
    family = config.spec.label
    c0, c1 = lambda_coeffs(profile)
    rows = [ResultRow(family, None, None, "c0", c0, "gamma3/(6 sigma^3)"),
            ResultRow(family, None, None, "c1", c1,
                      "(sigma^2 gamma4 - 3 gamma3^2)/(24 sigma^6)")]

    for z in config.grid:
        note = "series blend" if abs(z) < LAMBDA_SERIES_RADIUS else ""
        rows.append(_guarded_row(
            family, None, z, "lambda",
            lambda z=z: (solve_saddle(profile, z).lambda_z, note)))
    logger.info(f"series: {len(rows)} rows for {family}")
    return build_manifest(config.document, config.seed, rows, "series")


COMMAND_HANDLERS = {
    "rate": cmd_rate,
    "tail": cmd_tail,
    "simulate": cmd_simulate,
    "series": cmd_series,
}


def run_command(config: CliConfig) -> RunManifest:
    return COMMAND_HANDLERS[config.command](config)


def default_output_path(config: CliConfig) -> Path:
    if config.output_path:
        return Path(config.output_path)
    suffix = config.output_format or "csv"
    return RESULTS_DIR / f"{config.command}-{config.digest[:12]}.{suffix}"


def render_table(manifest: RunManifest, color: bool = False) -> str:
    """
    Console table of a manifest; failed rows are red when color is on.
    :param manifest: Run manifest.
    :param color: Emit ANSI colors.
    :return: Rendered table.
    """
    frame = rows_frame(manifest.rows)
    text = frame.to_string(index=False, na_rep="",
                           float_format=lambda v: f"{v:.16e}")
    if not color:
        return text
    lines = text.splitlines()
    for i, row in enumerate(manifest.rows, start=1):
        if row.failed:
            lines[i] = f"{RED}{lines[i]}{RESET}"
    return "\n".join(lines)
