"""
File: config_loader.py
Description: Run configuration for the command-line front end: one JSON
document, optionally patched by --dotted.key value overrides, validated
against a fixed schema. Unknown keys are errors.

Example:
    {
      "distribution": {"family": "centered_exponential", "rate": 1.0},
      "seed": 7,
      "tail": {"n": [50, 100, 200], "c": [1.0], "methods": ["thm6", "exact"]},
      "output": {"path": "results/tail.csv"}
    }
"""

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import DEFAULT_SEED, MIN_SAMPLES
from src.analysis.asymptotics import METHODS, STOCHASTIC_METHODS
from src.analysis.levy_process import ProcessSpec, process_from_config
from src.distributions.dist_model import (
    DistributionSpec, distribution_from_config
)
from src.utilities.errors import ConfigError
from src.utilities.report_store import FORMATS, config_digest

logger = logging.getLogger(__name__)

COMMANDS = ("rate", "tail", "simulate", "series")
SCALINGS = ("x", "c", "mean", "threshold")
DEFAULT_SAMPLES = 100_000

_TOP_KEYS = {"distribution", "process", "seed", "threads", "output",
             *COMMANDS}
_SWEEP_KEYS = {"n", "t", "methods", "samples", "seeds", *SCALINGS}
_SECTION_KEYS = {
    "rate": {"c"},
    "series": {"z"},
    "tail": _SWEEP_KEYS,
    "simulate": _SWEEP_KEYS,
}
_GRID_KEYS = {"start", "stop", "count", "spacing"}
_OUTPUT_KEYS = {"path", "format"}


@dataclass(frozen=True)
class Sweep:
    """
    Grid of (horizon, threshold) points for tail and simulate.

    Attributes:
        horizons: n values (or t values for a process)
        scaling: how `values` map to thresholds: x (sigma x sqrt(n)),
                 c (sigma c n), mean (n * mean) or threshold (raw)
        values: threshold parameters in the chosen scaling
        methods: method tags, in output order
        samples: simulated sums per stochastic row
        seeds: seeds for stochastic rows
    """
    horizons: Tuple[float, ...]
    scaling: str
    values: Tuple[float, ...]
    methods: Tuple[str, ...]
    samples: int
    seeds: Tuple[int, ...]


@dataclass(frozen=True)
class CliConfig:
    command: str
    spec: Union[DistributionSpec, ProcessSpec]
    seed: int
    threads: int
    document: Dict = field(compare=False)
    grid: Tuple[float, ...] = ()
    sweep: Optional[Sweep] = None
    output_path: Optional[str] = None
    output_format: Optional[str] = None

    @property
    def is_process(self) -> bool:
        return isinstance(self.spec, ProcessSpec)

    @property
    def digest(self) -> str:
        return config_digest(self.document)


def parse_value(text: str):
    """Override values are JSON when they parse as JSON, else plain text"""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(args: Sequence[str]) -> Dict[str, object]:
    """
    Turn leftover command-line tokens into dotted-path overrides.
    :param args: Tokens such as ["--tail.n", "[100]", "--seed=3"].
    :return: {"tail.n": [100], "seed": 3}
    """
    overrides = {}
    tokens = list(args)
    while tokens:
        token = tokens.pop(0)
        if not token.startswith("--") or len(token) == 2:
            raise ConfigError(f"unexpected argument {token!r}")
        key, sep, text = token[2:].partition("=")
        if not sep:
            if not tokens:
                raise ConfigError(f"override --{key} needs a value", key)
            text = tokens.pop(0)
        overrides[key] = parse_value(text)
    return overrides


def apply_overrides(document: Dict, overrides: Dict[str, object]) -> Dict:
    """Return a copy of document with every dotted key set"""
    patched = copy.deepcopy(document)
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = patched
        for i, part in enumerate(parts[:-1]):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError("cannot override inside a non-object",
                                  ".".join(parts[:i + 1]))
            node = child
        node[parts[-1]] = value
    return patched


def read_document(path: Union[str, Path]) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}",
                          "--config")
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}", "--config")
    if not isinstance(document, dict):
        raise ConfigError("config must be a JSON object", "--config")
    return document


def _check_keys(section: Dict, allowed: set, path: str):
    if not isinstance(section, dict):
        raise ConfigError("expected an object", path)
    for key in sorted(set(section) - allowed):
        raise ConfigError(f"unknown key {key!r}", f"{path}.{key}" if path
                          else key)


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise ConfigError("numbers must be finite", path)
    return float(value)


def _integer(value, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if not (isinstance(value, float) and value.is_integer()):
            raise ConfigError(f"expected an integer, got {value!r}", path)
    if value < minimum:
        raise ConfigError(f"must be at least {minimum}", path)
    return int(value)


def parse_grid(value, path: str) -> Tuple[float, ...]:
    """
    A grid is a number, a list of numbers or
    {"start": a, "stop": b, "count": k, "spacing": "linear" | "log"}.
    :param value: Raw config value.
    :param path: Dotted path for error messages.
    :return: Tuple of grid points in order.
    """
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (_number(value, path),)
    if isinstance(value, list):
        if not value:
            raise ConfigError("grid must not be empty", path)
        return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))
    if isinstance(value, dict):
        _check_keys(value, _GRID_KEYS, path)
        for key in ("start", "stop", "count"):
            if key not in value:
                raise ConfigError(f"missing key {key!r}", f"{path}.{key}")
        start = _number(value["start"], f"{path}.start")
        stop = _number(value["stop"], f"{path}.stop")
        count = _integer(value["count"], f"{path}.count", 1)
        spacing = value.get("spacing", "linear")
        if spacing == "linear":
            points = np.linspace(start, stop, count)
        elif spacing == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError("log spacing needs positive bounds", path)
            points = np.geomspace(start, stop, count)
        else:
            raise ConfigError(f"unknown spacing {spacing!r}",
                              f"{path}.spacing")
        return tuple(float(p) for p in points)
    raise ConfigError(f"expected a grid, got {value!r}", path)


def _parse_horizons(section: Dict, path: str, is_process: bool):
    name = "t" if is_process else "n"
    other = "n" if is_process else "t"
    if other in section:
        raise ConfigError(f"use {name!r} for a "
                          f"{'process' if is_process else 'distribution'}",
                          f"{path}.{other}")
    if name not in section:
        raise ConfigError(f"missing key {name!r}", f"{path}.{name}")
    grid = parse_grid(section[name], f"{path}.{name}")
    if is_process:
        for i, t in enumerate(grid):
            if t <= 0:
                raise ConfigError("t must be positive", f"{path}.t[{i}]")
        return grid
    # log-spaced n grids land within rounding of an integer
    snapped = [round(n) if abs(n - round(n)) <= 1e-9 * max(1.0, n) else n
               for n in grid]
    return tuple(float(_integer(n, f"{path}.n[{i}]", 1))
                 for i, n in enumerate(snapped))


def _parse_sweep(section: Dict, path: str, is_process: bool,
                 default_methods: Tuple[str, ...], seed: int,
                 allowed_methods: Sequence[str]) -> Sweep:
    horizons = _parse_horizons(section, path, is_process)

    scalings = [key for key in SCALINGS if key in section]
    if len(scalings) != 1:
        raise ConfigError(f"exactly one of {list(SCALINGS)} is required",
                          path)
    scaling = scalings[0]
    values = parse_grid(section[scaling], f"{path}.{scaling}")

    methods = section.get("methods", list(default_methods))
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods must be a non-empty list",
                          f"{path}.methods")
    for i, method in enumerate(methods):
        if method not in allowed_methods:
            raise ConfigError(f"unknown method {method!r}; expected one of "
                              f"{list(allowed_methods)}",
                              f"{path}.methods[{i}]")

    samples = _integer(section.get("samples", DEFAULT_SAMPLES),
                       f"{path}.samples", MIN_SAMPLES)
    seeds = section.get("seeds", [seed])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list", f"{path}.seeds")
    seeds = tuple(_integer(s, f"{path}.seeds[{i}]", 0)
                  for i, s in enumerate(seeds))
    return Sweep(horizons=horizons, scaling=scaling, values=values,
                 methods=tuple(methods), samples=samples, seeds=seeds)


def parse_config(document: Dict, command: str) -> CliConfig:
    """
    Validate a resolved configuration document for one command.
    :param document: Parsed JSON object with overrides applied.
    :param command: One of rate, tail, simulate, series.
    :return: CliConfig; ConfigError names the offending field.
    """
    _check_keys(document, _TOP_KEYS, "")
    if ("distribution" in document) == ("process" in document):
        raise ConfigError("exactly one of 'distribution' and 'process' is "
                          "required", "distribution")
    if "process" in document:
        spec = process_from_config(document["process"])
    else:
        spec = distribution_from_config(document["distribution"])
    is_process = isinstance(spec, ProcessSpec)

    seed = _integer(document.get("seed", DEFAULT_SEED), "seed", 0)
    threads = _integer(document.get("threads", 1), "threads", 1)

    output = document.get("output", {})
    _check_keys(output, _OUTPUT_KEYS, "output")
    fmt = output.get("format")
    if fmt is not None and fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}", "output.format")
    path = output.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("path must be a string", "output.path")

    if command not in document:
        raise ConfigError(f"missing section {command!r}", command)
    section = document[command]
    _check_keys(section, _SECTION_KEYS[command], command)

    grid, sweep = (), None
    if command in ("rate", "series"):
        key = "c" if command == "rate" else "z"
        if key not in section:
            raise ConfigError(f"missing key {key!r}", f"{command}.{key}")
        grid = parse_grid(section[key], f"{command}.{key}")
    elif command == "tail":
        sweep = _parse_sweep(section, command, is_process, ("thm6",), seed,
                             METHODS)
    else:
        sweep = _parse_sweep(section, command, is_process, ("is",), seed,
                             STOCHASTIC_METHODS)

    config = CliConfig(command=command, spec=spec, seed=seed,
                       threads=threads, document=document, grid=grid,
                       sweep=sweep, output_path=path, output_format=fmt)
    logger.debug(f"Loaded {command} config for {spec.label} "
                 f"(digest {config.digest[:12]})")
    return config


def load_config(path: Union[str, Path], command: str,
                overrides: Optional[Dict[str, object]] = None) -> CliConfig:
    """
    Read, patch and validate a configuration file.
    :param path: JSON config file.
    :param command: Command the configuration is for.
    :param overrides: Dotted-path overrides applied before validation.
    :return: CliConfig.
    """
    document = apply_overrides(read_document(path), overrides or {})
    return parse_config(document, command)


def resolved_overrides(seed: Optional[int], threads: Optional[int],
                       out: Optional[str],
                       fmt: Optional[str]) -> Dict[str, object]:
    """Dedicated CLI flags expressed as dotted overrides"""
    pairs: List[Tuple[str, object]] = [("seed", seed), ("threads", threads),
                                       ("output.path", out),
                                       ("output.format", fmt)]
    return {key: value for key, value in pairs if value is not None}
