"""
File: report_store.py
Description: Run manifests, their CSV/JSON emission and the golden-file
comparison used for regression runs.
"""

import hashlib
import io
import json
import logging
import math
import os
import re
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from config.settings import SCHEMA_VERSION, TOOL_VERSION
from src.utilities.errors import (
    ConfigError, EmptyResultError, ReportIOError, SchemaMismatchError
)

logger = logging.getLogger(__name__)

COLUMNS = ("family", "n_or_t", "x_or_c", "method", "value", "error_note",
           "exact", "ratio_to_exact")
NUMERIC_COLUMNS = ("n_or_t", "x_or_c", "value", "exact", "ratio_to_exact")
FORMATS = ("csv", "json")
STOCHASTIC_METHODS = ("mc", "is")

# %.16e prints 17 significant digits, enough to round-trip a double
FLOAT_FORMAT = "%.16e"
SE_POOL_FACTOR = 5.0

_STOCHASTIC_NOTE = re.compile(r"se=([^;]+);seed=(-?\d+)")


def stochastic_note(std_error: float, seed: int) -> str:
    return f"se={std_error!r};seed={seed}"


def parse_stochastic_note(note: str) -> Optional[Tuple[float, int]]:
    """(std_error, seed) from a stochastic row's error_note, else None"""
    match = _STOCHASTIC_NOTE.search(note or "")
    if not match:
        return None
    return float(match.group(1)), int(match.group(2))


def _optional(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


@dataclass(frozen=True)
class ResultRow:
    """
    One computed quantity. ratio_to_exact is derived from value and exact
    and is present exactly when exact is.
    """
    family: str
    n_or_t: Optional[float]
    x_or_c: Optional[float]
    method: str
    value: float
    error_note: str = ""
    exact: Optional[float] = None
    ratio_to_exact: Optional[float] = None

    def __post_init__(self):
        ratio = None
        if self.exact is not None:
            ratio = self.value / self.exact if self.exact != 0 else math.nan
        object.__setattr__(self, "ratio_to_exact", ratio)

    @property
    def failed(self) -> bool:
        return math.isnan(self.value)

    @property
    def key(self) -> Tuple:
        return self.family, self.n_or_t, self.x_or_c, self.method

    def with_exact(self, exact: Optional[float]) -> "ResultRow":
        return replace(self, exact=exact)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class RunManifest:
    """
    Everything needed to reproduce and audit one run.

    Attributes:
        config_digest: sha256 of the canonical resolved configuration
        tool_version: version of the tool that produced the rows
        seed: run seed
        timestamp: UTC time of the run, ISO 8601; None for fully
            deterministic runs so their output is byte-reproducible
        rows: computed rows, in configuration order
        command: CLI command that produced the run
        schema_version: row schema version
    """
    config_digest: str
    tool_version: str
    seed: int
    timestamp: Optional[str]
    rows: Tuple[ResultRow, ...]
    command: str = ""
    schema_version: int = SCHEMA_VERSION

    @property
    def failed_rows(self) -> List[ResultRow]:
        return [row for row in self.rows if row.failed]

    def header(self) -> Dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "timestamp": self.timestamp,
            "columns": list(COLUMNS),
        }


def utc_timestamp() -> str:
    """
    Current UTC time; SOURCE_DATE_EPOCH pins it for reproducible output.
    """
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    moment = (datetime.fromtimestamp(int(epoch), tz=timezone.utc) if epoch
              else datetime.now(timezone.utc))
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def config_digest(config: Dict) -> str:
    """
    Content hash of a configuration, stable under key reordering.
    :param config: JSON-serializable configuration.
    :return: sha256 hex digest of the canonical serialization.
    """
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(config: Dict, seed: int, rows: Sequence[ResultRow],
                   command: str = "") -> RunManifest:
    return RunManifest(
        config_digest=config_digest(config),
        tool_version=TOOL_VERSION,
        seed=seed,
        timestamp=(utc_timestamp()
                   if any(row.method in STOCHASTIC_METHODS for row in rows)
                   else None),
        rows=tuple(rows),
        command=command,
    )


def rows_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    """Rows as a DataFrame in the fixed column order"""
    frame = pd.DataFrame([row.to_dict() for row in rows], columns=COLUMNS)
    for column in NUMERIC_COLUMNS:
        frame[column] = frame[column].astype(float)
    return frame


def _json_number(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return value


def emit(manifest: RunManifest, fmt: str = "csv") -> bytes:
    """
    Serialize a manifest.
    :param manifest: Manifest with at least one row.
    :param fmt: "csv" (column header plus one line per row) or "json"
                ({"header": {...}, "rows": [...]}).
    :return: UTF-8 encoded document.
    """
    if not manifest.rows:
        raise EmptyResultError("manifest has no rows")
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}", "output.format")

    if fmt == "csv":
        buffer = io.StringIO()
        rows_frame(manifest.rows).to_csv(buffer, index=False,
                                         float_format=FLOAT_FORMAT,
                                         na_rep="", lineterminator="\n")
        return buffer.getvalue().encode("utf-8")

    document = {
        "header": manifest.header(),
        "rows": [{k: _json_number(v) for k, v in row.to_dict().items()}
                 for row in manifest.rows],
    }
    return (json.dumps(document, indent=2, ensure_ascii=False) + "\n") \
        .encode("utf-8")


def _row_from_record(record: Dict) -> ResultRow:
    value = record.get("value")
    return ResultRow(
        family=str(record["family"]),
        n_or_t=_optional(record.get("n_or_t")),
        x_or_c=_optional(record.get("x_or_c")),
        method=str(record["method"]),
        value=math.nan if value is None else float(value),
        error_note=record.get("error_note") or "",
        exact=_optional(record.get("exact")),
    )


def parse_rows(data: bytes) -> List[ResultRow]:
    """
    Rows of an emitted CSV document.
    :param data: CSV bytes.
    :return: List of ResultRow; SCHEMA_MISMATCH on foreign columns.
    """
    frame = pd.read_csv(io.BytesIO(data), dtype={"family": str,
                                                 "method": str,
                                                 "error_note": str},
                        float_precision="round_trip")
    if tuple(frame.columns) != COLUMNS:
        raise SchemaMismatchError(f"columns {list(frame.columns)} do not "
                                  f"match {list(COLUMNS)}")
    frame["error_note"] = frame["error_note"].fillna("")
    return [_row_from_record(record)
            for record in frame.to_dict(orient="records")]


def parse_manifest(data: bytes) -> RunManifest:
    """
    Inverse of emit(manifest, "json").
    :param data: JSON bytes.
    :return: RunManifest; SCHEMA_MISMATCH on another schema version.
    """
    try:
        document = json.loads(data.decode("utf-8"))
        header = document["header"]
        records = document["rows"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
            TypeError) as e:
        raise SchemaMismatchError(f"not a manifest document: {e}")

    if header.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatchError(f"schema version "
                                  f"{header.get('schema_version')} != "
                                  f"{SCHEMA_VERSION}")
    try:
        rows = tuple(_row_from_record(record) for record in records)
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaMismatchError(f"malformed row: {e}")
    return RunManifest(
        config_digest=header.get("config_digest", ""),
        tool_version=header.get("tool_version", ""),
        seed=int(header.get("seed", 0)),
        timestamp=header.get("timestamp"),
        rows=rows,
        command=header.get("command", ""),
        schema_version=header["schema_version"],
    )


def parse_report(data: bytes) -> RunManifest:
    """JSON manifest or CSV rows; CSV input yields a header-less manifest"""
    if data.lstrip().startswith(b"{"):
        return parse_manifest(data)
    return RunManifest(config_digest="", tool_version="", seed=0,
                       timestamp=None, rows=tuple(parse_rows(data)))


def format_for_path(path: Union[str, Path], fmt: Optional[str] = None) -> str:
    if fmt is not None:
        return fmt
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix not in FORMATS:
        raise ConfigError(f"cannot infer the output format from "
                          f"{str(path)!r}; pass --format", "output.format")
    return suffix


def write_manifest(manifest: RunManifest, path: Union[str, Path],
                   fmt: Optional[str] = None) -> Path:
    """
    Emit a manifest to a file.
    :param manifest: Manifest to write.
    :param path: Destination; parent directories are created.
    :param fmt: Format, inferred from the extension when None.
    :return: Path written.
    """
    path = Path(path)
    payload = emit(manifest, format_for_path(path, fmt))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise ReportIOError(e.strerror or str(e), str(path))
    logger.info(f"Wrote {len(manifest.rows)} rows to {path}")
    return path


def read_report(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ReportIOError(e.strerror or str(e), str(path))
    return parse_report(data)


@dataclass(frozen=True)
class RowDiff:
    index: int
    key: str
    candidate: float
    baseline: float
    rel_diff: float
    allowed: float
    rule: str
    passed: bool


@dataclass(frozen=True)
class DiffReport:
    rel_tol: float
    rows: Tuple[RowDiff, ...]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def failures(self) -> List[RowDiff]:
        return [row for row in self.rows if not row.passed]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows])

    def summary(self) -> str:
        if self.passed:
            return f"PASS: {len(self.rows)} rows within tolerance"
        names = ", ".join(f"#{row.index} {row.key}" for row in self.failures)
        return f"FAIL: {len(self.failures)}/{len(self.rows)} rows: {names}"


def _describe(row: ResultRow) -> str:
    return (f"{row.family} n_or_t={row.n_or_t} x_or_c={row.x_or_c} "
            f"{row.method}")


def _compare_row(index: int, candidate: ResultRow, baseline: ResultRow,
                 rel_tol: float) -> RowDiff:
    key = _describe(candidate)
    a, b = candidate.value, baseline.value
    if candidate.key != baseline.key:
        return RowDiff(index, f"{key} vs {_describe(baseline)}", a, b,
                       math.inf, 0.0, "key", False)
    if math.isnan(a) or math.isnan(b):
        both = math.isnan(a) and math.isnan(b)
        return RowDiff(index, key, a, b, 0.0 if both else math.inf, 0.0,
                       "failed", both)

    delta = abs(a - b)
    rel_diff = delta / max(abs(b), 1e-300)
    notes = (parse_stochastic_note(candidate.error_note),
             parse_stochastic_note(baseline.error_note))
    if candidate.method in STOCHASTIC_METHODS and all(notes):
        allowed = SE_POOL_FACTOR * math.hypot(notes[0][0], notes[1][0])
        return RowDiff(index, key, a, b, rel_diff, allowed, "se",
                       delta <= allowed)
    return RowDiff(index, key, a, b, rel_diff, rel_tol, "rel",
                   rel_diff <= rel_tol)


def compare_golden(manifest: RunManifest, baseline: bytes,
                   rel_tol: float) -> DiffReport:
    """
    Row-by-row comparison against a golden document. Deterministic rows
    pass when |a - b| / max(|b|, 1e-300) <= rel_tol; stochastic rows pass
    within 5 pooled standard errors.
    :param manifest: Candidate run.
    :param baseline: Emitted golden document (CSV or JSON).
    :param rel_tol: Relative tolerance for deterministic rows.
    :return: DiffReport.
    """
    golden = parse_report(baseline)
    if manifest.schema_version != golden.schema_version:
        raise SchemaMismatchError(f"schema version {manifest.schema_version} "
                                  f"!= {golden.schema_version}")
    if len(manifest.rows) != len(golden.rows):
        raise SchemaMismatchError(f"{len(manifest.rows)} rows against "
                                  f"{len(golden.rows)} in the baseline")

    report = DiffReport(rel_tol=rel_tol, rows=tuple(
        _compare_row(i, cand, gold, rel_tol)
        for i, (cand, gold) in enumerate(zip(manifest.rows, golden.rows))))
    logger.info(report.summary())
    return report
