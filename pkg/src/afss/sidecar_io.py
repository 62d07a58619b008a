"""File formats shared with an external trainer.

Snapshot (``format_version`` 1), UTF-8 JSON lines::

    {"columns": [...], "config": {...}, "epoch": 7, "format": "afss-snapshot", "version": 1, "warmup_epochs": 5}
    ["img-001", 0.91, 0.88, 7]
    ...

The first line is the header; each following line is one record
``[image_id, precision, recall, last_used_epoch]`` in ascending id order.
Floats use Python's shortest round-trip repr, so read(write(x)) == x.

Metrics: CSV rows ``image_id,precision,recall`` with an optional header row
of exactly those names. Manifest: a ``# afss-manifest v1 epoch=<t>`` line
followed by ``<TAG>\\t<image_id>`` lines, tags in FR, RE, FC, RM, HD order
and ids ascending within a tag. Report: CSV with header
:data:`~afss.simulator.REPORT_COLUMNS`.

Every writer replaces its target atomically (temp file + rename).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import fields
from pathlib import Path

import numpy as np

from afss.errors import ParseError, ValidationError, VersionError
from afss.scheduler import ORIGIN_TAGS, EpochPlan, ForcedReviewPolicy, SchedulerConfig
from afss.simulator import REPORT_COLUMNS, EpochRow, ExperimentReport
from afss.state_store import MetricsBatch, StateTable
from afss.sufficiency import MetricKind

SNAPSHOT_FORMAT = "afss-snapshot"
SNAPSHOT_VERSION = 1
SNAPSHOT_COLUMNS = ["image_id", "precision", "recall", "last_used_epoch"]
MANIFEST_VERSION = 1
METRICS_HEADER = ["image_id", "precision", "recall"]

# flat config keys, in file order
CONFIG_KEYS = (
    "easy_budget_fraction",
    "forced_review_cap_fraction",
    "review_staleness",
    "moderate_fraction",
    "coverage_staleness",
    "refresh_interval",
    "warmup_epochs",
    "easy_above",
    "hard_below",
    "metric_kind",
    "forced_review_policy",
    "seed",
)
_FLOAT_KEYS = {"easy_budget_fraction", "forced_review_cap_fraction", "moderate_fraction", "easy_above", "hard_below"}
_INT_KEYS = {"refresh_interval", "warmup_epochs", "seed"}
_STALENESS_KEYS = {"review_staleness", "coverage_staleness"}


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# config


def config_to_dict(cfg: SchedulerConfig) -> dict:
    """Flat, JSON-safe view of a config (``inf`` staleness becomes ``"inf"``)."""
    out = {}
    for key in CONFIG_KEYS:
        if key in ("easy_above", "hard_below"):
            value = getattr(cfg.thresholds, key)
        else:
            value = getattr(cfg, key)
        if isinstance(value, (MetricKind, ForcedReviewPolicy)):
            value = value.value
        elif value == math.inf:
            value = "inf"
        out[key] = value
    return out


def coerce_config_value(key: str, raw):
    """Turn a text or JSON value into the Python type ``key`` expects."""
    if key not in CONFIG_KEYS:
        raise ValidationError(f"unknown config key {key!r}")
    try:
        if key in _STALENESS_KEYS:
            if isinstance(raw, str) and raw.strip().lower() in ("inf", "infinity", "none", "never"):
                return math.inf
            return _as_int(raw)
        if key in _INT_KEYS:
            return _as_int(raw)
        if key in _FLOAT_KEYS:
            if isinstance(raw, bool):
                raise ValueError
            return float(raw)
        if key == "metric_kind":
            return MetricKind(str(raw).strip().lower().replace("-", "_"))
        return ForcedReviewPolicy(str(raw).strip().lower().replace("-", "_"))
    except ValueError:
        raise ValidationError(f"invalid value {raw!r} for {key}") from None


def _as_int(raw) -> int:
    if isinstance(raw, bool):
        raise ValueError
    if isinstance(raw, str):
        return int(raw.strip())
    if isinstance(raw, float) and not raw.is_integer():
        raise ValueError
    return int(raw)


def config_from_dict(values: dict, base: SchedulerConfig | None = None) -> SchedulerConfig:
    base = base or SchedulerConfig()
    coerced = {key.replace("-", "_"): value for key, value in values.items()}
    coerced = {key: coerce_config_value(key, value) for key, value in coerced.items()}
    return base.with_overrides(**coerced)


def parse_config_text(text: str, path="<config>") -> dict:
    """Parse ``key = value`` lines into raw overrides; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(path, lineno, f"expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ParseError(path, lineno, f"unknown config key {key!r}")
        if key in values:
            raise ParseError(path, lineno, f"duplicate config key {key!r}")
        try:
            values[key] = coerce_config_value(key, value)
        except ValidationError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    return values


def read_config(path, base: SchedulerConfig | None = None) -> SchedulerConfig:
    text = Path(path).read_text(encoding="utf-8")
    values = parse_config_text(text, path)
    try:
        return (base or SchedulerConfig()).with_overrides(**values)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def format_config(cfg: SchedulerConfig) -> str:
    return "".join(f"{key} = {value}\n" for key, value in config_to_dict(cfg).items())


# ---------------------------------------------------------------------------
# snapshots


def _check_id(value) -> bool:
    return isinstance(value, str) or (isinstance(value, int) and not isinstance(value, bool))


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def format_snapshot(table: StateTable, cfg: SchedulerConfig) -> str:
    if cfg.warmup_epochs != table.warmup_epochs:
        raise ValidationError(
            f"config warmup_epochs={cfg.warmup_epochs} disagrees with table warmup_epochs={table.warmup_epochs}"
        )
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "epoch": int(table.epoch),
        "warmup_epochs": int(table.warmup_epochs),
        "config": config_to_dict(cfg),
        "columns": SNAPSHOT_COLUMNS,
    }
    out = io.StringIO()
    out.write(json.dumps(header, sort_keys=True, separators=(", ", ": ")))
    out.write("\n")
    dumps = json.JSONEncoder(separators=(", ", ": "), ensure_ascii=False).encode
    for image_id, p, r, ep in zip(table.ids, table.precision.tolist(), table.recall.tolist(), table.last_used.tolist()):
        if isinstance(image_id, np.integer):
            image_id = int(image_id)
        out.write(dumps([image_id, p, r, ep]))
        out.write("\n")
    return out.getvalue()


def write_snapshot(table: StateTable, cfg: SchedulerConfig, path) -> None:
    _atomic_write(path, format_snapshot(table, cfg))


def read_snapshot(path) -> tuple[StateTable, SchedulerConfig]:
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ParseError(path, 1, "empty snapshot (missing header)")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ParseError(path, 1, f"header is not valid JSON: {exc.msg}") from None
        if not isinstance(header, dict) or header.get("format") != SNAPSHOT_FORMAT:
            raise ParseError(path, 1, "not an afss snapshot header")
        if header.get("version") != SNAPSHOT_VERSION:
            raise VersionError(path, 1, f"unsupported snapshot version {header.get('version')!r}")
        epoch, warmup = header.get("epoch"), header.get("warmup_epochs")
        if not (isinstance(epoch, int) and not isinstance(epoch, bool) and epoch >= 0):
            raise ParseError(path, 1, f"invalid epoch {epoch!r}")
        if not (isinstance(warmup, int) and not isinstance(warmup, bool) and warmup >= 1):
            raise ParseError(path, 1, f"invalid warmup_epochs {warmup!r}")
        if header.get("columns", SNAPSHOT_COLUMNS) != SNAPSHOT_COLUMNS:
            raise ParseError(path, 1, f"unexpected columns {header.get('columns')!r}")
        try:
            cfg = config_from_dict(header.get("config") or {})
        except ValidationError as exc:
            raise ParseError(path, 1, f"bad config echo: {exc}") from None
        if cfg.warmup_epochs != warmup:
            raise ParseError(path, 1, "config warmup_epochs disagrees with header warmup_epochs")

        ids, precision, recall, last_used = [], [], [], []
        previous = None
        loads = json.loads
        for lineno, line in enumerate(fh, start=2):
            try:
                row = loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"record is not valid JSON: {exc.msg}") from None
            if not isinstance(row, list) or len(row) != 4:
                raise ParseError(path, lineno, "record must be [image_id, precision, recall, last_used_epoch]")
            image_id, p, r, ep = row
            if not _check_id(image_id):
                raise ParseError(path, lineno, f"image_id must be a string or integer, got {image_id!r}")
            if not (_is_number(p) and 0.0 <= p <= 1.0):
                raise ParseError(path, lineno, f"precision {p!r} outside [0, 1]")
            if not (_is_number(r) and 0.0 <= r <= 1.0):
                raise ParseError(path, lineno, f"recall {r!r} outside [0, 1]")
            if not (isinstance(ep, int) and not isinstance(ep, bool) and 0 <= ep <= epoch):
                raise ParseError(path, lineno, f"last_used_epoch {ep!r} outside [0, {epoch}]")
            if previous is not None:
                try:
                    ordered = previous < image_id
                except TypeError:
                    raise ParseError(path, lineno, "image ids mix strings and integers") from None
                if not ordered:
                    raise ParseError(path, lineno, f"image_id {image_id!r} is duplicated or out of order")
            previous = image_id
            ids.append(image_id)
            precision.append(p)
            recall.append(r)
            last_used.append(ep)
        if not ids:
            raise ParseError(path, 2, "snapshot has no records")
    table = StateTable(
        tuple(ids),
        np.array(precision, dtype=np.float64),
        np.array(recall, dtype=np.float64),
        np.array(last_used, dtype=np.int64),
        epoch=epoch,
        warmup_epochs=warmup,
    )
    return table, cfg


# ---------------------------------------------------------------------------
# metrics


def read_metrics(path, expected_epoch: int) -> MetricsBatch:
    """Read an evaluator's per-image metrics for ``expected_epoch``.

    Ids are read as strings. An empty file is a legal (empty) partial refresh.
    """
    path = str(path)
    entries, seen = [], {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            lineno = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            cells = [cell.strip() for cell in row]
            if not entries and not seen and cells == METRICS_HEADER:
                seen[None] = lineno
                continue
            if len(cells) != 3:
                raise ParseError(path, lineno, f"expected 3 fields (image_id, precision, recall), got {len(cells)}")
            image_id, raw_p, raw_r = cells
            if not image_id:
                raise ParseError(path, lineno, "missing image_id")
            try:
                p, r = float(raw_p), float(raw_r)
            except ValueError:
                raise ParseError(path, lineno, f"precision/recall must be numbers, got {raw_p!r}, {raw_r!r}") from None
            if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
                raise ParseError(path, lineno, f"precision/recall ({raw_p}, {raw_r}) outside [0, 1]")
            if image_id in seen:
                raise ParseError(path, lineno, f"duplicate image_id {image_id!r} (first on line {seen[image_id]})")
            seen[image_id] = lineno
            entries.append((image_id, p, r))
    return MetricsBatch(tuple(entries), source_epoch=expected_epoch)


def write_metrics(batch: MetricsBatch, path) -> None:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for image_id, p, r in batch.entries:
        writer.writerow([image_id, repr(float(p)), repr(float(r))])
    _atomic_write(path, out.getvalue())


# ---------------------------------------------------------------------------
# manifests


def format_manifest(plan: EpochPlan) -> str:
    lines = [f"# afss-manifest v{MANIFEST_VERSION} epoch={plan.epoch}\n"]
    for tag, ids in plan.groups():
        for image_id in sorted(ids):
            lines.append(f"{tag}\t{image_id}\n")
    return "".join(lines)


def write_manifest(plan: EpochPlan, path) -> None:
    _atomic_write(path, format_manifest(plan))


def read_manifest(path) -> EpochPlan:
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty manifest (missing header)")
    head = lines[0].split()
    if len(head) != 4 or head[:2] != ["#", "afss-manifest"] or not head[3].startswith("epoch="):
        raise ParseError(path, 1, "not an afss manifest header")
    if head[2] != f"v{MANIFEST_VERSION}":
        raise VersionError(path, 1, f"unsupported manifest version {head[2]!r}")
    try:
        epoch = int(head[3][len("epoch="):])
    except ValueError:
        raise ParseError(path, 1, f"bad epoch in header {head[3]!r}") from None
    groups = {tag: [] for tag in ORIGIN_TAGS}
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        tag, sep, image_id = line.partition("\t")
        if not sep or tag not in groups or not image_id:
            raise ParseError(path, lineno, f"expected '<TAG>\\t<image_id>' with TAG in {ORIGIN_TAGS}, got {line!r}")
        if image_id in seen:
            raise ParseError(path, lineno, f"duplicate image_id {image_id!r}")
        seen.add(image_id)
        groups[tag].append(image_id)
    return EpochPlan(epoch, *(tuple(sorted(groups[tag])) for tag in ORIGIN_TAGS))


# ---------------------------------------------------------------------------
# report CSV


def format_report(report: ExperimentReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report.rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(row, c) for c in REPORT_COLUMNS)])
    return out.getvalue()


def write_report(report: ExperimentReport, path) -> None:
    _atomic_write(path, format_report(report))


def read_report(path) -> list[EpochRow]:
    path = str(path)
    types = {f.name: f.type for f in fields(EpochRow)}
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(REPORT_COLUMNS):
            raise ParseError(path, 1, f"unexpected report header {header!r}")
        for row in reader:
            if len(row) != len(REPORT_COLUMNS):
                raise ParseError(path, reader.line_num, f"expected {len(REPORT_COLUMNS)} fields, got {len(row)}")
            try:
                values = {c: (float(v) if types[c] == "float" else int(v)) for c, v in zip(REPORT_COLUMNS, row)}
            except ValueError as exc:
                raise ParseError(path, reader.line_num, str(exc)) from None
            rows.append(EpochRow(**values))
    return rows
