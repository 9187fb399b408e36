"""Trace data model and HWiNFO-style labeled telemetry file handling.

A *trace* is one capture session: a header of feature names, per-row time
offsets, sensor readings, and a benign/malicious label per row, plus
metadata recovered from the filename convention::

    <subject>_<os>_<hardware>_<category>.csv            (benign)
    <subject>_<os>_<hardware>_<category>_<onset>.csv    (malware)

Segments may not contain underscores. The category segment comes from a
closed set; malware categories carry the onset segment (seconds from trace
start at which the malware began executing), benign ones must not.

Trace files are UTF-8 CSV with a header row: an optional ``time_s``
column, one column per sensor feature, and an optional trailing ``label``
column holding 0/1. Cells that do not parse as numbers are imputed from
the previous row (0 for the first row) so the row count — which the
consecutive-sample detector depends on — is never silently changed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadOnsetError,
    EmptyTraceError,
    MalformedNameError,
    MissingColumnError,
    NonMonotonicTimeError,
    RaggedRowError,
    UnknownCategoryError,
)

BENIGN_CATEGORIES = (
    "benign",
    "os-only",
    "benchmark",
    "game",
    "office",
    "system-tool",
    "complex-code",
)
MALWARE_CATEGORIES = (
    "ransomware",
    "worm",
    "spyware",
    "trojan-backdoor",
    "virus",
    "rootkit",
)
CATEGORIES = BENIGN_CATEGORIES + MALWARE_CATEGORIES

DEFAULT_SAMPLE_PERIOD_S = 0.5

TIME_COLUMN = "time_s"
LABEL_COLUMN = "label"

MANIFEST_VERSION = 1
MANIFEST_FILENAME = "manifest.json"


@dataclass(frozen=True)
class TraceMeta:
    """Capture-session metadata, recoverable from the filename."""

    subject_name: str
    os: str
    hardware_id: str
    category: str
    onset_s: float | None = None
    sample_period_s: float = DEFAULT_SAMPLE_PERIOD_S

    @property
    def is_malicious(self) -> bool:
        return self.category in MALWARE_CATEGORIES

    def onset_row(self) -> int | None:
        """Row index nearest the onset time (labeling boundary)."""
        if self.onset_s is None:
            return None
        return int(round(self.onset_s / self.sample_period_s))


@dataclass(frozen=True)
class SampleRow:
    """One telemetry sample: time offset, sensor vector, 0/1 label."""

    t: float
    features: np.ndarray
    label: int


@dataclass
class Trace:
    """One capture session held as arrays (rows are the first axis)."""

    meta: TraceMeta
    header: list[str]
    times: np.ndarray      # [T] seconds from trace start
    features: np.ndarray   # [T, F] float64
    labels: np.ndarray     # [T] int, 0 benign / 1 malicious

    @property
    def num_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def duration_s(self) -> float:
        return float(self.times[-1] - self.times[0]) if self.num_rows else 0.0

    def rows(self):
        for i in range(self.num_rows):
            yield SampleRow(float(self.times[i]), self.features[i], int(self.labels[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.header == other.header
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class Violation:
    """One failed trace invariant; violations are data, not exceptions."""

    invariant: str
    row: int | None
    message: str

    def __str__(self) -> str:
        where = f" at row {self.row}" if self.row is not None else ""
        return f"{self.invariant}{where}: {self.message}"


@dataclass(frozen=True)
class TraceSchema:
    """Column mapping for trace CSV files.

    ``feature_cols=None`` selects every column that is neither the time
    column nor the label column, in header order.
    """

    time_col: str = TIME_COLUMN
    label_col: str = LABEL_COLUMN
    feature_cols: tuple[str, ...] | None = None


# --- filename convention --------------------------------------------------

def parse_trace_filename(name: str) -> TraceMeta:
    """Recover TraceMeta from an underscore-delimited trace filename."""
    stem = name[:-4] if name.endswith(".csv") else name
    parts = stem.split("_")
    if len(parts) not in (4, 5):
        raise MalformedNameError(
            f"{name!r}: expected 4 segments (benign) or 5 (malware), got {len(parts)}"
        )
    subject, os_name, hw_id, category = parts[:4]
    if not all(parts):
        raise MalformedNameError(f"{name!r}: empty segment")
    if category not in CATEGORIES:
        raise UnknownCategoryError(f"{name!r}: unknown category {category!r}")
    onset: float | None = None
    if category in MALWARE_CATEGORIES:
        if len(parts) != 5:
            raise MalformedNameError(
                f"{name!r}: malware category {category!r} requires an onset segment"
            )
        try:
            onset = float(parts[4])
        except ValueError:
            raise BadOnsetError(f"{name!r}: onset {parts[4]!r} is not a number") from None
        if not math.isfinite(onset) or onset < 0:
            raise BadOnsetError(f"{name!r}: onset must be a nonnegative number")
    elif len(parts) == 5:
        raise MalformedNameError(
            f"{name!r}: benign category {category!r} does not take an onset segment"
        )
    return TraceMeta(subject, os_name, hw_id, category, onset)


def render_filename(meta: TraceMeta) -> str:
    """Inverse of parse_trace_filename (parse(render(m)) == m)."""
    for seg in (meta.subject_name, meta.os, meta.hardware_id, meta.category):
        if not seg or "_" in seg:
            raise MalformedNameError(f"segment {seg!r} is empty or contains an underscore")
    if meta.category not in CATEGORIES:
        raise UnknownCategoryError(f"unknown category {meta.category!r}")
    parts = [meta.subject_name, meta.os, meta.hardware_id, meta.category]
    if meta.is_malicious:
        if meta.onset_s is None:
            raise BadOnsetError(f"malware category {meta.category!r} requires onset_s")
        onset = meta.onset_s
        parts.append(str(int(onset)) if float(onset).is_integer() else repr(float(onset)))
    return "_".join(parts) + ".csv"


# --- CSV parse / write -----------------------------------------------------

def _impute(cell: str, prev: float) -> float:
    """Missing-value policy: previous row's value, 0 for the first row."""
    try:
        v = float(cell)
    except ValueError:
        return prev
    if not math.isfinite(v):
        return prev
    return v


def parse_trace_csv(
    path: str | Path,
    schema: TraceSchema | None = None,
    meta: TraceMeta | None = None,
) -> Trace:
    """Parse a labeled telemetry CSV into a Trace.

    When *meta* is omitted it is recovered from the filename; filenames
    outside the convention fall back to a generic benign placeholder so
    ad-hoc files remain loadable. The time column is optional (synthesized
    as index × sample period when absent); so is the label column (rows
    default to benign, for unlabeled live captures).
    """
    path = Path(path)
    schema = schema or TraceSchema()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTraceError(f"{path}: file has no header") from None
        header = [h.strip() for h in header]
        raw_rows = [row for row in reader if row]

    if meta is None:
        try:
            meta = parse_trace_filename(path.name)
        except (MalformedNameError, UnknownCategoryError, BadOnsetError):
            meta = TraceMeta(path.stem or "trace", "unknown", "unknown", "benign")

    has_time = schema.time_col in header
    has_label = schema.label_col in header
    if schema.feature_cols is None:
        feature_cols = [c for c in header if c not in (schema.time_col, schema.label_col)]
    else:
        missing = [c for c in schema.feature_cols if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: schema columns {missing} not in header")
        feature_cols = list(schema.feature_cols)
    if not feature_cols:
        raise MissingColumnError(f"{path}: no feature columns")

    if not raw_rows:
        raise EmptyTraceError(f"{path}: header only, no data rows")

    col_index = {c: header.index(c) for c in feature_cols}
    time_idx = header.index(schema.time_col) if has_time else None
    label_idx = header.index(schema.label_col) if has_label else None

    T, F = len(raw_rows), len(feature_cols)
    features = np.zeros((T, F), dtype=np.float64)
    times = np.zeros(T, dtype=np.float64)
    labels = np.zeros(T, dtype=np.int64)
    prev_feat = np.zeros(F, dtype=np.float64)
    prev_label = 0

    for i, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise RaggedRowError(
                f"{path}: row {i} has {len(row)} fields, header has {len(header)}"
            )
        for j, col in enumerate(feature_cols):
            features[i, j] = _impute(row[col_index[col]], prev_feat[j])
        prev_feat = features[i]
        if time_idx is not None:
            try:
                times[i] = float(row[time_idx])
            except ValueError:
                raise NonMonotonicTimeError(
                    f"{path}: row {i} time {row[time_idx]!r} is not a number"
                ) from None
        if label_idx is not None:
            labels[i] = 1 if _impute(row[label_idx], float(prev_label)) >= 0.5 else 0
        prev_label = int(labels[i])

    if time_idx is None:
        times = np.arange(T, dtype=np.float64) * meta.sample_period_s
    else:
        if np.any(np.diff(times) <= 0):
            bad = int(np.argmax(np.diff(times) <= 0)) + 1
            raise NonMonotonicTimeError(f"{path}: time does not strictly increase at row {bad}")
        if T >= 2:
            meta = replace(meta, sample_period_s=float(times[1] - times[0]))

    return Trace(meta=meta, header=feature_cols, times=times, features=features, labels=labels)


def _fmt(x: float) -> str:
    """Shortest decimal text that round-trips the float64 exactly."""
    return repr(float(x))


def write_trace_csv(trace: Trace, path: str | Path, schema: TraceSchema | None = None) -> None:
    """Write a Trace so that parse_trace_csv reproduces it field-exactly."""
    schema = schema or TraceSchema()
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema.time_col, *trace.header, schema.label_col])
        for i in range(trace.num_rows):
            writer.writerow(
                [_fmt(trace.times[i])]
                + [_fmt(v) for v in trace.features[i]]
                + [int(trace.labels[i])]
            )


# --- validation -------------------------------------------------------------

def validate_trace(trace: Trace) -> list[Violation]:
    """Check every Trace invariant; returns one Violation per failure."""
    out: list[Violation] = []
    meta = trace.meta

    if meta.category not in CATEGORIES:
        out.append(Violation("category-closed-set", None, f"{meta.category!r} unknown"))
    if meta.sample_period_s <= 0:
        out.append(Violation("sample-period-positive", None, f"{meta.sample_period_s}"))
    if meta.is_malicious and meta.onset_s is None:
        out.append(Violation("onset-presence", None, "malware trace missing onset_s"))
    if not meta.is_malicious and meta.onset_s is not None:
        out.append(Violation("onset-presence", None, "benign trace carries onset_s"))

    if len(trace.header) != trace.num_features:
        out.append(
            Violation(
                "feature-width",
                None,
                f"header has {len(trace.header)} names for {trace.num_features} columns",
            )
        )

    labels = np.asarray(trace.labels)
    for i in np.nonzero((labels != 0) & (labels != 1))[0]:
        out.append(Violation("label-domain", int(i), f"label {labels[i]} not in {{0,1}}"))

    diffs = np.diff(trace.times)
    for i in np.nonzero(diffs <= 0)[0]:
        out.append(
            Violation("time-strictly-increasing", int(i) + 1, f"t[{i + 1}] <= t[{i}]")
        )

    onset_row = meta.onset_row()
    if meta.is_malicious and meta.onset_s is not None:
        pre = np.nonzero(labels[:onset_row] == 1)[0]
        if pre.size:
            out.append(
                Violation(
                    "benign-before-onset",
                    int(pre[0]),
                    f"malicious label before onset row {onset_row}",
                )
            )
        if not np.any(labels == 1):
            out.append(Violation("malicious-rows-present", None, "no malicious rows"))
    elif not meta.is_malicious:
        mal = np.nonzero(labels == 1)[0]
        if mal.size:
            out.append(
                Violation(
                    "benign-trace-all-benign",
                    int(mal[0]),
                    "benign trace contains malicious label",
                )
            )
    return out


# --- manifest ----------------------------------------------------------------

SPLIT_TAGS = ("train", "test", "unassigned")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    meta: TraceMeta
    row_count: int
    split: str = "unassigned"


@dataclass
class Manifest:
    """Corpus index: one entry per parseable trace plus a skipped section."""

    entries: list[ManifestEntry] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def with_split(self, assignment: dict[str, str]) -> "Manifest":
        """Copy with split tags replaced per the path→tag assignment."""
        new = []
        for e in self.entries:
            tag = assignment.get(e.path, e.split)
            if tag not in SPLIT_TAGS:
                raise ValueError(f"unknown split tag {tag!r}")
            new.append(replace(e, split=tag))
        return Manifest(new, list(self.skipped))

    def select(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


def _meta_to_dict(meta: TraceMeta) -> dict:
    return {
        "subject_name": meta.subject_name,
        "os": meta.os,
        "hardware_id": meta.hardware_id,
        "category": meta.category,
        "onset_s": meta.onset_s,
        "sample_period_s": meta.sample_period_s,
    }


def _meta_from_dict(d: dict) -> TraceMeta:
    return TraceMeta(
        subject_name=d["subject_name"],
        os=d["os"],
        hardware_id=d["hardware_id"],
        category=d["category"],
        onset_s=d["onset_s"],
        sample_period_s=d["sample_period_s"],
    )


def build_manifest(directory: str | Path) -> Manifest:
    """Index every parseable ``*.csv`` trace under *directory*.

    Files that fail the filename convention or the CSV contract land in
    the skipped section with the reason; output order is path-sorted so
    manifests are reproducible regardless of directory listing order.
    """
    directory = Path(directory)
    manifest = Manifest()
    for p in sorted(directory.glob("*.csv")):
        if p.name == MANIFEST_FILENAME:
            continue
        try:
            meta = parse_trace_filename(p.name)
            trace = parse_trace_csv(p, meta=meta)
        except (MalformedNameError, UnknownCategoryError, BadOnsetError,
                MissingColumnError, RaggedRowError, NonMonotonicTimeError,
                EmptyTraceError) as exc:
            manifest.skipped.append((p.name, f"{type(exc).__name__}: {exc}"))
            continue
        manifest.entries.append(
            ManifestEntry(path=p.name, meta=trace.meta, row_count=trace.num_rows)
        )
    return manifest


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    doc = {
        "format": "sidewatch-manifest",
        "version": MANIFEST_VERSION,
        "entries": [
            {
                "path": e.path,
                "meta": _meta_to_dict(e.meta),
                "row_count": e.row_count,
                "split": e.split,
            }
            for e in manifest.entries
        ],
        "skipped": [{"path": p, "reason": r} for p, r in manifest.skipped],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str | Path) -> Manifest:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "sidewatch-manifest" or doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: not a version-{MANIFEST_VERSION} sidewatch manifest")
    entries = [
        ManifestEntry(
            path=e["path"],
            meta=_meta_from_dict(e["meta"]),
            row_count=e["row_count"],
            split=e["split"],
        )
        for e in doc["entries"]
    ]
    skipped = [(s["path"], s["reason"]) for s in doc.get("skipped", [])]
    return Manifest(entries, skipped)


def load_traces(manifest: Manifest, root: str | Path, split: str | None = None) -> list[Trace]:
    """Load (optionally split-filtered) traces, path-sorted for determinism."""
    root = Path(root)
    entries = manifest.entries if split is None else manifest.select(split)
    return [parse_trace_csv(root / e.path, meta=e.meta) for e in sorted(entries, key=lambda e: e.path)]
