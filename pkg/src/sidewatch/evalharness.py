"""Dataset splitting, metrics, the three sweeps, and report emission.

Rates follow the granularity each model family reports at: row-level
FPR/FNR for the per-row models (MLP, conv), file-level for the recurrent
families; the report tags the granularity explicitly. Benign files have
no time-to-detect and are excluded from detection-time statistics.

Sweep points retrain with seeds derived as base seed + point index:
reproducible yet independent draws per point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detector import (
    DetectionVerdict,
    DetectorConfig,
    aggregate_sequence_verdict,
    classify_file,
    find_alert_row,
    row_flags,
    time_to_detect,
)
from .errors import (
    EmptyPopulationError,
    InsufficientStratumError,
    NoSequencesError,
)
from .featurize import chunk_sequences
from .models import (
    ModelArtifact,
    RNN_FAMILIES,
    ROW_FAMILIES,
    TrainConfig,
    build_autoencoder,
    build_conv_multibranch,
    build_mlp,
    build_rnn,
    predict_rows,
    predict_sequences,
    train_model,
)
from .telemetry import Manifest, Trace

REPORT_VERSION = 1


# --- confusion counts and rates ----------------------------------------------


@dataclass(frozen=True)
class ConfusionCounts:
    granularity: str  # "row" | "sequence" | "file"
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def add(self, predicted, truth) -> "ConfusionCounts":
        """Accumulate boolean arrays (True = malicious)."""
        predicted = np.asarray(predicted, dtype=bool)
        truth = np.asarray(truth, dtype=bool)
        return ConfusionCounts(
            granularity=self.granularity,
            tp=self.tp + int(np.sum(predicted & truth)),
            fp=self.fp + int(np.sum(predicted & ~truth)),
            tn=self.tn + int(np.sum(~predicted & ~truth)),
            fn=self.fn + int(np.sum(~predicted & truth)),
        )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    fpr: float
    fnr: float


def compute_metrics(counts: ConfusionCounts) -> Metrics:
    """accuracy=(tp+tn)/total, fpr=fp/(fp+tn), fnr=fn/(fn+tp); empty
    denominators yield 0."""
    if counts.total < 1:
        raise EmptyPopulationError(f"no {counts.granularity}-level items evaluated")
    neg = counts.fp + counts.tn
    pos = counts.fn + counts.tp
    return Metrics(
        accuracy=(counts.tp + counts.tn) / counts.total,
        fpr=counts.fp / neg if neg else 0.0,
        fnr=counts.fn / pos if pos else 0.0,
    )


# --- stratified split -----------------------------------------------------------


def _take_balanced(groups: dict, n: int, rng: np.random.Generator, what: str) -> list:
    """Draw n entries round-robin across strata, seeded within and across."""
    available = sum(len(v) for v in groups.values())
    if n > available:
        raise InsufficientStratumError(f"requested {n} {what} files, only {available} available")
    keys = sorted(groups, key=repr)
    pools = {}
    for k in keys:
        pool = sorted(groups[k], key=lambda e: e.path)
        order = rng.permutation(len(pool))
        pools[k] = [pool[i] for i in order]
    key_order = [keys[i] for i in rng.permutation(len(keys))]
    picked: list = []
    while len(picked) < n:
        for k in key_order:
            if pools[k]:
                picked.append(pools[k].pop())
                if len(picked) == n:
                    break
    return picked


def stratified_split(
    manifest: Manifest,
    train_counts: tuple[int, int],
    seed: int,
    test_counts: tuple[int, int] | None = None,
) -> Manifest:
    """Assign split tags, balanced across (label, category, onset) strata.

    train_counts/test_counts are (benign, malicious). With test_counts
    omitted every remaining file goes to the test set; otherwise the
    leftovers stay unassigned. Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for is_mal, want_train in ((False, train_counts[0]), (True, train_counts[1])):
        label = "malicious" if is_mal else "benign"
        entries = [e for e in manifest.entries if e.meta.is_malicious == is_mal]
        strata: dict = {}
        for e in entries:
            strata.setdefault((e.meta.category, e.meta.onset_s), []).append(e)
        train_picked = _take_balanced(strata, want_train, rng, f"train {label}")
        train_paths = {e.path for e in train_picked}
        for e in train_picked:
            assignment[e.path] = "train"
        rest = {k: [e for e in v if e.path not in train_paths] for k, v in strata.items()}
        rest = {k: v for k, v in rest.items() if v}
        if test_counts is None:
            for v in rest.values():
                for e in v:
                    assignment[e.path] = "test"
        else:
            want_test = test_counts[1] if is_mal else test_counts[0]
            test_picked = _take_balanced(rest, want_test, rng, f"test {label}")
            for e in test_picked:
                assignment[e.path] = "test"
            for v in rest.values():
                for e in v:
                    assignment.setdefault(e.path, "unassigned")
    return manifest.with_split(assignment)


# --- per-model evaluation ---------------------------------------------------------


@dataclass(frozen=True)
class FileResult:
    name: str
    truth: str                 # "benign" | "malicious"
    verdict: str               # "benign" | "malicious"
    alert_row: int | None
    time_to_detect_s: float | None
    alert_before_onset: bool = False


@dataclass
class EvalSection:
    model: str
    family: str
    granularity: str                       # granularity of the headline rates
    file_confusion: ConfusionCounts
    row_confusion: ConfusionCounts | None = None
    seq_confusion: ConfusionCounts | None = None
    files: list[FileResult] = field(default_factory=list)
    files_evaluated: int = 0
    mean_ttd_s: float | None = None

    @property
    def file_metrics(self) -> Metrics:
        return compute_metrics(self.file_confusion)

    @property
    def row_metrics(self) -> Metrics | None:
        return compute_metrics(self.row_confusion) if self.row_confusion else None

    @property
    def headline_metrics(self) -> Metrics:
        """The FPR/FNR at this family's reporting granularity."""
        if self.granularity == "row" and self.row_confusion is not None:
            return compute_metrics(self.row_confusion)
        if self.granularity == "sequence" and self.seq_confusion is not None:
            return compute_metrics(self.seq_confusion)
        return compute_metrics(self.file_confusion)


def _trace_cfg(cfg: DetectorConfig, trace: Trace) -> DetectorConfig:
    return replace(cfg, sample_period_s=trace.meta.sample_period_s)


def _file_result(trace: Trace, verdict: DetectionVerdict, cfg: DetectorConfig) -> FileResult:
    truth = "malicious" if trace.meta.is_malicious else "benign"
    ttd = None
    straddled = False
    if (verdict.is_malicious and verdict.alert_row is not None
            and trace.meta.is_malicious and trace.meta.onset_s is not None):
        onset_row = trace.meta.onset_row()
        if verdict.alert_row < onset_row:
            straddled = True  # reported, never silently folded into the TTD stats
        else:
            ttd = time_to_detect(verdict, onset_row, _trace_cfg(cfg, trace))
    return FileResult(
        name=trace.meta.subject_name,
        truth=truth,
        verdict=verdict.file_label,
        alert_row=verdict.alert_row,
        time_to_detect_s=ttd,
        alert_before_onset=straddled,
    )


def evaluate_model(artifact: ModelArtifact, traces: list[Trace],
                   cfg: DetectorConfig, label: str | None = None) -> EvalSection:
    """Row and file confusion plus per-file verdicts and detection times.

    Test order is fixed (name-sorted); recurrent families evaluate at
    sequence/file level only, skipping files shorter than their sequence
    length (those files simply are not evaluated).
    """
    label = label or artifact.family
    traces = sorted(traces, key=lambda t: (t.meta.subject_name, t.meta.category))
    if artifact.family in ROW_FAMILIES:
        row_conf = ConfusionCounts("row")
        file_conf = ConfusionCounts("file")
        files: list[FileResult] = []
        ttds: list[float] = []
        for trace in traces:
            probs = predict_rows(artifact, trace)
            row_conf = row_conf.add(row_flags(probs, cfg), trace.labels == 1)
            verdict = classify_file(probs, cfg)
            file_conf = file_conf.add([verdict.is_malicious], [trace.meta.is_malicious])
            result = _file_result(trace, verdict, cfg)
            files.append(result)
            if result.time_to_detect_s is not None:
                ttds.append(result.time_to_detect_s)
        return EvalSection(
            model=label,
            family=artifact.family,
            granularity="row",
            file_confusion=file_conf,
            row_confusion=row_conf,
            files=files,
            files_evaluated=len(files),
            mean_ttd_s=float(np.mean(ttds)) if ttds else None,
        )

    if artifact.family in RNN_FAMILIES:
        L = artifact.sequence_length
        if L is None:
            raise ValueError("sequence model has no configured length (untrained?)")
        seq_conf = ConfusionCounts("sequence")
        file_conf = ConfusionCounts("file")
        files = []
        for trace in traces:
            if trace.num_rows < L:
                continue
            batch = chunk_sequences([trace], L)
            probs = predict_sequences(artifact, batch)
            seq_conf = seq_conf.add(row_flags(probs, cfg), batch.labels == 1)
            verdict = aggregate_sequence_verdict(probs, cfg)
            file_conf = file_conf.add([verdict.is_malicious], [trace.meta.is_malicious])
            files.append(_file_result(trace, verdict, cfg))
        if file_conf.total == 0:
            raise NoSequencesError(f"every file is shorter than {L} rows")
        return EvalSection(
            model=label,
            family=artifact.family,
            granularity="file",
            file_confusion=file_conf,
            seq_confusion=seq_conf,
            files=files,
            files_evaluated=len(files),
        )
    raise ValueError(f"{artifact.family} cannot be evaluated against traces")


# --- sweeps --------------------------------------------------------------------


def sweep_threshold(artifact: ModelArtifact, traces: list[Trace],
                    thresholds: list[int], cfg: DetectorConfig) -> list[tuple[int, float]]:
    """File accuracy per consecutive-sample threshold, one prediction pass."""
    if any(t < 1 for t in thresholds):
        raise ValueError("thresholds must be positive")
    traces = sorted(traces, key=lambda t: (t.meta.subject_name, t.meta.category))
    flag_rows = [row_flags(predict_rows(artifact, t), cfg) for t in traces]
    truths = np.array([t.meta.is_malicious for t in traces])
    curve = []
    for thr in thresholds:
        flagged = np.array([find_alert_row(fl, thr) is not None for fl in flag_rows])
        curve.append((int(thr), float(np.mean(flagged == truths))))
    return curve


def sweep_encoding_dims(
    dims: list[int],
    families: list[str],
    train_traces: list[Trace],
    test_traces: list[Trace],
    ae_config: TrainConfig,
    clf_config: TrainConfig,
    cfg: DetectorConfig,
    seed: int = 0,
    conv_kwargs: dict | None = None,
    mlp_hidden: tuple[int, ...] = (100,),
) -> dict[str, list[tuple[int, float]]]:
    """Train an autoencoder per bottleneck dim, re-train each downstream
    family on the encoded corpus, and report file accuracy per (family, d)."""
    curves: dict[str, list[tuple[int, float]]] = {fam: [] for fam in families}
    train_rows = np.vstack([t.features for t in train_traces])
    for point, d in enumerate(dims):
        point_seed = seed + point
        ae = build_autoencoder(train_traces[0].num_features, d, seed=point_seed)
        train_model(ae, train_rows, replace(ae_config, seed=point_seed))
        for fam in families:
            fam_seed = point_seed + 1000
            if fam == "mlp":
                model = build_mlp(d, hidden=mlp_hidden, seed=fam_seed)
                model.encoder = ae
                labels = np.concatenate([t.labels for t in train_traces])
                raw_rows = np.vstack([t.features for t in train_traces])
                train_model(model, (raw_rows, labels), replace(clf_config, seed=fam_seed))
            elif fam == "conv_multibranch":
                model = build_conv_multibranch(d, seed=fam_seed, **(conv_kwargs or {}))
                model.encoder = ae
                train_model(model, train_traces, replace(clf_config, seed=fam_seed))
            else:
                raise ValueError(f"encoding sweep supports row families, not {fam!r}")
            section = evaluate_model(model, test_traces, cfg, label=f"{fam}+ae{d}")
            curves[fam].append((int(d), section.file_metrics.accuracy))
    return curves


@dataclass(frozen=True)
class SeqLenResult:
    length: int
    training_sequences: int
    accuracy: dict[str, float]  # variant -> sequence-level test accuracy


def sweep_sequence_length(
    lengths: list[int],
    variants: list[str],
    train_traces: list[Trace],
    test_traces: list[Trace],
    train_config: TrainConfig,
    cfg: DetectorConfig,
    seed: int = 0,
    hidden: tuple[int, ...] = (16, 32, 32, 16),
) -> list[SeqLenResult]:
    """Chunk, train each recurrent variant, and score per sequence length.

    Files shorter than a length contribute nothing to it; a length no
    train file reaches raises NoSequences.
    """
    results = []
    F = train_traces[0].num_features
    for point, L in enumerate(lengths):
        train_batch = chunk_sequences(train_traces, L)
        if train_batch.num_sequences == 0:
            raise NoSequencesError(f"no training file has {L} rows")
        test_batch = chunk_sequences(test_traces, L)
        accs: dict[str, float] = {}
        for variant in variants:
            cell, bi = _variant_parts(variant)
            model = build_rnn(F, cell=cell, bidirectional=bi, hidden=hidden,
                              seed=seed + point)
            train_model(model, train_batch, replace(train_config, seed=seed + point))
            if test_batch.num_sequences:
                probs = predict_sequences(model, test_batch)
                pred = row_flags(probs, cfg)
                accs[variant] = float(np.mean(pred == (test_batch.labels == 1)))
            else:
                accs[variant] = float("nan")
        results.append(SeqLenResult(int(L), int(train_batch.num_sequences), accs))
    return results


def _variant_parts(variant: str) -> tuple[str, bool]:
    mapping = {
        "rnn_vanilla": ("vanilla", False),
        "rnn_lstm": ("lstm", False),
        "rnn_lstm_bi": ("lstm", True),
        "rnn_gru": ("gru", False),
        "rnn_gru_bi": ("gru", True),
    }
    if variant not in mapping:
        raise ValueError(f"unknown rnn variant {variant!r}")
    return mapping[variant]


# --- report --------------------------------------------------------------------


@dataclass
class EvalReport:
    sections: list[EvalSection] = field(default_factory=list)
    threshold_curve: list[tuple[int, float]] | None = None
    encoding_curves: dict[str, list[tuple[int, float]]] | None = None
    seqlen_results: list[SeqLenResult] | None = None
    config: dict = field(default_factory=dict)


def _counts_doc(c: ConfusionCounts | None):
    if c is None:
        return None
    doc = {"granularity": c.granularity, "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn}
    if c.total:
        m = compute_metrics(c)
        doc.update({"accuracy": m.accuracy, "fpr": m.fpr, "fnr": m.fnr})
    return doc


def _section_doc(s: EvalSection) -> dict:
    return {
        "model": s.model,
        "family": s.family,
        "granularity": s.granularity,
        "file_confusion": _counts_doc(s.file_confusion),
        "row_confusion": _counts_doc(s.row_confusion),
        "sequence_confusion": _counts_doc(s.seq_confusion),
        "files_evaluated": s.files_evaluated,
        "mean_time_to_detect_s": s.mean_ttd_s,
        "files": [
            {
                "name": f.name,
                "truth": f.truth,
                "verdict": f.verdict,
                "alert_row": f.alert_row,
                "time_to_detect_s": f.time_to_detect_s,
                "alert_before_onset": f.alert_before_onset,
            }
            for f in s.files
        ],
    }


def report_to_doc(report: EvalReport) -> dict:
    return {
        "format": "sidewatch-report",
        "version": REPORT_VERSION,
        "config": report.config,
        "sections": [_section_doc(s) for s in report.sections],
        "threshold_curve": report.threshold_curve,
        "encoding_curves": report.encoding_curves,
        "sequence_length_results": None if report.seqlen_results is None else [
            {"length": r.length, "training_sequences": r.training_sequences,
             "accuracy": r.accuracy}
            for r in report.seqlen_results
        ],
    }


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100.0 * x:.2f}%"


def summary_table(report: EvalReport) -> str:
    """Aligned text table: model, row/file accuracy, FPR, FNR."""
    headers = ["Model", "Row Accuracy", "File Accuracy", "FPR", "FNR", "Rate Granularity"]
    rows = []
    for s in report.sections:
        rm = s.row_metrics
        hm = s.headline_metrics
        fm = s.file_metrics
        rows.append([
            s.model,
            _pct(rm.accuracy if rm else None),
            _pct(fm.accuracy),
            _pct(hm.fpr),
            _pct(hm.fnr),
            s.granularity,
        ])
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def emit_report(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Write report.json, summary.txt, and two-column curve files.

    Emission is deterministic: re-running writes byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report_to_doc(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(report_path)

    summary_path = out_dir / "summary.txt"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(summary_table(report))
    written.append(summary_path)

    if report.threshold_curve is not None:
        p = out_dir / "threshold_sweep.txt"
        _write_curve(p, report.threshold_curve, "threshold", "file_accuracy")
        written.append(p)
    if report.encoding_curves:
        for fam in sorted(report.encoding_curves):
            p = out_dir / f"encoding_sweep_{fam}.txt"
            _write_curve(p, report.encoding_curves[fam], "encoding_dim", "file_accuracy")
            written.append(p)
    if report.seqlen_results:
        variants = sorted({v for r in report.seqlen_results for v in r.accuracy})
        for v in variants:
            p = out_dir / f"seqlen_sweep_{v}.txt"
            curve = [(r.length, r.accuracy[v]) for r in report.seqlen_results
                     if v in r.accuracy]
            _write_curve(p, curve, "sequence_length", "sequence_accuracy")
            written.append(p)
        p = out_dir / "seqlen_training_sequences.txt"
        curve = [(r.length, r.training_sequences) for r in report.seqlen_results]
        _write_curve(p, curve, "sequence_length", "training_sequences")
        written.append(p)
    return written


def _write_curve(path: Path, curve, xname: str, yname: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {xname}\t{yname}\n")
        for x, y in curve:
            fh.write(f"{x}\t{y!r}\n")
