"""sidewatch: malware detection from hardware side-channel telemetry.

Small neural classifiers (MLP, multi-branch 1-D conv, autoencoder
front-ends, recurrent nets) trained on labeled sensor traces, with a
consecutive-sample file-level decision rule and a streaming detector.
"""

__version__ = "0.1.0"

from .detector import DetectionVerdict, DetectorConfig, classify_file, time_to_detect
from .featurize import (
    BranchSet,
    NormStats,
    SequenceBatch,
    chunk_sequences,
    downsample,
    make_branch_set,
    make_row_windows,
    rolling_mean,
    zscore_apply,
    zscore_fit,
)
from .models import (
    ModelArtifact,
    TrainConfig,
    build_autoencoder,
    build_conv_multibranch,
    build_mlp,
    build_rnn,
    load_model,
    predict_rows,
    predict_sequences,
    save_model,
    train_model,
)
from .telemetry import (
    Manifest,
    Trace,
    TraceMeta,
    build_manifest,
    parse_trace_csv,
    parse_trace_filename,
    render_filename,
    validate_trace,
    write_trace_csv,
)

__all__ = [
    "BranchSet",
    "DetectionVerdict",
    "DetectorConfig",
    "Manifest",
    "ModelArtifact",
    "NormStats",
    "SequenceBatch",
    "Trace",
    "TraceMeta",
    "TrainConfig",
    "build_autoencoder",
    "build_conv_multibranch",
    "build_manifest",
    "build_mlp",
    "build_rnn",
    "chunk_sequences",
    "classify_file",
    "downsample",
    "load_model",
    "make_branch_set",
    "make_row_windows",
    "parse_trace_csv",
    "parse_trace_filename",
    "predict_rows",
    "predict_sequences",
    "render_filename",
    "rolling_mean",
    "save_model",
    "time_to_detect",
    "train_model",
    "validate_trace",
    "write_trace_csv",
    "zscore_apply",
    "zscore_fit",
]
