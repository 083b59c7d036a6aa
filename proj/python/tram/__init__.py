"""Python access to the tram pipeline: labels, metrics, masks and stages."""

from ._tram import (
    DAILY_FEATURES,
    LABEL_NAMES,
    SEQUENCE_FEATURES,
    competition_score,
    evaluate_run,
    f1_macro,
    geometric_mask,
    predict_raw,
    q_label,
    read_sequences,
    run_stage,
    s_labels,
)

__all__ = [
    "DAILY_FEATURES",
    "LABEL_NAMES",
    "SEQUENCE_FEATURES",
    "competition_score",
    "evaluate_run",
    "f1_macro",
    "geometric_mask",
    "predict_raw",
    "q_label",
    "read_sequences",
    "run_stage",
    "s_labels",
]
