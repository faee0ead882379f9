"""Wafer-map semi-supervised training toolkit (C++ core bindings)."""

from ._core import (  # noqa: F401
    Dataset,
    MetricsReport,
    PerClassMetrics,
    WaferError,
    WaferMap,
    augment,
    balance_dataset,
    class_index,
    class_names,
    confusion_metrics,
    consistency_loss,
    consistency_ramp,
    encode_input,
    generate_synthetic_dataset,
    generate_synthetic_wafer,
    l2_normalize,
    load_dataset,
    render_report,
    save_dataset,
    smote_oversample,
    softmax_cross_entropy,
    split_labeled_fraction,
    supcon_loss,
    train,
    undersample,
    verify,
)

__all__ = [
    "Dataset",
    "MetricsReport",
    "PerClassMetrics",
    "WaferError",
    "WaferMap",
    "augment",
    "balance_dataset",
    "class_index",
    "class_names",
    "confusion_metrics",
    "consistency_loss",
    "consistency_ramp",
    "encode_input",
    "generate_synthetic_dataset",
    "generate_synthetic_wafer",
    "l2_normalize",
    "load_dataset",
    "render_report",
    "save_dataset",
    "smote_oversample",
    "softmax_cross_entropy",
    "split_labeled_fraction",
    "supcon_loss",
    "train",
    "undersample",
    "verify",
]
