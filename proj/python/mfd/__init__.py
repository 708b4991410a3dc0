"""Malicious flow detection: pcap parsing, flow features and tree-shaped classifiers."""

from ._core import (
    CLASSES,
    FEATURE_DIM,
    MfdError,
    Model,
    class_counts,
    compare,
    feature_names,
    featurize_pcap,
    metrics,
    qdbp_weights,
    synthetic_features,
    train,
    version,
)

__all__ = [
    "CLASSES",
    "FEATURE_DIM",
    "MfdError",
    "Model",
    "class_counts",
    "compare",
    "feature_names",
    "featurize_pcap",
    "metrics",
    "qdbp_weights",
    "synthetic_features",
    "train",
    "version",
]
__version__ = version()
