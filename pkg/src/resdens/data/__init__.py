"""Image ingestion, augmentation, dataset manifests and synthetic data."""
from .images import augment, resize, rotate
from .manifest import (
    CLASS_NAMES,
    AugTag,
    DatasetManifest,
    LabeledImage,
    Record,
    collapse_labels,
    expand_training_set,
    read_labels_csv,
    read_manifest,
    rebalance_minority,
    split_dataset,
    to_two_class,
    write_manifest,
)
from .pgm import load_image, write_image
from .prepare import count_table, materialize, prepare_dataset
from .synthetic import DENSITY_BANDS, bright_fraction, generate_synthetic

__all__ = [
    "AugTag",
    "CLASS_NAMES",
    "DENSITY_BANDS",
    "DatasetManifest",
    "LabeledImage",
    "Record",
    "augment",
    "bright_fraction",
    "collapse_labels",
    "count_table",
    "expand_training_set",
    "generate_synthetic",
    "load_image",
    "materialize",
    "prepare_dataset",
    "read_labels_csv",
    "read_manifest",
    "rebalance_minority",
    "resize",
    "rotate",
    "split_dataset",
    "to_two_class",
    "write_image",
    "write_manifest",
]
