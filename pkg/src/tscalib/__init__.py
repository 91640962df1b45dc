"""Noise-robust time-series classification toolkit.

Per-class two-component mixture fits over normalized training losses split
samples into certain / uncertain / hard sets; training cross-entropy is
restricted to the certain set (optionally expanded by time-warp
augmentation), uncertain samples get dynamically calibrated soft targets,
and hard samples contribute only to the reconstruction objective of the
convolution + self-attention encoder.

Heavy modules (torch-backed model and training loop) are imported lazily by
the functions that need them; importing :mod:`tscalib` itself stays cheap.
"""

from .augment import WarpSpec, build_aug_set, time_warp
from .backends import available_backends, backend_name
from .data import (
    DatasetFormatError,
    DatasetMeta,
    TimeSeriesDataset,
    kfold_split,
    load_dataset,
    save_dataset,
    synth_dataset,
)
from .metrics import SelectionQuality, selection_metrics, weighted_f1
from .noise import FlipMask, NoiseSpec, inject, inject_idn, inject_symmetric
from .select import (
    ClassLossStats,
    MixtureFit,
    SamplePartition,
    fit_bmm,
    fit_gmm,
    normalize_losses_per_class,
    partition,
    per_sample_ce,
    posterior_clean,
    sloss_partition,
)

__version__ = "0.1.0"

__all__ = [
    "ClassLossStats",
    "DatasetFormatError",
    "DatasetMeta",
    "FlipMask",
    "MixtureFit",
    "NoiseSpec",
    "SamplePartition",
    "SelectionQuality",
    "TimeSeriesDataset",
    "WarpSpec",
    "available_backends",
    "backend_name",
    "build_aug_set",
    "fit_bmm",
    "fit_gmm",
    "inject",
    "inject_idn",
    "inject_symmetric",
    "kfold_split",
    "load_dataset",
    "normalize_losses_per_class",
    "partition",
    "per_sample_ce",
    "posterior_clean",
    "save_dataset",
    "selection_metrics",
    "sloss_partition",
    "synth_dataset",
    "time_warp",
    "weighted_f1",
    "__version__",
]
