"""Dataset model, plain-text on-disk format, synthetic generator, k-fold split.

On-disk layout of a dataset directory:

* ``meta.json`` -- keys ``name``, ``n_classes``, ``series_length``,
  ``n_features``.
* ``data.csv`` -- header then one row per instance:
  ``id,true_label,noisy_label,v_1,...,v_{T*F}`` with values flattened
  time-major (all F features of timestep 1, then timestep 2, ...). The
  string ``NA`` is reserved for missing values and rejected by the loader.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Observation-noise amplitude of the synthetic generator. Frozen after a
# one-time calibration against the nearest-centroid separability check in
# the test suite; do not tune per experiment.
SYNTH_NOISE_AMP = 0.8

MISSING_SENTINEL = "NA"

META_FILE = "meta.json"
DATA_FILE = "data.csv"


class DatasetFormatError(ValueError):
    """A dataset directory or in-memory dataset failed validation."""


@dataclass
class DatasetMeta:
    name: str
    n_classes: int
    series_length: int
    n_features: int


@dataclass
class TimeSeriesDataset:
    """N labelled series of shape (T, F) with observed (possibly noisy) labels."""

    instances: np.ndarray  # (N, T, F) float64
    true_labels: np.ndarray  # (N,) int64
    noisy_labels: np.ndarray  # (N,) int64
    ids: np.ndarray  # (N,) int64
    meta: DatasetMeta

    @property
    def n_instances(self) -> int:
        return int(self.instances.shape[0])

    def validate(self) -> None:
        x = self.instances
        if x.ndim != 3:
            raise DatasetFormatError(f"instances must be (N, T, F), got shape {x.shape}")
        n, t, f = x.shape
        if n < 1:
            raise DatasetFormatError("dataset must contain at least one instance")
        if t != self.meta.series_length or f != self.meta.n_features:
            raise DatasetFormatError(
                f"instance tensor {x.shape[1:]} does not match meta "
                f"(series_length={self.meta.series_length}, n_features={self.meta.n_features})"
            )
        if self.meta.n_classes < 2:
            raise DatasetFormatError("n_classes must be >= 2")
        for attr in ("true_labels", "noisy_labels", "ids"):
            arr = getattr(self, attr)
            if arr.shape != (n,):
                raise DatasetFormatError(f"{attr} must have shape ({n},), got {arr.shape}")
        for attr in ("true_labels", "noisy_labels"):
            arr = getattr(self, attr)
            bad = np.flatnonzero((arr < 0) | (arr >= self.meta.n_classes))
            if bad.size:
                raise DatasetFormatError(
                    f"{attr}[{bad[0]}] = {arr[bad[0]]} outside [0, {self.meta.n_classes})"
                )
        if not np.isfinite(x).all():
            idx = np.argwhere(~np.isfinite(x))[0]
            raise DatasetFormatError(f"non-finite value in instance {idx[0]}")

    def subset(self, indices) -> "TimeSeriesDataset":
        """Copying row selection; the result owns its arrays."""
        idx = np.asarray(indices, dtype=np.int64)
        return TimeSeriesDataset(
            instances=self.instances[idx].copy(),
            true_labels=self.true_labels[idx].copy(),
            noisy_labels=self.noisy_labels[idx].copy(),
            ids=self.ids[idx].copy(),
            meta=DatasetMeta(**vars(self.meta)),
        )


def save_dataset(dataset: TimeSeriesDataset, path) -> None:
    """Write ``meta.json`` + ``data.csv``; round-trips through load_dataset."""
    dataset.validate()
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    meta = dataset.meta
    with open(directory / META_FILE, "w") as fh:
        json.dump(
            {
                "name": meta.name,
                "n_classes": meta.n_classes,
                "series_length": meta.series_length,
                "n_features": meta.n_features,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    n_values = meta.series_length * meta.n_features
    header = ["id", "true_label", "noisy_label"] + [f"v_{j + 1}" for j in range(n_values)]
    with open(directory / DATA_FILE, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        flat = dataset.instances.reshape(dataset.n_instances, n_values)
        for i in range(dataset.n_instances):
            row = [int(dataset.ids[i]), int(dataset.true_labels[i]), int(dataset.noisy_labels[i])]
            row += [repr(float(v)) for v in flat[i]]
            writer.writerow(row)


def load_dataset(path) -> TimeSeriesDataset:
    """Read and validate a dataset directory; errors name the offending row."""
    directory = Path(path)
    meta_path = directory / META_FILE
    data_path = directory / DATA_FILE
    if not meta_path.is_file():
        raise DatasetFormatError(f"missing {meta_path}")
    if not data_path.is_file():
        raise DatasetFormatError(f"missing {data_path}")
    with open(meta_path) as fh:
        raw_meta = json.load(fh)
    try:
        meta = DatasetMeta(
            name=str(raw_meta["name"]),
            n_classes=int(raw_meta["n_classes"]),
            series_length=int(raw_meta["series_length"]),
            n_features=int(raw_meta["n_features"]),
        )
    except KeyError as exc:
        raise DatasetFormatError(f"meta.json missing key {exc}") from None
    n_values = meta.series_length * meta.n_features
    expected_header = ["id", "true_label", "noisy_label"] + [f"v_{j + 1}" for j in range(n_values)]

    ids, true_labels, noisy_labels, rows = [], [], [], []
    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected_header:
            raise DatasetFormatError(
                f"data.csv line 1: malformed header (expected {len(expected_header)} columns "
                f"starting with id,true_label,noisy_label)"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + n_values:
                raise DatasetFormatError(
                    f"data.csv line {line_no}: expected {3 + n_values} fields, got {len(row)}"
                )
            try:
                ids.append(int(row[0]))
                true_labels.append(int(row[1]))
                noisy_labels.append(int(row[2]))
            except ValueError:
                raise DatasetFormatError(f"data.csv line {line_no}: non-integer id/label") from None
            values = []
            for j, cell in enumerate(row[3:]):
                if cell.strip() == MISSING_SENTINEL:
                    raise DatasetFormatError(
                        f"data.csv line {line_no}: missing-value sentinel "
                        f"'{MISSING_SENTINEL}' in column v_{j + 1} is not supported"
                    )
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetFormatError(
                        f"data.csv line {line_no}: non-numeric value {cell!r} in column v_{j + 1}"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetFormatError(
                        f"data.csv line {line_no}: non-finite value in column v_{j + 1}"
                    )
                values.append(v)
            rows.append(values)
            for label, which in ((true_labels[-1], "true_label"), (noisy_labels[-1], "noisy_label")):
                if not 0 <= label < meta.n_classes:
                    raise DatasetFormatError(
                        f"data.csv line {line_no}: {which} {label} outside [0, {meta.n_classes})"
                    )
    if not rows:
        raise DatasetFormatError("data.csv contains no instances")
    dataset = TimeSeriesDataset(
        instances=np.asarray(rows, dtype=np.float64).reshape(
            len(rows), meta.series_length, meta.n_features
        ),
        true_labels=np.asarray(true_labels, dtype=np.int64),
        noisy_labels=np.asarray(noisy_labels, dtype=np.int64),
        ids=np.asarray(ids, dtype=np.int64),
        meta=meta,
    )
    dataset.validate()
    return dataset


def _class_template(c: int, n_classes: int, length: int, n_features: int) -> np.ndarray:
    """Class-specific waveform: sinusoid plus a localized bump, per channel."""
    t = np.linspace(0.0, 1.0, length, endpoint=False)
    template = np.empty((length, n_features))
    for f in range(n_features):
        freq = 1.0 + 0.8 * c + 0.3 * f
        phase = 2.0 * np.pi * (0.37 * c + 0.13 * f)
        center = ((c + 0.5) / n_classes + 0.09 * f) % 1.0
        sign = 1.0 if (c + f) % 2 == 0 else -1.0
        wave = np.sin(2.0 * np.pi * freq * t + phase)
        bump = sign * 1.3 * np.exp(-0.5 * ((t - center) / 0.06) ** 2)
        template[:, f] = wave + bump
    return template


def synth_dataset(
    n_per_class: int,
    n_classes: int,
    series_length: int,
    n_features: int,
    seed: int,
    name: str = "synthetic",
) -> TimeSeriesDataset:
    """Balanced synthetic classification dataset, deterministic in ``seed``.

    Each class is a fixed waveform (class-dependent sinusoid frequency/phase
    plus a class-dependent bump) observed under additive Gaussian noise of
    amplitude ``SYNTH_NOISE_AMP``.
    """
    if n_per_class < 1 or series_length < 1 or n_features < 1:
        raise ValueError("sizes must be >= 1")
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    rng = np.random.default_rng(seed)
    n = n_per_class * n_classes
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    templates = np.stack(
        [_class_template(c, n_classes, series_length, n_features) for c in range(n_classes)]
    )
    instances = templates[labels] + SYNTH_NOISE_AMP * rng.standard_normal(
        (n, series_length, n_features)
    )
    dataset = TimeSeriesDataset(
        instances=instances,
        true_labels=labels,
        noisy_labels=labels.copy(),
        ids=np.arange(n, dtype=np.int64),
        meta=DatasetMeta(
            name=name,
            n_classes=n_classes,
            series_length=series_length,
            n_features=n_features,
        ),
    )
    dataset.validate()
    return dataset


def kfold_split(dataset: TimeSeriesDataset, k: int, seed: int):
    """Stratified k-fold split: list of (train_indices, test_indices).

    Folds partition [0, N); per-fold class counts stay within one sample of
    an even split of each class. Deterministic in ``seed``.
    """
    n = dataset.n_instances
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError(f"k={k} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    pointer = 0
    for c in range(dataset.meta.n_classes):
        members = np.flatnonzero(dataset.true_labels == c)
        rng.shuffle(members)
        for idx in members:
            folds[pointer % k].append(int(idx))
            pointer += 1
    splits = []
    for j in range(k):
        test = np.asarray(sorted(folds[j]), dtype=np.int64)
        train = np.asarray(sorted(set(range(n)) - set(folds[j])), dtype=np.int64)
        splits.append((train, test))
    return splits
