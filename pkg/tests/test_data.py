import numpy as np
import pytest

from tscalib.data import (
    DatasetFormatError,
    DatasetMeta,
    TimeSeriesDataset,
    kfold_split,
    load_dataset,
    save_dataset,
    synth_dataset,
)
from tscalib.metrics import weighted_f1


def test_round_trip_is_lossless(tmp_path):
    ds = synth_dataset(5, 3, 7, 2, seed=3)
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert np.array_equal(back.true_labels, ds.true_labels)
    assert np.array_equal(back.noisy_labels, ds.noisy_labels)
    assert np.array_equal(back.ids, ds.ids)
    assert np.abs(back.instances - ds.instances).max() <= 1e-12
    assert back.meta == ds.meta


def test_load_matches_meta(tmp_path):
    ds = synth_dataset(4, 3, 5, 1, seed=0)
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.n_instances == 12
    assert back.meta.n_classes == 3
    assert back.meta.series_length == 5
    assert back.meta.n_features == 1


def _write_toy(tmp_path, mutate):
    ds = synth_dataset(2, 2, 3, 1, seed=1)
    save_dataset(ds, tmp_path / "d")
    data = (tmp_path / "d" / "data.csv").read_text().splitlines()
    data = mutate(data)
    (tmp_path / "d" / "data.csv").write_text("\n".join(data) + "\n")
    return tmp_path / "d"


def test_label_out_of_range_names_row(tmp_path):
    def mutate(lines):
        parts = lines[2].split(",")
        parts[1] = "5"
        lines[2] = ",".join(parts)
        return lines

    path = _write_toy(tmp_path, mutate)
    with pytest.raises(DatasetFormatError, match="line 3.*outside"):
        load_dataset(path)


def test_short_row_is_dimension_error(tmp_path):
    path = _write_toy(tmp_path, lambda lines: lines[:1] + [",".join(lines[1].split(",")[:-1])] + lines[2:])
    with pytest.raises(DatasetFormatError, match="line 2"):
        load_dataset(path)


def test_missing_sentinel_rejected(tmp_path):
    def mutate(lines):
        parts = lines[1].split(",")
        parts[3] = "NA"
        lines[1] = ",".join(parts)
        return lines

    with pytest.raises(DatasetFormatError, match="NA"):
        load_dataset(_write_toy(tmp_path, mutate))


def test_non_finite_rejected(tmp_path):
    def mutate(lines):
        parts = lines[1].split(",")
        parts[4] = "inf"
        lines[1] = ",".join(parts)
        return lines

    with pytest.raises(DatasetFormatError, match="non-finite"):
        load_dataset(_write_toy(tmp_path, mutate))


def test_malformed_header(tmp_path):
    with pytest.raises(DatasetFormatError, match="line 1"):
        load_dataset(_write_toy(tmp_path, lambda lines: ["id,bogus"] + lines[1:]))


def test_empty_dataset_rejected_at_save(tmp_path):
    empty = TimeSeriesDataset(
        instances=np.empty((0, 3, 1)),
        true_labels=np.empty(0, dtype=np.int64),
        noisy_labels=np.empty(0, dtype=np.int64),
        ids=np.empty(0, dtype=np.int64),
        meta=DatasetMeta("empty", 2, 3, 1),
    )
    with pytest.raises(DatasetFormatError):
        save_dataset(empty, tmp_path / "d")


def test_degenerate_shape_single_column(tmp_path):
    ds = synth_dataset(2, 2, 1, 1, seed=5)
    save_dataset(ds, tmp_path / "d")
    header = (tmp_path / "d" / "data.csv").read_text().splitlines()[0]
    assert header == "id,true_label,noisy_label,v_1"
    assert load_dataset(tmp_path / "d").meta.series_length == 1


def test_synth_balanced_and_sized():
    ds = synth_dataset(100, 3, 50, 1, seed=7)
    assert ds.n_instances == 300
    assert np.array_equal(np.bincount(ds.true_labels), [100, 100, 100])
    assert np.array_equal(ds.true_labels, ds.noisy_labels)


def test_synth_deterministic():
    a = synth_dataset(10, 3, 20, 2, seed=9)
    b = synth_dataset(10, 3, 20, 2, seed=9)
    assert np.array_equal(a.instances, b.instances)
    c = synth_dataset(10, 3, 20, 2, seed=10)
    assert not np.array_equal(a.instances, c.instances)


def test_synth_rejects_bad_sizes():
    with pytest.raises(ValueError):
        synth_dataset(10, 1, 20, 1, seed=0)
    with pytest.raises(ValueError):
        synth_dataset(0, 3, 20, 1, seed=0)


def test_centroid_oracle_separability():
    # Independent nearest-centroid classifier bounds the task difficulty:
    # the frozen observation-noise amplitude must keep it above 0.9 F1.
    ds = synth_dataset(100, 3, 50, 1, seed=7)
    train, test = kfold_split(ds, 2, seed=0)[0]
    centroids = np.stack(
        [ds.instances[train][ds.true_labels[train] == c].mean(axis=0) for c in range(3)]
    )
    x = ds.instances[test]
    dists = ((x[:, None] - centroids[None]) ** 2).sum(axis=(2, 3))
    preds = dists.argmin(axis=1)
    assert weighted_f1(preds, ds.true_labels[test], 3) >= 0.9


def test_kfold_is_partition():
    ds = synth_dataset(2, 5, 4, 1, seed=2)  # N=10
    splits = kfold_split(ds, 5, seed=3)
    assert len(splits) == 5
    all_test = np.concatenate([te for _, te in splits])
    assert sorted(all_test.tolist()) == list(range(10))
    for i, (tr, te) in enumerate(splits):
        assert len(te) == 2
        assert set(tr) | set(te) == set(range(10))
        assert not set(tr) & set(te)
        for j, (_, other) in enumerate(splits):
            if i != j:
                assert not set(te) & set(other)


def test_kfold_stratified_within_one_sample():
    ds = synth_dataset(10, 3, 4, 1, seed=2)  # 30 samples, 10 per class
    for train, test in kfold_split(ds, 5, seed=1):
        counts = np.bincount(ds.true_labels[test], minlength=3)
        # exhaustive count: 10 per class over 5 folds -> exactly 2 each
        assert np.abs(counts - 2).max() <= 1
        assert counts.sum() == 6


def test_kfold_deterministic_and_validated():
    ds = synth_dataset(4, 3, 4, 1, seed=2)
    a = kfold_split(ds, 3, seed=5)
    b = kfold_split(ds, 3, seed=5)
    for (tr1, te1), (tr2, te2) in zip(a, b):
        assert np.array_equal(tr1, tr2) and np.array_equal(te1, te2)
    with pytest.raises(ValueError):
        kfold_split(ds, 13, seed=0)
    with pytest.raises(ValueError):
        kfold_split(ds, 1, seed=0)
