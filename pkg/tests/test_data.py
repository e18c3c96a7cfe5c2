"""Dataset pool bookkeeping and synthetic data generation."""

import numpy as np
import pytest

from epic.data import DatasetState, DropRecord, blob_centers, make_blobs, plant_outliers
from epic.errors import InvalidInput


def test_active_and_dropped_partition_universe():
    ds = make_blobs(5, 2, 2, seed=0)
    ds.drop([2, 7], [DropRecord(1, 0, 0), DropRecord(1, 1, 0)])
    assert set(ds.active.tolist()) | set(ds.dropped) == set(range(10))
    assert set(ds.active.tolist()) & set(ds.dropped) == set()
    assert list(ds.active) == sorted(ds.active)


def test_drop_is_permanent_and_guarded():
    ds = make_blobs(3, 2, 2, seed=1)
    ds.drop([0], [DropRecord(0, 0, 0)])
    with pytest.raises(InvalidInput):
        ds.drop([0], [DropRecord(1, 0, 0)])
    with pytest.raises(InvalidInput):
        ds.drop([99], [DropRecord(1, 0, 0)])


def test_drop_records_provenance():
    ds = make_blobs(3, 2, 2, seed=1)
    rec = DropRecord(epoch=4, class_label=1, medoid_rank=2)
    ds.drop([5], [rec])
    assert ds.dropped[5] == rec


def test_blobs_deterministic_and_labeled():
    a = make_blobs(20, 3, 2, center_distance=2.0, noise=0.7, seed=42)
    b = make_blobs(20, 3, 2, center_distance=2.0, noise=0.7, seed=42)
    c = make_blobs(20, 3, 2, center_distance=2.0, noise=0.7, seed=43)
    np.testing.assert_array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)
    assert np.bincount(a.labels).tolist() == [20, 20, 20]


def test_blob_centers_spacing():
    centers = blob_centers(2, 2, 3.0)
    assert np.linalg.norm(centers[0] - centers[1]) == pytest.approx(6.0)


def test_plant_outliers_appends_masked_rows():
    ds = make_blobs(10, 2, 2, center_distance=3.0, seed=5)
    out = plant_outliers(ds, (0.5, 1.0), source_class=0, toward_class=1, center_distance=3.0)
    assert out.size == 22
    assert out.poison_mask is not None
    assert out.poison_mask.sum() == 2
    assert set(np.nonzero(out.poison_mask)[0]) == {20, 21}
    assert out.labels[20] == 0 and out.labels[21] == 0
    centers = blob_centers(2, 2, 3.0)
    np.testing.assert_allclose(out.features[21], centers[1], atol=1e-12)


def test_plant_outliers_needs_distinct_classes():
    ds = make_blobs(5, 2, 2, seed=5)
    with pytest.raises(InvalidInput):
        plant_outliers(ds, (1.0,), 0, 0, 3.0)


def test_clone_isolates_state():
    ds = make_blobs(4, 2, 2, seed=6)
    cl = ds.clone()
    cl.drop([1], [DropRecord(0, 0, 0)])
    assert 1 in cl.dropped
    assert 1 not in ds.dropped
    assert ds.active.shape[0] == 8
