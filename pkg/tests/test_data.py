import gzip
import struct

import numpy as np
import pytest

from egprune.data import (
    Dataset,
    batches,
    load_idx,
    make_blobs,
    split_dataset,
    standardize,
    write_idx,
)
from egprune.errors import EmptyDatasetError, IDXFormatError


def idx_bytes(images, labels):
    n, rows, cols = images.shape
    img = struct.pack(">IIII", 0x803, n, rows, cols) + images.astype(np.uint8).tobytes()
    lab = struct.pack(">II", 0x801, n) + labels.astype(np.uint8).tobytes()
    return img, lab


@pytest.fixture
def idx_pair(tmp_path):
    images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4) * 10
    labels = np.array([7, 2], dtype=np.uint8)
    img, lab = idx_bytes(images, labels)
    img_path = tmp_path / "images.idx"
    lab_path = tmp_path / "labels.idx"
    img_path.write_bytes(img)
    lab_path.write_bytes(lab)
    return img_path, lab_path, images, labels


def test_load_idx_scales_and_reshapes(idx_pair):
    img_path, lab_path, images, labels = idx_pair
    ds = load_idx(img_path, lab_path, num_classes=10)
    assert ds.images.shape == (2, 1, 3, 4)
    assert np.allclose(ds.images[:, 0], images / 255.0)
    assert np.array_equal(ds.labels, labels)
    assert ds.num_classes == 10


def test_load_idx_infers_class_count(idx_pair):
    img_path, lab_path, _, _ = idx_pair
    assert load_idx(img_path, lab_path).num_classes == 8


def test_load_idx_reads_gzip(tmp_path, idx_pair):
    img_path, lab_path, _, _ = idx_pair
    gz = tmp_path / "images.idx.gz"
    with gzip.open(gz, "wb") as fh:
        fh.write(img_path.read_bytes())
    ds = load_idx(gz, lab_path, num_classes=10)
    assert len(ds) == 2


def test_write_idx_reproduces_bytes(tmp_path, idx_pair):
    img_path, lab_path, _, _ = idx_pair
    ds = load_idx(img_path, lab_path, num_classes=10)
    out_img, out_lab = tmp_path / "out-images", tmp_path / "out-labels"
    write_idx(out_img, out_lab, ds)
    assert out_img.read_bytes() == img_path.read_bytes()
    assert out_lab.read_bytes() == lab_path.read_bytes()


def test_bad_magic(tmp_path, idx_pair):
    _, lab_path, _, _ = idx_pair
    bad = tmp_path / "bad"
    bad.write_bytes(struct.pack(">IIII", 0x0D03, 1, 1, 1) + b"\x00")
    with pytest.raises(IDXFormatError, match="unsupported IDX type"):
        load_idx(bad, lab_path)


def test_truncated_files(tmp_path, idx_pair):
    img_path, lab_path, _, _ = idx_pair
    short = tmp_path / "short"
    short.write_bytes(img_path.read_bytes()[:10])
    with pytest.raises(IDXFormatError, match="truncated header"):
        load_idx(short, lab_path)
    short.write_bytes(img_path.read_bytes()[:-1])
    with pytest.raises(IDXFormatError, match="truncated payload"):
        load_idx(short, lab_path)
    short.write_bytes(img_path.read_bytes() + b"\x00")
    with pytest.raises(IDXFormatError, match="trailing bytes"):
        load_idx(short, lab_path)


def test_count_mismatch(tmp_path, idx_pair):
    img_path, _, _, _ = idx_pair
    _, lab = idx_bytes(np.zeros((3, 3, 4)), np.array([0, 1, 2]))
    lab_path = tmp_path / "three-labels"
    lab_path.write_bytes(lab)
    with pytest.raises(IDXFormatError, match="does not match label count"):
        load_idx(img_path, lab_path)


def test_dataset_is_read_only():
    ds = Dataset(images=np.zeros((2, 3)), labels=[0, 1], num_classes=2)
    with pytest.raises(ValueError):
        ds.images[0, 0] = 1.0


def test_dataset_validation():
    with pytest.raises(ValueError, match="samples but"):
        Dataset(images=np.zeros((2, 3)), labels=[0], num_classes=2)
    with pytest.raises(ValueError, match="Labels must lie in"):
        Dataset(images=np.zeros((1, 3)), labels=[2], num_classes=2)
    with pytest.raises(ValueError, match="Invalid split_tag"):
        Dataset(images=np.zeros((1, 3)), labels=[0], num_classes=2, split_tag="validation")


def test_make_blobs_is_deterministic():
    a = make_blobs(seed=3, n_per_class=10, num_classes=3, dim=4, spread=0.5)
    b = make_blobs(seed=3, n_per_class=10, num_classes=3, dim=4, spread=0.5)
    c = make_blobs(seed=4, n_per_class=10, num_classes=3, dim=4, spread=0.5)
    assert np.array_equal(a.images, b.images)
    assert not np.array_equal(a.images, c.images)
    assert a.images.shape == (30, 4)
    assert np.array_equal(np.bincount(a.labels), [10, 10, 10])
    assert len(a.metadata["centers"]) == 3


def test_make_blobs_golden_centers():
    ds = make_blobs(seed=7, n_per_class=100, num_classes=3, dim=2, spread=1.0)
    expected = [
        [1.2509546660466695, 3.9721380096957546],
        [2.7568569024519354, -2.7479281000940814],
        [-1.9983371508877457, 3.7355344539626181],
    ]
    np.testing.assert_allclose(ds.metadata["centers"], expected, rtol=1e-14, atol=0)
    assert ds.images.shape == (300, 2)
    assert np.array_equal(np.bincount(ds.labels), [100, 100, 100])


def test_make_blobs_zero_spread_sits_on_centers():
    ds = make_blobs(seed=0, n_per_class=2, num_classes=2, dim=3, spread=0.0)
    centers = np.asarray(ds.metadata["centers"])
    assert np.array_equal(ds.images, centers[ds.labels])
    assert np.all(np.abs(centers) <= 5.0)


def test_split_dataset_partitions_in_order():
    ds = make_blobs(seed=0, n_per_class=10, num_classes=2, dim=2, spread=1.0)
    train, test = split_dataset(ds, 0.25, seed=1)
    assert len(train) == 15 and len(test) == 5
    assert train.split_tag == "train" and test.split_tag == "test"
    rows = {tuple(r) for r in train.images} | {tuple(r) for r in test.images}
    assert len(rows) == 20


def test_split_dataset_rejects_empty_parts():
    ds = make_blobs(seed=0, n_per_class=1, num_classes=2, dim=2, spread=1.0)
    with pytest.raises(EmptyDatasetError):
        split_dataset(ds, 0.1, seed=0)
    with pytest.raises(ValueError, match="fraction"):
        split_dataset(ds, 1.0, seed=0)


def test_standardize_uses_given_statistics():
    ds = Dataset(images=np.array([[1.0, 3.0], [5.0, 7.0]]), labels=[0, 1], num_classes=2)
    scaled = standardize(ds)
    assert scaled.images.mean() == pytest.approx(0.0)
    assert scaled.images.std() == pytest.approx(1.0)
    other = standardize(ds, mean=scaled.metadata["mean"], std=scaled.metadata["std"])
    assert np.array_equal(other.images, scaled.images)


def test_batches_cover_every_sample_once():
    ds = Dataset(images=np.arange(10.0)[:, None], labels=np.zeros(10), num_classes=1)
    seen = np.concatenate([x[:, 0] for x, _ in batches(ds, 3, seed=5)])
    assert sorted(seen.tolist()) == list(range(10))
    sizes = [x.shape[0] for x, _ in batches(ds, 3, seed=5)]
    assert sizes == [3, 3, 3, 1]


def test_batch_order_depends_on_seed_and_epoch():
    ds = Dataset(images=np.arange(50.0)[:, None], labels=np.zeros(50), num_classes=1)

    def order(seed, epoch):
        return np.concatenate([x[:, 0] for x, _ in batches(ds, 50, seed=seed, epoch=epoch)])

    assert np.array_equal(order(1, 0), order(1, 0))
    assert not np.array_equal(order(1, 0), order(1, 1))
    assert not np.array_equal(order(1, 0), order(2, 0))
    unshuffled = np.concatenate([x[:, 0] for x, _ in batches(ds, 7, shuffle=False)])
    assert np.array_equal(unshuffled, np.arange(50.0))
