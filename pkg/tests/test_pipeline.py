import json

import numpy as np
import pytest

from egprune.config import parse_config
from egprune.data import Dataset, write_idx
from egprune.errors import ConfigError
from egprune.network import build_cnn, build_mlp
from egprune.pipeline import (
    build_model,
    dataset_name,
    load_splits,
    model_name,
    run_prune,
    run_reduce,
    run_scratch,
    run_train,
    top1,
)

BLOBS = {
    "seed": 0,
    "model": {"kind": "mlp", "hidden": [16, 16]},
    "data": {"source": "blobs", "n_per_class": 20, "num_classes": 3, "dim": 8, "spread": 0.5},
    "train": {"epochs": 3, "batch_size": 16},
    "prune": {"zeta": 0.5, "iterations": 2, "finetune": {"epochs": 1}},
}


def config(**overrides):
    doc = json.loads(json.dumps(BLOBS))
    doc.update(overrides)
    return parse_config(json.dumps(doc))


@pytest.fixture
def idx_files(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(30, 1, 6, 6)) / 255.0
    ds = Dataset(images=pixels, labels=np.arange(30) % 3, num_classes=3)
    write_idx(tmp_path / "train-images", tmp_path / "train-labels", ds)
    return tmp_path


def test_blob_splits():
    splits = load_splits(config())
    assert len(splits.train) == 48 and len(splits.test) == 12
    assert splits.entropy is splits.train
    assert splits.train.images.mean() == pytest.approx(0.0)
    assert splits.test.metadata["mean"] == splits.train.metadata["mean"]


def test_holdout_split_is_carved_from_train():
    splits = load_splits(config(entropy_split="holdout"))
    assert len(splits.train) == 38
    assert len(splits.entropy) == 10
    assert splits.entropy.split_tag == "entropy"
    assert splits.by_name("holdout") is splits.entropy
    with pytest.raises(ValueError, match="Invalid split"):
        splits.by_name("validation")


def test_test_split_can_drive_statistics():
    splits = load_splits(config(entropy_split="test"))
    assert splits.entropy is splits.test


def test_splits_are_deterministic():
    a, b = load_splits(config()), load_splits(config())
    assert np.array_equal(a.train.images, b.train.images)
    c = load_splits(config(seed=1))
    assert not np.array_equal(a.train.images, c.train.images)


def test_cnn_needs_image_data():
    cfg = config(model={"kind": "cnn", "channels": [2], "hidden": [4]})
    with pytest.raises(ConfigError) as info:
        load_splits(cfg)
    assert info.value.field == "model.kind"


def test_idx_pipeline_with_cnn(idx_files):
    doc = {
        "model": {"kind": "cnn", "channels": [2], "kernel_size": 3, "hidden": [4]},
        "data": {
            "source": "idx",
            "train_images": "train-images",
            "train_labels": "train-labels",
            "limit": 25,
            "test_fraction": 0.2,
        },
        "train": {"epochs": 1},
    }
    cfg = parse_config(json.dumps(doc), base_dir=idx_files)
    splits = load_splits(cfg)
    assert len(splits.train) == 20 and len(splits.test) == 5
    assert splits.train.sample_shape == (1, 6, 6)
    net, history, _ = run_train(cfg, splits)
    assert len(history) == 1
    assert net.metadata["model"] == "cnn-1x6x6-c2-4-3"
    assert net.metadata["dataset"] == "idx-train-images"


def test_idx_mlp_flattens_images(idx_files):
    doc = {"data": {"source": "idx", "train_images": "train-images", "train_labels": "train-labels"}}
    splits = load_splits(parse_config(json.dumps(doc), base_dir=idx_files))
    assert splits.train.sample_shape == (36,)


def test_model_and_dataset_names():
    assert model_name(build_mlp(8, [16, 16], 3)) == "mlp-8-16-16-3"
    assert model_name(build_cnn((1, 6, 6), [2], 3, [4], 3)) == "cnn-1x6x6-c2-4-3"
    assert model_name(build_mlp(8, [16, 16, 16], 3, residual=True)) == "mlp-8-16-16r-16r-3"
    assert dataset_name(config()) == "blobs-3x8"
    net = build_model(config(), (8,), 3)
    assert net.metadata == {"model": "mlp-8-16-16-3", "dataset": "blobs-3x8"}


def test_train_prune_reduce_chain():
    cfg = config()
    trained, history, splits = run_train(cfg)
    assert len(history) == 3
    pruned, logs, _ = run_prune(cfg, trained, splits)
    assert [log.sparsity_pct for log in logs] == [50.0, 75.0]
    assert pruned.metadata["prune_mode"] == "egp"
    assert 0.0 <= top1(pruned, splits) <= 1.0

    result, report, _ = run_reduce(cfg, pruned, splits)
    assert sorted(e.layer_index for e in report) == [0, 1]
    assert result.plan.verification is not None
    if result.accepted:
        assert result.network.depth == pruned.depth - result.plan.layers_removed_count


def test_scratch_reuses_the_topology():
    cfg = config()
    trained, _, splits = run_train(cfg)
    scratch, history, _ = run_scratch(cfg, trained.topology(), splits)
    assert scratch.topology() == trained.topology()
    assert scratch.metadata["stage"] == "scratch"
    assert len(history) == cfg.train.epochs
