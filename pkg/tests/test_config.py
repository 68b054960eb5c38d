import json

import pytest

from egprune.config import ExperimentConfig, load_config, parse_config
from egprune.egp import BudgetBase, PruneMode
from egprune.errors import ConfigError


def field_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.field


def test_empty_document_gives_defaults():
    cfg = parse_config("{}")
    assert cfg.seed == 0
    assert cfg.model.kind == "mlp"
    assert cfg.model.hidden == (64, 64)
    assert cfg.data.source == "blobs"
    assert cfg.prune.mode is PruneMode.EGP
    assert cfg.prune.budget_base is BudgetBase.REMAINING
    assert cfg.prune.finetune.epochs == 5
    assert cfg.prune.finetune.learning_rate == cfg.train.learning_rate
    assert cfg.entropy_split == "train"
    assert cfg.raw_text == "{}"


def test_full_document():
    doc = {
        "seed": 3,
        "model": {"kind": "cnn", "channels": [4, 8], "kernel_size": 5, "hidden": [32]},
        "data": {"source": "blobs", "num_classes": 4, "dim": 6, "test_fraction": 0.25},
        "train": {"learning_rate": 0.1, "epochs": 8, "batch_size": 16},
        "prune": {"zeta": 0.3, "iterations": 4, "mode": "vanilla", "finetune": {"epochs": 2}},
        "reduce": {"rel_tol": 1e-8},
        "entropy_split": "holdout",
        "workers": 2,
    }
    cfg = parse_config(json.dumps(doc))
    assert cfg.seed == 3
    assert cfg.model.channels == (4, 8)
    assert cfg.data.num_classes == 4
    assert cfg.train.batch_size == 16
    assert cfg.prune.zeta == 0.3
    assert cfg.prune.mode is PruneMode.VANILLA
    assert cfg.prune.finetune.epochs == 2
    assert cfg.prune.finetune.learning_rate == 0.1
    assert cfg.prune.finetune.batch_size == 16
    assert cfg.reduce.rel_tol == 1e-8
    assert cfg.entropy_split == "holdout"
    assert cfg.workers == 2


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"prune": {"zeta": 1.5}}, "prune.zeta"),
        ({"prune": {"iterations": 0}}, "prune.iterations"),
        ({"prune": {"finetune": {"learning_rate": 0}}}, "prune.finetune.learning_rate"),
        ({"prune": {"colour": "red"}}, "prune.colour"),
        ({"train": {"momentum": 1.0}}, "train.momentum"),
        ({"model": {"kind": "rnn"}}, "model.kind"),
        ({"model": {"kind": "cnn"}}, "model.channels"),
        ({"model": {"hidden": 64}}, "model.hidden"),
        ({"data": {"source": "idx"}}, "data.train_images"),
        ({"data": {"test_fraction": 0.0}}, "data.test_fraction"),
        ({"reduce": {"rel_tol": -1}}, "reduce.rel_tol"),
        ({"reduce": {"abs_tol": 0}}, "reduce.abs_tol"),
        ({"model": {"residual": "yes"}}, "model.residual"),
        ({"model": {"kind": "cnn", "channels": [4], "residual": True}}, "model.residual"),
        ({"prune": {"plain_layer_floor": -2}}, "prune.plain_layer_floor"),
        ({"entropy_split": "validation"}, "entropy_split"),
        ({"workers": 0}, "workers"),
        ({"seed": -1}, "seed"),
        ({"bogus": 1}, "bogus"),
        ({"train": []}, "train"),
    ],
)
def test_invalid_values_name_the_field(doc, field):
    assert field_of(json.dumps(doc)) == field


def test_invalid_json():
    assert field_of("{not json") == "<root>"
    assert field_of("[1, 2]") == "<root>"


def test_error_message_names_the_field():
    with pytest.raises(ConfigError, match=r"prune\.zeta: must lie in \(0, 1\)"):
        parse_config('{"prune": {"zeta": 2}}')


def test_load_config_resolves_relative_paths(tmp_path):
    text = '{"data": {"source": "idx", "train_images": "imgs.idx", "train_labels": "labs.idx"}}'
    path = tmp_path / "exp.json"
    path.write_text(text, encoding="utf-8")
    cfg = load_config(path)
    assert cfg.raw_text == text
    assert cfg.resolve(cfg.data.train_images) == tmp_path.resolve() / "imgs.idx"
    assert cfg.resolve(str(tmp_path / "abs.idx")) == tmp_path / "abs.idx"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(tmp_path / "nope.json")
    assert info.value.field == "<file>"


def test_overrides_keep_the_snapshot():
    cfg = parse_config('{"seed": 1, "prune": {"zeta": 0.25}}')
    changed = cfg.with_overrides(seed=7, mode="vanilla")
    assert changed.seed == 7
    assert changed.prune.mode is PruneMode.VANILLA
    assert changed.prune.zeta == 0.25
    assert changed.raw_text == cfg.raw_text
    assert cfg.seed == 1 and cfg.prune.mode is PruneMode.EGP
    with pytest.raises(ConfigError, match="prune.mode"):
        cfg.with_overrides(mode="random")


def test_experiment_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.workers == 1
    assert cfg.reduce.rel_tol == 1e-6
