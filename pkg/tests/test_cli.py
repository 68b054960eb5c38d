import json

import matplotlib

matplotlib.use("Agg")

from click.testing import CliRunner  # noqa: E402
import pytest  # noqa: E402

from egprune import depth_reduce  # noqa: E402
from egprune.cli import cli  # noqa: E402
from egprune.depth_reduce import Verification  # noqa: E402

CONFIG = {
    "seed": 0,
    "model": {"kind": "mlp", "hidden": [16, 16]},
    "data": {"source": "blobs", "n_per_class": 20, "num_classes": 3, "dim": 8, "spread": 0.5},
    "train": {"epochs": 3, "batch_size": 16},
    "prune": {"zeta": 0.5, "iterations": 2, "finetune": {"epochs": 1}},
}


def write_config(directory, **changes):
    doc = json.loads(json.dumps(CONFIG))
    for section, values in changes.items():
        doc[section].update(values)
    path = directory / "exp.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def invoke(*args):
    result = CliRunner().invoke(cli, [str(a) for a in args])
    return result


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root)
    result = invoke("train", "--config", config, "--out", root / "dense")
    assert result.exit_code == 0, result.output
    return root, config


@pytest.fixture(scope="module")
def pruned(trained):
    root, config = trained
    result = invoke(
        "prune", "--config", config, "--checkpoint", root / "dense" / "checkpoint.json",
        "--out", root / "egp",
    )
    assert result.exit_code == 0, result.output
    return root, config


def test_train_writes_outputs(trained):
    root, _ = trained
    for name in ("checkpoint.json", "train_history.csv", "train_record.json"):
        assert (root / "dense" / name).exists()
    record = json.loads((root / "dense" / "train_record.json").read_text(encoding="utf-8"))
    assert record["kind"] == "train"
    assert record["config_snapshot"] == (root / "exp.json").read_text(encoding="utf-8")


def test_train_is_deterministic(trained, tmp_path):
    root, config = trained
    result = invoke("train", "--config", config, "--out", tmp_path)
    assert result.exit_code == 0, result.output
    assert (tmp_path / "checkpoint.json").read_bytes() == (root / "dense" / "checkpoint.json").read_bytes()


def test_invalid_config_exits_with_2(tmp_path):
    config = write_config(tmp_path, prune={"zeta": 1.5})
    result = invoke("train", "--config", config, "--out", tmp_path / "out")
    assert result.exit_code == 2
    assert "prune.zeta" in result.output
    assert not (tmp_path / "out").exists()


def test_missing_option_is_a_usage_error():
    assert invoke("train").exit_code == 2


def test_prune_reaches_the_expected_sparsity(pruned):
    root, _ = pruned
    for name in ("pruned.json", "prune_log.csv", "prune_record.json"):
        assert (root / "egp" / name).exists()
    record = json.loads((root / "egp" / "prune_record.json").read_text(encoding="utf-8"))
    assert record["sparsity_pct"] == 75.0
    assert [row["iteration"] for row in record["iterations"]] == [1, 2]


def test_vanilla_mode_matches_sparsity(trained, tmp_path):
    root, config = trained
    result = invoke(
        "prune", "--config", config, "--checkpoint", root / "dense" / "checkpoint.json",
        "--out", tmp_path, "--mode", "vanilla",
    )
    assert result.exit_code == 0, result.output
    assert "Pruned (vanilla) to 75.0000% sparsity" in result.output


def test_budget_overrun_exits_with_1(trained, tmp_path):
    root, _ = trained
    config = write_config(tmp_path, prune={"budget_base": "initial", "iterations": 3})
    result = invoke(
        "prune", "--config", config, "--checkpoint", root / "dense" / "checkpoint.json",
        "--out", tmp_path / "out",
    )
    assert result.exit_code == 1
    assert "exceeds" in result.output
    assert not (tmp_path / "out" / "pruned.json").exists()


def test_reduce_reports_layers_removed(pruned):
    root, config = pruned
    result = invoke(
        "reduce", "--config", config, "--checkpoint", root / "egp" / "pruned.json",
        "--out", root / "egp",
    )
    assert result.exit_code == 0, result.output
    assert "Layers removed:" in result.output
    for name in ("reduced.json", "fusion_plan.json", "reduce_record.json"):
        assert (root / "egp" / name).exists()
    plan = json.loads((root / "egp" / "fusion_plan.json").read_text(encoding="utf-8"))
    assert plan["rejected"] is False
    assert plan["verification"]["max_rel_diff"] <= 1e-6


def test_rejected_reduction_exits_with_1(pruned, tmp_path, monkeypatch):
    root, config = pruned

    def drifting(net_a, net_b, probes):
        return Verification(max_abs_diff=1.0, max_rel_diff=1.0, n_probe_inputs=len(probes))

    monkeypatch.setattr(depth_reduce, "verify_equivalence", drifting)
    result = invoke(
        "reduce", "--config", config, "--checkpoint", root / "egp" / "pruned.json",
        "--out", tmp_path,
    )
    assert result.exit_code == 1
    assert "Reduction rejected" in result.output
    plan = json.loads((tmp_path / "fusion_plan.json").read_text(encoding="utf-8"))
    assert plan["rejected"] is True
    assert not (tmp_path / "reduced.json").exists()


def test_scratch_report_and_analyze(pruned):
    root, config = pruned
    reduce = invoke(
        "reduce", "--config", config, "--checkpoint", root / "egp" / "pruned.json",
        "--out", root / "egp",
    )
    assert reduce.exit_code == 0, reduce.output
    scratch = invoke(
        "scratch", "--config", config, "--checkpoint", root / "egp" / "reduced.json",
        "--out", root / "scratch",
    )
    assert scratch.exit_code == 0, scratch.output
    assert (root / "scratch" / "scratch_history.csv").exists()

    records = [
        root / "dense" / "train_record.json",
        root / "egp" / "prune_record.json",
        root / "egp" / "reduce_record.json",
        root / "scratch" / "scratch_record.json",
    ]
    report = invoke("report", *records, "--out", root / "report")
    assert report.exit_code == 0, report.output
    for name in (
        "results.csv",
        "state_distribution.csv",
        "state_distribution.svg",
        "trajectory.svg",
        "ablation.csv",
    ):
        assert (root / "report" / name).exists()

    analyze = invoke(
        "analyze", "--config", config, "--checkpoint", root / "egp" / "pruned.json",
        "--out", root / "analysis", "--split", "test",
    )
    assert analyze.exit_code == 0, analyze.output
    assert "Zero-entropy layers:" in analyze.output
    for name in ("entropy.csv", "layer_summary.csv", "state_distribution.svg"):
        assert (root / "analysis" / name).exists()


def test_report_rejects_mismatched_ablation(pruned, tmp_path):
    root, config = pruned
    invoke(
        "reduce", "--config", config, "--checkpoint", root / "egp" / "pruned.json",
        "--out", root / "egp",
    )
    scratch = invoke(
        "scratch", "--config", config, "--checkpoint", root / "dense" / "checkpoint.json",
        "--out", tmp_path / "scratch",
    )
    assert scratch.exit_code == 0, scratch.output
    reduced_record = json.loads((root / "egp" / "reduce_record.json").read_text(encoding="utf-8"))
    scratch_record = json.loads((tmp_path / "scratch" / "scratch_record.json").read_text(encoding="utf-8"))
    if reduced_record["topology"] == scratch_record["topology"]:
        pytest.skip("nothing was removed, so the topologies agree")
    result = invoke(
        "report", root / "egp" / "reduce_record.json", tmp_path / "scratch" / "scratch_record.json",
        "--out", tmp_path / "report",
    )
    assert result.exit_code == 1
    assert "matching topologies" in result.output
    assert not (tmp_path / "report").exists()
