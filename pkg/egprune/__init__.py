"""
EGPrune: entropy guided pruning and depth reduction for small ReLU networks.

Modules:
- network / layers: A deterministic numpy engine with dense and conv layers.
- entropy: ON/OFF activation statistics and per-neuron entropies.
- egp: The entropy guided iterative magnitude pruning loop.
- depth_reduce: Drop dead neurons, fuse linear layers, verify equivalence.
- data, config, report, cli: Datasets, experiment configs, records and charts.

See the documentation for details and examples.
"""

__version__ = "0.1.0"
__author__ = "E. Tyler Carr"
__email__ = "carret1268@gmail.com"
__license__ = "CC0 1.0 Universal"

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, batches, load_idx, make_blobs
from .depth_reduce import (
    FusionPlan,
    apply_plan,
    drop_neuron,
    fuse_dense,
    plan_reduction,
    verify_equivalence,
)
from .egp import PruneBudget, PruneConfig, PruneMode, allocate_budgets, egp_iterate
from .entropy import (
    ActivationStats,
    EntropyReport,
    NeuronState,
    classify_states,
    collect_stats,
    neuron_entropy,
)
from .layers import LayerSpec
from .network import Network, build_cnn, build_mlp
from .training import TrainConfig, evaluate, train

__all__ = [
    "ActivationStats",
    "Dataset",
    "EntropyReport",
    "FusionPlan",
    "LayerSpec",
    "Network",
    "NeuronState",
    "PruneBudget",
    "PruneConfig",
    "PruneMode",
    "TrainConfig",
    "allocate_budgets",
    "apply_plan",
    "batches",
    "build_cnn",
    "build_mlp",
    "classify_states",
    "collect_stats",
    "drop_neuron",
    "egp_iterate",
    "evaluate",
    "fuse_dense",
    "load_checkpoint",
    "load_idx",
    "make_blobs",
    "neuron_entropy",
    "plan_reduction",
    "save_checkpoint",
    "train",
    "verify_equivalence",
]

import logging

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())
