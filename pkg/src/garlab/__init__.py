"""garlab: Byzantine gradient attacks and robust aggregation, at desk scale.

The package simulates one server aggregating minibatch gradients from n
nodes, up to f of which are Byzantine. It provides seven aggregation rules,
three attack strategies (including a medoid-mimicry attack that defeats
nearest-neighbour selection rules), a clustering defense, a small MLP
learner, a deterministic experiment harness, and a CLI.
"""

__version__ = "0.1.0"

from .attack import AdversaryView, AttackSpec, generate_malicious
from .errors import (ConfigError, DatasetFormatError, DegenerateVectorError,
                     DegenerateWeightsError, DimensionMismatchError,
                     EmptySetError, GarlabError, InfeasibleError)
from .gar import AggregationOutcome, GarSpec, aggregate
from .harness import (ExperimentConfig, GridRow, MnistSpec, RoundRecord,
                      SyntheticSpec, final_accuracy, run_experiment, run_grid,
                      validate_experiment)
from .learner import (Dataset, ModelParams, OptimizerState, Shard, backward,
                      forward_loss, init_params, load_mnist, loss_and_grad,
                      make_synthetic, optimizer_step, partition)
from .vecmath import (coordinate_median, cosine_similarity, euclidean_distance,
                      geometric_median, medoid, weiszfeld)

__all__ = [
    "__version__",
    "AdversaryView", "AttackSpec", "generate_malicious",
    "GarlabError", "ConfigError", "DatasetFormatError", "DegenerateVectorError",
    "DegenerateWeightsError", "DimensionMismatchError", "EmptySetError",
    "InfeasibleError",
    "AggregationOutcome", "GarSpec", "aggregate",
    "ExperimentConfig", "GridRow", "MnistSpec", "RoundRecord", "SyntheticSpec",
    "final_accuracy", "run_experiment", "run_grid", "validate_experiment",
    "Dataset", "ModelParams", "OptimizerState", "Shard", "backward",
    "forward_loss", "init_params", "load_mnist", "loss_and_grad",
    "make_synthetic", "optimizer_step", "partition",
    "coordinate_median", "cosine_similarity", "euclidean_distance",
    "geometric_median", "medoid", "weiszfeld",
]
