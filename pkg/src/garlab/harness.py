"""Round-based training loop with Byzantine nodes, plus a grid runner.

Each round: every honest node computes a minibatch gradient of the shared
model on its own shard; the adversary sees those gradients and fabricates
the f Byzantine reports (which occupy the last f node indices; those nodes'
shards sit idle); the aggregation rule reduces all n reports; the server
applies a single optimizer step. Test accuracy over the union of all shard
test splits is recorded every ``eval_every`` rounds and at the end.

With ``attack.strategy == "none"`` every node behaves honestly, which is the
baseline the grid runner compares attacked runs against. Runs are bit-
reproducible: the same config and seed always produce the same records.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import attack as attack_mod
from . import gar as gar_mod
from . import learner
from .errors import ConfigError, GarlabError, InfeasibleError


@dataclass(frozen=True)
class SyntheticSpec:
    """Synthetic Gaussian-blob dataset parameters."""
    num_classes: int = 10
    per_class: int = 150
    input_dim: int = 16
    separation: float = 4.0
    spread: float = 1.0


@dataclass(frozen=True)
class MnistSpec:
    """IDX image/label file pair, optionally truncated to the first ``limit``."""
    image_path: str
    label_path: str
    limit: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run."""
    n: int
    f: int
    gar: gar_mod.GarSpec
    attack: attack_mod.AttackSpec = field(default_factory=attack_mod.AttackSpec)
    dataset: SyntheticSpec | MnistSpec = field(default_factory=SyntheticSpec)
    optimizer: learner.OptimizerState = field(
        default_factory=lambda: learner.OptimizerState("adam"))
    epochs: int = 3
    batch_size: int = 8
    hidden_dim: int = 32
    seed: int = 0
    eval_every: int = 10
    test_fraction: float = 0.2
    num_shards: int | None = None  # None -> one shard per node

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n: must be >= 1, got {self.n}")
        if not 0 <= self.f < self.n:
            raise ConfigError(f"f: must satisfy 0 <= f < n, got f={self.f}, n={self.n}")
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size: must be >= 1, got {self.batch_size}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim: must be >= 1, got {self.hidden_dim}")
        if self.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {self.seed}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every: must be >= 1, got {self.eval_every}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError(
                f"test_fraction: must lie in [0, 1), got {self.test_fraction}")
        if self.num_shards is not None and self.num_shards < self.n:
            raise ConfigError(
                f"num_shards: must be >= n, got {self.num_shards} < {self.n}")
        for problem in gar_mod.feasibility_errors(self.gar, self.n):
            warnings.warn(problem, stacklevel=2)
        if self.effective_shards != self.n:
            warnings.warn(
                f"num_shards={self.effective_shards} differs from n={self.n}; "
                f"the extra shards stay idle", stacklevel=2)

    @property
    def effective_shards(self) -> int:
        return self.n if self.num_shards is None else self.num_shards


@dataclass(frozen=True)
class RoundRecord:
    """One aggregation round, as written to the metrics CSV."""
    round: int
    epoch: int
    train_loss: float
    test_accuracy: float | None
    selected_indices: tuple[int, ...]
    byzantine_selected: bool
    aggregate_norm: float


def load_dataset(source: SyntheticSpec | MnistSpec, seed: int) -> learner.Dataset:
    if isinstance(source, SyntheticSpec):
        return learner.make_synthetic(source.num_classes, source.per_class,
                                      source.input_dim, seed,
                                      separation=source.separation,
                                      spread=source.spread)
    dataset = learner.load_mnist(source.image_path, source.label_path)
    if source.limit is not None:
        limit = min(source.limit, len(dataset))
        dataset = dataset.take(np.arange(limit))
    return dataset


def dataset_facts(source: SyntheticSpec | MnistSpec) -> tuple[int, int]:
    """(example count, input dimension) without materializing features."""
    if isinstance(source, SyntheticSpec):
        return source.num_classes * source.per_class, source.input_dim
    count, dim, _ = learner.idx_header_counts(source.image_path, source.label_path)
    if source.limit is not None:
        count = min(count, source.limit)
    return count, dim


def validate_experiment(config: ExperimentConfig) -> list[str]:
    """Every reason ``run_experiment`` would refuse this config; empty if none."""
    problems = list(gar_mod.feasibility_errors(config.gar, config.n))
    try:
        count, dim = dataset_facts(config.dataset)
    except (OSError, GarlabError) as exc:
        problems.append(f"dataset: {exc}")
        return problems
    if count < config.effective_shards:
        problems.append(
            f"dataset has {count} examples, fewer than "
            f"{config.effective_shards} shards")
    else:
        smallest = count // config.effective_shards
        if smallest - int(smallest * config.test_fraction + 0.5) < 1:
            problems.append(
                f"shards of {smallest} examples leave no training data at "
                f"test_fraction {config.test_fraction}")
    if config.attack.strategy == "limited_norm":
        model_dim = learner.param_count(dim, config.hidden_dim,
                                        _num_classes(config))
        if config.attack.target_dim >= model_dim:
            problems.append(
                f"attack.target_dim {config.attack.target_dim} out of range "
                f"for {model_dim} model parameters")
    return problems


def _num_classes(config: ExperimentConfig) -> int:
    if isinstance(config.dataset, SyntheticSpec):
        return config.dataset.num_classes
    return 10


def _epoch_batches(train_size: int, batch_size: int, seed: int, node: int,
                   epoch: int) -> list[np.ndarray]:
    """Minibatch index blocks for one node's pass over its shard."""
    perm = np.random.default_rng([seed, node, epoch]).permutation(train_size)
    return [perm[start:start + batch_size]
            for start in range(0, train_size, batch_size)]


def pooled_test_set(shards: list[learner.Shard]) -> learner.Dataset | None:
    """Union of every shard's test split; None when all test splits are empty."""
    parts = [shard.test for shard in shards if len(shard.test)]
    if not parts:
        return None
    features = np.concatenate([part.features for part in parts], axis=0)
    labels = np.concatenate([part.labels for part in parts], axis=0)
    return learner.Dataset(features, labels, parts[0].num_classes)


def run_experiment(config: ExperimentConfig) -> list[RoundRecord]:
    """Run the full round loop; returns one record per aggregation round."""
    problems = validate_experiment(config)
    if problems:
        raise InfeasibleError("; ".join(problems))

    dataset = load_dataset(config.dataset, config.seed)
    shards = learner.partition(dataset, config.effective_shards,
                               test_fraction=config.test_fraction,
                               seed=config.seed)
    test_set = pooled_test_set(shards)
    params = learner.init_params(dataset.input_dim, config.hidden_dim,
                                 dataset.num_classes, config.seed)
    opt_state = config.optimizer

    # Byzantine nodes are the last f indices and contribute no data. With no
    # attack configured every node is honest.
    f_active = config.f if config.attack.strategy != "none" else 0
    honest = list(range(config.n - f_active))

    batch_counts = [max(1, -(-len(shards[node].train) // config.batch_size))
                    for node in honest]
    rounds_per_epoch = max(batch_counts)
    total_rounds = config.epochs * rounds_per_epoch

    records: list[RoundRecord] = []
    round_index = 0
    for epoch in range(config.epochs):
        schedules = [_epoch_batches(len(shards[node].train), config.batch_size,
                                    config.seed, node, epoch)
                     for node in honest]
        for step in range(rounds_per_epoch):
            gradients = []
            losses = []
            for pos, node in enumerate(honest):
                batches = schedules[pos]
                batch = shards[node].train.take(batches[step % len(batches)])
                loss, _, grad = learner.loss_and_grad(params, batch)
                gradients.append(grad)
                losses.append(loss)
            view = attack_mod.AdversaryView(tuple(gradients), round_index,
                                            config.seed)
            malicious = attack_mod.generate_malicious(view, config.attack,
                                                      f_active)
            reports = gradients + malicious
            outcome = gar_mod.aggregate(config.gar, reports)
            new_flat, opt_state = learner.optimizer_step(opt_state, params.flat,
                                                         outcome.aggregate)
            params = params.with_flat(new_flat)

            last_round = round_index == total_rounds - 1
            accuracy = None
            if test_set is not None and ((round_index + 1) % config.eval_every == 0
                                         or last_round):
                accuracy = learner.evaluate(params, test_set)[1]
            records.append(RoundRecord(
                round=round_index,
                epoch=epoch,
                train_loss=sum(losses) / len(losses),
                test_accuracy=accuracy,
                selected_indices=outcome.selected_indices,
                byzantine_selected=any(i >= config.n - config.f
                                       for i in outcome.selected_indices),
                aggregate_norm=float(np.linalg.norm(outcome.aggregate)),
            ))
            round_index += 1
    return records


def final_accuracy(records: list[RoundRecord]) -> float | None:
    """Last recorded test accuracy, if the run evaluated at all."""
    for record in reversed(records):
        if record.test_accuracy is not None:
            return record.test_accuracy
    return None


@dataclass
class GridRow:
    """One grid run plus its accuracy drop against the matching baseline."""
    gar_rule: str
    attack_strategy: str
    seed: int
    n: int
    f: int
    final_accuracy: float | None = None
    drop: float | None = None
    error: str | None = None
    records: list[RoundRecord] = field(default_factory=list, repr=False)


def _baseline_key(config: ExperimentConfig) -> tuple:
    return (config.gar, config.seed, config.n, config.f, config.dataset,
            config.epochs, config.batch_size, config.hidden_dim)


def run_grid(configs: list[ExperimentConfig]) -> list[GridRow]:
    """Run every config; a failure is recorded on its row and the grid continues.

    Rows with an attack get ``drop`` = baseline accuracy - attacked accuracy,
    where the baseline is the no-attack run with the same rule, seed, and
    data settings. Baselines themselves have drop 0 by construction.
    """
    rows = []
    baselines: dict[tuple, float | None] = {}
    for config in configs:
        row = GridRow(gar_rule=config.gar.rule,
                      attack_strategy=config.attack.strategy,
                      seed=config.seed, n=config.n, f=config.f)
        try:
            row.records = run_experiment(config)
            row.final_accuracy = final_accuracy(row.records)
        except (GarlabError, OSError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
        if (row.error is None and config.attack.strategy == "none"):
            baselines[_baseline_key(config)] = row.final_accuracy
    for config, row in zip(configs, rows):
        if row.error is not None or row.final_accuracy is None:
            continue
        if config.attack.strategy == "none":
            row.drop = 0.0
            continue
        base = baselines.get(_baseline_key(config))
        if base is not None:
            row.drop = base - row.final_accuracy
    return rows
