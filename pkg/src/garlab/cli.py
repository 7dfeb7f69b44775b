"""Command-line front end: run, grid, validate, oracle.

Configs come from a TOML file, with flags overriding individual fields.
Outputs are deterministic byte-for-byte given the same config and seed:
metrics CSVs print reals at 9 significant digits, JSON files sort their
keys, and only the manifest carries timestamps.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, gar, harness, learner, oracle
from .attack import STRATEGIES, AttackSpec
from .errors import ConfigError, GarlabError
from .harness import ExperimentConfig, MnistSpec, RoundRecord, SyntheticSpec

CSV_HEADER = ["round", "epoch", "train_loss", "test_accuracy",
              "selected_indices", "byzantine_selected", "aggregate_norm"]

MNIST_IMAGE_FILE = "train-images-idx3-ubyte"
MNIST_LABEL_FILE = "train-labels-idx1-ubyte"
MNIST_DIR_ENV = "GARLAB_MNIST_DIR"


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


def emit_csv(records: list[RoundRecord], path) -> None:
    """Write round records; reals at 9 significant digits, indices ';'-joined."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow([
                rec.round,
                rec.epoch,
                _fmt(rec.train_loss),
                "" if rec.test_accuracy is None else _fmt(rec.test_accuracy),
                ";".join(str(i) for i in rec.selected_indices),
                "true" if rec.byzantine_selected else "false",
                _fmt(rec.aggregate_norm),
            ])


def read_csv(path) -> list[RoundRecord]:
    """Parse a metrics CSV back into records (inverse of emit_csv)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected CSV header {header}")
        for row in reader:
            records.append(RoundRecord(
                round=int(row[0]),
                epoch=int(row[1]),
                train_loss=float(row[2]),
                test_accuracy=None if row[3] == "" else float(row[3]),
                selected_indices=tuple(int(tok) for tok in row[4].split(";")
                                       if tok != ""),
                byzantine_selected=row[5] == "true",
                aggregate_norm=float(row[6]),
            ))
    return records


def emit_plot_data(rows: list[harness.GridRow], out_dir) -> list[Path]:
    """Accuracy-vs-round series per (gar, attack) pair plus a drop table.

    Series average test accuracy across seeds at each evaluated round; the
    drop table averages final accuracy and drop the same way.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple[str, str], list[harness.GridRow]] = {}
    for row in rows:
        if row.error is None:
            groups.setdefault((row.gar_rule, row.attack_strategy), []).append(row)
    written = []
    for (rule, strategy), members in sorted(groups.items()):
        points: dict[int, list[float]] = {}
        for member in members:
            for rec in member.records:
                if rec.test_accuracy is not None:
                    points.setdefault(rec.round, []).append(rec.test_accuracy)
        path = out_dir / f"series_{rule}_{strategy}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["round", "test_accuracy"])
            for rnd in sorted(points):
                values = points[rnd]
                writer.writerow([rnd, _fmt(sum(values) / len(values))])
        written.append(path)
    table = out_dir / "drops.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gar", "attack", "seeds", "final_accuracy", "drop"])
        for (rule, strategy), members in sorted(groups.items()):
            accs = [m.final_accuracy for m in members if m.final_accuracy is not None]
            drops = [m.drop for m in members if m.drop is not None]
            writer.writerow([
                rule, strategy, len(members),
                _fmt(sum(accs) / len(accs)) if accs else "",
                _fmt(sum(drops) / len(drops)) if drops else "",
            ])
    written.append(table)
    return written


# --- config resolution -----------------------------------------------------


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a table, got {type(value).__name__}")
    return value


def _mnist_paths(dataset_cfg: dict, mnist_dir: str | None) -> tuple[str, str]:
    if "image_path" in dataset_cfg or "label_path" in dataset_cfg:
        try:
            return str(dataset_cfg["image_path"]), str(dataset_cfg["label_path"])
        except KeyError as exc:
            raise ConfigError(
                "dataset: image_path and label_path must be set together") from exc
    directory = mnist_dir or dataset_cfg.get("dir") or os.environ.get(MNIST_DIR_ENV)
    if not directory:
        raise ConfigError(
            f"dataset: no MNIST location; set --mnist-dir, dataset.dir, or "
            f"${MNIST_DIR_ENV}")
    return (str(Path(directory) / MNIST_IMAGE_FILE),
            str(Path(directory) / MNIST_LABEL_FILE))


def _build_dataset(dataset_cfg: dict, kind: str | None,
                   mnist_dir: str | None) -> SyntheticSpec | MnistSpec:
    kind = kind or dataset_cfg.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticSpec(
            num_classes=int(dataset_cfg.get("num_classes", 10)),
            per_class=int(dataset_cfg.get("per_class", 150)),
            input_dim=int(dataset_cfg.get("input_dim", 16)),
            separation=float(dataset_cfg.get("separation", 4.0)),
            spread=float(dataset_cfg.get("spread", 1.0)))
    if kind == "mnist":
        image_path, label_path = _mnist_paths(dataset_cfg, mnist_dir)
        limit = dataset_cfg.get("limit")
        return MnistSpec(image_path, label_path,
                         limit=None if limit is None else int(limit))
    raise ConfigError(f"dataset.kind: unknown kind {kind!r} "
                      f"(choose from synthetic, mnist)")


def _build_gar(gar_cfg: dict, f: int, rule: str | None = None) -> gar.GarSpec:
    return gar.GarSpec(
        rule=rule or gar_cfg.get("rule", "mean"),
        f=f,
        cluster_count=int(gar_cfg.get("cluster_count", gar.DEFAULT_CLUSTER_COUNT)))


def _build_attack(attack_cfg: dict, strategy: str | None = None) -> AttackSpec:
    epsilon = attack_cfg.get("epsilon")
    return AttackSpec(
        strategy=strategy or attack_cfg.get("strategy", "none"),
        epsilon=None if epsilon is None else float(epsilon),
        target_dim=int(attack_cfg.get("target_dim", 0)),
        c=float(attack_cfg.get("c", 1.0)),
        reference=attack_cfg.get("reference", "geomedian_medoid"))


def resolve_config(args, gar_rule: str | None = None,
                   attack_strategy: str | None = None) -> ExperimentConfig:
    """Merge the TOML config (if any) with command-line overrides."""
    data = load_config_file(args.config) if args.config else {}
    exp = _section(data, "experiment")
    opt = _section(data, "optimizer")
    n = args.n if args.n is not None else int(exp.get("n", 7))
    f = args.f if args.f is not None else int(exp.get("f", 2))
    return ExperimentConfig(
        n=n,
        f=f,
        gar=_build_gar(_section(data, "gar"), f, rule=gar_rule),
        attack=_build_attack(_section(data, "attack"), strategy=attack_strategy),
        dataset=_build_dataset(_section(data, "dataset"), args.dataset,
                               args.mnist_dir),
        optimizer=learner.OptimizerState(
            variant=opt.get("variant", "adam"),
            learning_rate=float(opt.get("learning_rate",
                                        learner.DEFAULT_LEARNING_RATE))),
        epochs=args.epochs if args.epochs is not None else int(exp.get("epochs", 3)),
        batch_size=int(exp.get("batch_size", 8)),
        hidden_dim=int(exp.get("hidden_dim", 32)),
        seed=args.seed if args.seed is not None else int(exp.get("seed", 0)),
        eval_every=int(exp.get("eval_every", 10)),
        test_fraction=float(exp.get("test_fraction", 0.2)),
        num_shards=(int(exp["num_shards"]) if "num_shards" in exp else None),
    )


def config_snapshot(config: ExperimentConfig) -> dict:
    snap = dataclasses.asdict(config)
    snap["dataset"]["kind"] = ("synthetic" if isinstance(config.dataset,
                                                         SyntheticSpec) else "mnist")
    # moment arrays never belong in a manifest; the template is all that matters
    snap["optimizer"].pop("m", None)
    snap["optimizer"].pop("v", None)
    return snap


def write_json(payload: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out_dir: Path, config_snaps: list[dict], outputs: list[str],
                   started: float, finished: float) -> None:
    write_json({
        "artifact_version": __version__,
        "configs": config_snaps,
        "outputs": sorted(outputs),
        "started_unix": started,
        "finished_unix": finished,
    }, out_dir / "manifest.json")


# --- subcommands -------------------------------------------------------------


def cmd_run(args) -> int:
    started = time.time()
    config = resolve_config(args)
    problems = harness.validate_experiment(config)
    if problems:
        for problem in problems:
            print(f"invalid config: {problem}", file=sys.stderr)
        return 1
    records = harness.run_experiment(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_csv(records, out_dir / "metrics.csv")
    acc = harness.final_accuracy(records)
    summary = {
        "final_accuracy": acc,
        "final_train_loss": records[-1].train_loss if records else None,
        "rounds": len(records),
        "byzantine_selected_rounds": sum(r.byzantine_selected for r in records),
        "config": config_snapshot(config),
    }
    write_json(summary, out_dir / "summary.json")
    write_manifest(out_dir, [summary["config"]],
                   ["metrics.csv", "summary.json"], started, time.time())
    print(f"run complete: {len(records)} rounds, "
          f"final accuracy {'n/a' if acc is None else _fmt(acc)} -> {out_dir}")
    return 0


def _parse_names(raw: str, universe, what: str) -> list[str]:
    names = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not names:
        raise ConfigError(f"{what}: empty list")
    out = []
    for name in names:
        canonical = gar.canonical_rule(name) if what == "--gars" else name
        if canonical not in universe:
            raise ConfigError(f"{what}: unknown entry {name!r}")
        out.append(canonical)
    return out


def cmd_grid(args) -> int:
    started = time.time()
    rules = _parse_names(args.gars, gar.RULES, "--gars")
    strategies = _parse_names(args.attacks, STRATEGIES, "--attacks")
    configs = [resolve_config(args, gar_rule=rule, attack_strategy=strategy)
               for rule in rules for strategy in strategies]
    rows = harness.run_grid(configs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_dir = out_dir / "runs"
    runs_dir.mkdir(exist_ok=True)
    outputs = ["summary.json"]
    for row in rows:
        if row.error is None:
            name = f"{row.gar_rule}_{row.attack_strategy}_seed{row.seed}.csv"
            emit_csv(row.records, runs_dir / name)
            outputs.append(f"runs/{name}")
    for path in emit_plot_data(rows, out_dir):
        outputs.append(path.name)
    write_json({
        "rows": [{
            "gar": row.gar_rule,
            "attack": row.attack_strategy,
            "seed": row.seed,
            "n": row.n,
            "f": row.f,
            "final_accuracy": row.final_accuracy,
            "drop": row.drop,
            "error": row.error,
        } for row in rows],
    }, out_dir / "summary.json")
    write_manifest(out_dir, [config_snapshot(cfg) for cfg in configs],
                   outputs, started, time.time())
    failures = sum(row.error is not None for row in rows)
    print(f"grid complete: {len(rows)} runs ({failures} failed) -> {out_dir}")
    return 0


def cmd_validate(args) -> int:
    config = resolve_config(args)
    problems = harness.validate_experiment(config)
    if problems:
        for problem in problems:
            print(f"invalid: {problem}", file=sys.stderr)
        return 1
    print("config ok")
    return 0


def cmd_oracle(args) -> int:
    all_ok, lines, elapsed = oracle.run_suite(trials=args.trials, seed=args.seed or 0)
    for line in lines:
        print(line)
    print(f"oracle suite finished in {elapsed:.2f}s")
    return 0 if all_ok else 1


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--seed", type=int, help="override the experiment seed")
    parser.add_argument("--dataset", choices=["mnist", "synthetic"],
                        help="override the dataset kind")
    parser.add_argument("--mnist-dir",
                        help=f"directory holding {MNIST_IMAGE_FILE} and "
                             f"{MNIST_LABEL_FILE} (or ${MNIST_DIR_ENV})")
    parser.add_argument("--epochs", type=int, help="override epoch count")
    parser.add_argument("--n", type=int, help="override node count")
    parser.add_argument("--f", type=int, help="override Byzantine count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="garlab",
        description="Byzantine gradient-aggregation experiments at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _add_common(run)
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(func=cmd_run)

    grid = sub.add_parser("grid", help="run a gar x attack grid")
    _add_common(grid)
    grid.add_argument("--out", required=True, help="output directory")
    grid.add_argument("--gars", default="mean,krum,median",
                      help="comma-separated aggregation rules")
    grid.add_argument("--attacks", default="none,seesaw,limited_norm",
                      help="comma-separated attack strategies")
    grid.set_defaults(func=cmd_grid)

    validate = sub.add_parser("validate", help="check a config without running")
    _add_common(validate)
    validate.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle",
                         help="compare the fast rules against brute-force references")
    orc.add_argument("--trials", type=int, default=1000)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GarlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
