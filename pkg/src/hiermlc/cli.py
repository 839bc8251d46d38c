"""Command-line entry point: gen, train, predict, eval.

Every run is driven by a JSON config file; ``--seed``, ``--out``,
``--mode`` and ``--policy`` override the matching config keys.  The
effective config is snapshotted into the output directory, and all
outputs are deterministic given config plus seed: reruns produce
byte-identical files.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure during training.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation as eval_mod
from .config import (
    RunConfig,
    load_config,
    snapshot_config,
    synthetic_spec_theta,
)
from .data import Dataset, SyntheticSpec, generate_synthetic, inject_uncertainty
from .errors import ConfigError, DataFormatError, NumericError
from .hierarchy import LabelTree, propagate
from .model import Mlp, load_checkpoint, save_checkpoint
from .pipeline import (
    EnsembleModel,
    TrainPlan,
    predict_unconditional,
    train_ensemble,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems follow the exit-code contract
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hiermlc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="run config JSON file")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--out", help="override output directory")
        p.add_argument(
            "--mode", choices=("conditional", "flat"), help="override training mode"
        )
        p.add_argument(
            "--policy",
            choices=("ignore", "ones", "zeros", "ones-lsr", "zeros-lsr"),
            help="override uncertainty policy",
        )
        if name == "eval":
            p.add_argument(
                "--predictions",
                help="evaluate this predictions CSV instead of running the ensemble",
            )
    return parser


def _effective_config(args) -> RunConfig:
    config = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = args.out
    if args.mode is not None:
        updates["mode"] = args.mode
    if args.policy is not None:
        updates["policy_name"] = args.policy
    return replace(config, **updates) if updates else config


def _out_dir(config: RunConfig, create: bool = True) -> Path:
    out = Path(config.out)
    if create:
        out.mkdir(parents=True, exist_ok=True)
    return out


def _data_dir(config: RunConfig) -> Path:
    return _out_dir(config, create=False) / "data"


def _synthetic_spec(config: RunConfig, tree: LabelTree) -> SyntheticSpec:
    syn = config.synthetic
    assert syn is not None
    theta = synthetic_spec_theta(syn, tree)
    return SyntheticSpec(
        tree=tree,
        theta=theta,
        feature_noise=syn.feature_noise,
        feature_dim=syn.feature_dim,
    )


def _generate_split(config: RunConfig, tree: LabelTree) -> tuple[Dataset, Dataset]:
    """Train/eval datasets from one generator pass, sharing feature semantics."""
    syn = config.synthetic
    assert syn is not None
    spec = _synthetic_spec(config, tree)
    full, _ = generate_synthetic(spec, syn.n_train + syn.n_eval, config.seed)
    train = full.take(np.arange(syn.n_train))
    held_out = full.take(np.arange(syn.n_train, syn.n_train + syn.n_eval))
    train = inject_uncertainty(train, syn.uncertainty_rate, config.seed)
    return train, held_out


def cmd_gen(args) -> int:
    """Write a synthetic dataset (features+labels CSV pairs) plus provenance."""
    config = _effective_config(args)
    if config.synthetic is None:
        raise ConfigError("gen requires a data.synthetic section")
    tree = config.load_tree()
    spec = _synthetic_spec(config, tree)
    train, held_out = _generate_split(config, tree)
    marginals = propagate(tree, spec.theta)

    out = _out_dir(config)
    data_dir = out / "data"
    data_dir.mkdir(exist_ok=True)
    data_mod.write_features_csv(data_dir / "train_features.csv", train.features, train.ids)
    data_mod.write_labels_csv(data_dir / "train_labels.csv", train.labels, tree, train.ids)
    data_mod.write_features_csv(
        data_dir / "eval_features.csv", held_out.features, held_out.ids
    )
    data_mod.write_labels_csv(
        data_dir / "eval_labels.csv", held_out.labels, tree, held_out.ids
    )
    syn = config.synthetic
    provenance = {
        "seed": config.seed,
        "hierarchy": config.hierarchy,
        "theta": {name: syn.theta[name] for name in tree.names},
        "feature_dim": syn.feature_dim,
        "feature_noise": syn.feature_noise,
        "n_train": syn.n_train,
        "n_eval": syn.n_eval,
        "uncertainty_rate": syn.uncertainty_rate,
        "true_marginals": {
            name: float(marginals[tree.index_of(name)]) for name in tree.names
        },
    }
    (data_dir / "provenance.json").write_text(
        json.dumps(provenance, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    snapshot_config(config, out)
    print(f"wrote {syn.n_train} train / {syn.n_eval} eval rows to {data_dir}")
    return EXIT_OK


def _load_train_dataset(config: RunConfig, tree: LabelTree) -> Dataset:
    if config.synthetic is not None:
        data_dir = _data_dir(config)
        if (data_dir / "train_labels.csv").exists():
            return data_mod.load_dataset(
                data_dir / "train_features.csv", data_dir / "train_labels.csv", tree
            )
        train, _ = _generate_split(config, tree)
        return train
    csv_cfg = config.csv_data
    assert csv_cfg is not None
    if not Path(csv_cfg.train_labels).exists():
        raise ConfigError(f"training labels file not found: {csv_cfg.train_labels}")
    if csv_cfg.train_features is not None:
        return data_mod.load_dataset(csv_cfg.train_features, csv_cfg.train_labels, tree)
    return data_mod.load_csv(
        csv_cfg.train_labels, tree, config.missing_as_negative
    )


def _load_eval_dataset(config: RunConfig, tree: LabelTree) -> Dataset:
    if config.synthetic is not None:
        data_dir = _data_dir(config)
        if (data_dir / "eval_labels.csv").exists():
            return data_mod.load_dataset(
                data_dir / "eval_features.csv", data_dir / "eval_labels.csv", tree
            )
        _, held_out = _generate_split(config, tree)
        return held_out
    csv_cfg = config.csv_data
    assert csv_cfg is not None
    if not Path(csv_cfg.eval_labels).exists():
        raise ConfigError(f"eval labels file not found: {csv_cfg.eval_labels}")
    if csv_cfg.eval_features is not None:
        return data_mod.load_dataset(csv_cfg.eval_features, csv_cfg.eval_labels, tree)
    return data_mod.load_csv(csv_cfg.eval_labels, tree, config.missing_as_negative)


def cmd_train(args) -> int:
    """Train the ensemble (two-stage conditional or flat) and write checkpoints."""
    config = _effective_config(args)
    tree = config.load_tree()  # validate inputs before any writes
    dataset = _load_train_dataset(config, tree)
    plan = TrainPlan(
        policy=config.policy(),
        optimizer=replace(
            config.optimizer,
            iterations=config.stage1_iterations + config.stage2_iterations,
        ),
        stage1_iterations=config.stage1_iterations,
        stage2_iterations=config.stage2_iterations,
        conditional=config.mode == "conditional",
    )
    members = train_ensemble(
        dataset,
        tree,
        plan,
        config.hidden_sizes,
        config.seed,
        config.ensemble_size,
        config.workers,
    )

    out = _out_dir(config)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for i, member in enumerate(members):
        meta = {"member": i, "seed": member.seed, "mode": config.mode}
        if member.stage1 is not None:
            save_checkpoint(
                ckpt_dir / f"member{i:02d}_stage1.json",
                member.stage1,
                extra={**meta, "stage": "stage1"},
            )
        save_checkpoint(
            ckpt_dir / f"member{i:02d}_final.json",
            member.final,
            extra={**meta, "stage": "final"},
        )
    with (out / "loss_log.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["member", "stage", "epoch", "mean_loss"])
        for i, member in enumerate(members):
            for stage, epoch, loss in member.loss_log:
                writer.writerow([i, stage, epoch, repr(loss)])
    snapshot_config(config, out)
    print(f"trained {len(members)} member(s); checkpoints in {ckpt_dir}")
    return EXIT_OK


def _load_ensemble(config: RunConfig) -> EnsembleModel:
    ckpt_dir = _out_dir(config, create=False) / "checkpoints"
    paths = sorted(ckpt_dir.glob("member*_final.json"))
    if not paths:
        raise ConfigError(f"no final checkpoints under {ckpt_dir}; run train first")
    members: list[Mlp] = []
    for path in paths:
        model, _, _ = load_checkpoint(path)
        members.append(model)
    return EnsembleModel(members)


def cmd_predict(args) -> int:
    """Write unconditional ensemble predictions for the eval rows."""
    config = _effective_config(args)
    tree = config.load_tree()
    ensemble = _load_ensemble(config)
    dataset = _load_eval_dataset(config, tree)
    probs = predict_unconditional(ensemble, tree, dataset.features)
    out = _out_dir(config)
    eval_mod.write_predictions_csv(
        out / "predictions.csv", dataset.ids, probs, tree.names
    )
    print(f"wrote predictions for {dataset.n} rows to {out / 'predictions.csv'}")
    return EXIT_OK


def _binary_ground_truth(dataset: Dataset, tree: LabelTree) -> np.ndarray:
    labels = dataset.labels
    bad = ~np.isin(labels, (data_mod.POS, data_mod.NEG))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(
            f"ground truth must be binary; row {dataset.ids[row]!r} label "
            f"{tree.names[col]!r} is not 1.0/0.0"
        )
    return (labels == data_mod.POS).astype(np.int64)


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def cmd_eval(args) -> int:
    """ROC/AUC report with optional reader operating-point comparison."""
    config = _effective_config(args)
    tree = config.load_tree()
    dataset = _load_eval_dataset(config, tree)
    truth = _binary_ground_truth(dataset, tree)

    if getattr(args, "predictions", None):
        ids, probs, names = eval_mod.load_predictions_csv(args.predictions)
        missing = [n for n in tree.names if n not in names]
        if missing:
            raise DataFormatError(
                f"predictions file lacks label column(s) {missing}"
            )
        if ids != dataset.ids:
            raise DataFormatError(
                "predictions row ids do not match the eval dataset"
            )
        cols = [names.index(n) for n in tree.names]
        probs = probs[:, cols]
    else:
        ensemble = _load_ensemble(config)
        probs = predict_unconditional(ensemble, tree, dataset.features)

    points = (
        eval_mod.load_operating_points(config.reader_points)
        if config.reader_points
        else {}
    )
    scores_by_label = {name: probs[:, tree.index_of(name)] for name in tree.names}
    truth_by_label = {name: truth[:, tree.index_of(name)] for name in tree.names}
    try:
        report = eval_mod.reader_study(
            scores_by_label, truth_by_label, points, config.eval_subset
        )
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc

    out = _out_dir(config)
    eval_mod.write_predictions_csv(out / "predictions.csv", dataset.ids, probs, tree.names)
    eval_mod.write_report(report, out / "report.txt", out / "report.csv")
    for name in tree.names:
        curve = eval_mod.roc_curve(scores_by_label[name], truth_by_label[name])
        eval_mod.write_roc_points_csv(out / f"roc_{_safe_name(name)}.csv", curve)
    snapshot_config(config, out)
    print(
        f"mean_auc_selected={report.mean_auc_selected:.6f} "
        f"mean_readers_below={report.mean_readers_below:.6f} -> {out / 'report.txt'}"
    )
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
