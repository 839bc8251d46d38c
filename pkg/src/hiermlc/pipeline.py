"""Training orchestration: conditional two-stage runs, flat baseline,
ensembling, and the hierarchical ablation harness.

Stage 1 trains every label only on rows where all its ancestor labels
are positive (per-label loss masking), so sigmoid heads estimate
conditional probabilities.  Stage 2 freezes everything but the last
layer and retrains on the full dataset to recover unconditional parent
behaviour.  Inference multiplies conditionals down the hierarchy and
ensembles average the propagated outputs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import seeding
from .data import Dataset, conditional_mask, generate_synthetic, inject_uncertainty
from .errors import NumericError
from .hierarchy import LabelTree, propagate
from .model import (
    AdamState,
    Mlp,
    OptimizerConfig,
    adam_step,
    backward,
    freeze_all_but_last,
    lr_schedule,
    masked_bce,
)
from .policy import UncertaintyPolicy, apply_policy


@dataclass
class TrainPlan:
    """What one training run does: policy, optimizer, stage budgets."""

    policy: UncertaintyPolicy
    optimizer: OptimizerConfig
    stage1_iterations: int = 1000
    stage2_iterations: int = 500
    conditional: bool = True

    def __post_init__(self):
        if self.stage1_iterations < 0 or self.stage2_iterations < 0:
            raise ValueError("iteration counts must be >= 0")


@dataclass
class EnsembleModel:
    """Trained members sharing one output dimension."""

    members: list[Mlp]

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        k = self.members[0].output_dim
        if any(m.output_dim != k for m in self.members):
            raise ValueError("ensemble members disagree on output dimension")


def _run_training(
    model: Mlp,
    dataset: Dataset,
    targets: np.ndarray,
    mask: np.ndarray,
    optimizer: OptimizerConfig,
    iterations: int,
    stage: str,
    loss_log: list[tuple[str, int, float]] | None = None,
) -> Mlp:
    """Seed-deterministic mini-batch loop with per-epoch reshuffling.

    The learning rate and shuffle order change at epoch boundaries
    (epoch = ceil(N / batch_size) steps).  Appends (stage, epoch, mean
    step loss) rows to loss_log.
    """
    if not mask.any():
        raise ValueError(
            f"{stage}: empty effective training signal (all cells masked out)"
        )
    n = dataset.n
    features = dataset.features
    batch = optimizer.batch_size
    epoch_len = math.ceil(n / batch)
    state = AdamState.init(model)
    order = np.empty(0, dtype=np.int64)
    lr = optimizer.lr0
    epoch = -1
    epoch_losses: list[float] = []

    def flush():
        if loss_log is not None and epoch_losses:
            loss_log.append((stage, epoch, float(np.mean(epoch_losses))))

    for step in range(iterations):
        e, pos = divmod(step, epoch_len)
        if e != epoch:
            flush()
            epoch_losses.clear()
            epoch = e
            lr = lr_schedule(optimizer, e)
            # keyed by epoch only: a flat run and a staged run over the
            # same data walk identical batch sequences
            order = seeding.stream(
                seeding.PURPOSE_SHUFFLE, optimizer.seed, e
            ).permutation(n)
        rows = order[pos * batch : (pos + 1) * batch]
        x = features[rows]
        t = targets[rows]
        m = mask[rows]
        loss = masked_bce(model.forward(x), t, m)
        if not math.isfinite(loss):
            raise NumericError(f"{stage}: non-finite loss at step {step}")
        grads = backward(model, x, t, m)
        adam_step(model, state, grads, optimizer, lr)
        epoch_losses.append(loss)
    flush()
    return model


def train_stage1(
    model: Mlp,
    dataset: Dataset,
    tree: LabelTree,
    plan: TrainPlan,
    loss_log: list[tuple[str, int, float]] | None = None,
) -> Mlp:
    """Conditional pretraining: policy mask AND all-ancestors-positive mask."""
    targets, policy_mask = apply_policy(
        dataset.labels, plan.policy, plan.optimizer.seed
    )
    mask = policy_mask & conditional_mask(dataset.labels, tree)
    return _run_training(
        model, dataset, targets, mask, plan.optimizer,
        plan.stage1_iterations, "stage1", loss_log,
    )


def train_stage2(
    model: Mlp,
    dataset: Dataset,
    plan: TrainPlan,
    loss_log: list[tuple[str, int, float]] | None = None,
) -> Mlp:
    """Freeze all but the last layer, then retrain on the full dataset.

    Optimizer moments and the learning-rate schedule start fresh; hidden
    layers are bit-identical before and after.
    """
    freeze_all_but_last(model)
    targets, policy_mask = apply_policy(
        dataset.labels, plan.policy, plan.optimizer.seed
    )
    return _run_training(
        model, dataset, targets, policy_mask, plan.optimizer,
        plan.stage2_iterations, "stage2", loss_log,
    )


def train_flat(
    model: Mlp,
    dataset: Dataset,
    plan: TrainPlan,
    loss_log: list[tuple[str, int, float]] | None = None,
) -> Mlp:
    """Single-stage baseline: policy mask only, no hierarchy."""
    targets, policy_mask = apply_policy(
        dataset.labels, plan.policy, plan.optimizer.seed
    )
    return _run_training(
        model, dataset, targets, policy_mask, plan.optimizer,
        plan.optimizer.iterations, "flat", loss_log,
    )


@dataclass
class MemberResult:
    """One trained ensemble member plus its stage-1 snapshot and loss rows."""

    final: Mlp
    stage1: Mlp | None
    loss_log: list[tuple[str, int, float]]
    seed: int


def member_seed(base_seed: int, index: int) -> int:
    """Decorrelated per-member seed derived from the run seed."""
    return int(
        seeding.stream(seeding.PURPOSE_MEMBER, base_seed, index).integers(1 << 62)
    )


def train_member(
    dataset: Dataset,
    tree: LabelTree,
    plan: TrainPlan,
    hidden_sizes: Sequence[int],
    seed: int,
) -> MemberResult:
    """Train one member from scratch under its own seed."""
    plan = replace(plan, optimizer=replace(plan.optimizer, seed=seed))
    layer_sizes = [dataset.features.shape[1], *hidden_sizes, tree.K]
    model = Mlp.init(layer_sizes, seed)
    loss_log: list[tuple[str, int, float]] = []
    if plan.conditional:
        model = train_stage1(model, dataset, tree, plan, loss_log)
        stage1_snapshot = model.copy()
        model = train_stage2(model, dataset, plan, loss_log)
        return MemberResult(model, stage1_snapshot, loss_log, seed)
    model = train_flat(model, dataset, plan, loss_log)
    return MemberResult(model, None, loss_log, seed)


def train_ensemble(
    dataset: Dataset,
    tree: LabelTree,
    plan: TrainPlan,
    hidden_sizes: Sequence[int],
    base_seed: int,
    size: int,
    workers: int = 1,
) -> list[MemberResult]:
    """Train ``size`` members with derived seeds, optionally in parallel.

    Members are independent and individually deterministic, so the
    worker count never changes results.
    """
    seeds = [member_seed(base_seed, i) for i in range(size)]
    if workers <= 1 or size == 1:
        return [
            train_member(dataset, tree, plan, hidden_sizes, s) for s in seeds
        ]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(train_member, dataset, tree, plan, hidden_sizes, s)
            for s in seeds
        ]
        return [f.result() for f in futures]


def predict_unconditional(
    ensemble: EnsembleModel, tree: LabelTree, x: np.ndarray
) -> np.ndarray:
    """Mean over members of the propagated (unconditional) probabilities."""
    outputs = [propagate(tree, member.forward(x)) for member in ensemble.members]
    return np.mean(outputs, axis=0)


# ---------------------------------------------------------------------------
# Hierarchical ablation: conditional two-stage + smoothing + propagation
# against the flat hard-ones baseline, averaged over seeds.


@dataclass
class AblationResult:
    """Per-seed and mean leaf AUCs for both arms, plus the signed delta."""

    leaf_names: tuple[str, ...]
    conditional_by_seed: list[float]
    flat_by_seed: list[float]

    @property
    def mean_conditional(self) -> float:
        return float(np.mean(self.conditional_by_seed))

    @property
    def mean_flat(self) -> float:
        return float(np.mean(self.flat_by_seed))

    @property
    def delta(self) -> float:
        """Signed improvement of the conditional arm over the flat arm."""
        return self.mean_conditional - self.mean_flat


def _mean_leaf_auc(
    scores: np.ndarray, labels01: np.ndarray, leaf_indices: Sequence[int]
) -> float:
    from .evaluation import auc

    return float(
        np.mean([auc(scores[:, k], labels01[:, k]) for k in leaf_indices])
    )


def hierarchical_ablation(
    tree: LabelTree,
    theta: np.ndarray,
    seeds: Sequence[int],
    *,
    n_train: int,
    n_eval: int,
    uncertainty_rate: float,
    smoothed_policy: UncertaintyPolicy,
    hard_policy: UncertaintyPolicy,
    optimizer: OptimizerConfig,
    stage1_iterations: int,
    stage2_iterations: int,
    hidden_sizes: Sequence[int] = (32,),
    feature_dim: int = 16,
    feature_noise: float = 0.5,
) -> AblationResult:
    """Leaf-label AUC of both training recipes on fresh data per seed.

    Each seed draws a train/eval split from the same generator, injects
    uncertainty into the training labels only, trains one model per arm,
    and scores held-out leaves: the conditional arm by propagated
    outputs, the flat arm by raw sigmoid outputs.
    """
    from .data import POS, SyntheticSpec

    spec = SyntheticSpec(
        tree=tree, theta=theta, feature_noise=feature_noise, feature_dim=feature_dim
    )
    leaf_indices = [tree.index_of(name) for name in tree.leaves]
    flat_total = stage1_iterations + stage2_iterations
    cond_scores: list[float] = []
    flat_scores: list[float] = []
    for seed in seeds:
        full, _ = generate_synthetic(spec, n_train + n_eval, seed)
        train = full.take(np.arange(n_train))
        held_out = full.take(np.arange(n_train, n_train + n_eval))
        train = inject_uncertainty(train, uncertainty_rate, seed)
        eval_binary = (held_out.labels == POS).astype(np.int64)

        cond_plan = TrainPlan(
            policy=smoothed_policy,
            optimizer=replace(optimizer, seed=seed),
            stage1_iterations=stage1_iterations,
            stage2_iterations=stage2_iterations,
            conditional=True,
        )
        cond = train_member(train, tree, cond_plan, hidden_sizes, seed)
        cond_out = propagate(tree, cond.final.forward(held_out.features))
        cond_scores.append(_mean_leaf_auc(cond_out, eval_binary, leaf_indices))

        flat_plan = TrainPlan(
            policy=hard_policy,
            optimizer=replace(optimizer, seed=seed, iterations=flat_total),
            conditional=False,
        )
        flat = train_member(train, tree, flat_plan, hidden_sizes, seed)
        flat_out = flat.final.forward(held_out.features)
        flat_scores.append(_mean_leaf_auc(flat_out, eval_binary, leaf_indices))
    return AblationResult(
        leaf_names=tree.leaves,
        conditional_by_seed=cond_scores,
        flat_by_seed=flat_scores,
    )
