"""Datasets: label CSV ingestion, synthetic generation, conditional masks.

Label matrices hold one of four codes per cell.  CSV cells map as
"1.0" -> POS, "0.0" -> NEG, "-1.0" -> UNC, empty -> MISSING; label
columns are named exactly as the hierarchy's node names and any other
column is preserved as row metadata.  Feature vectors replace images:
synthetic datasets carry generated features, and label-only CSVs get a
small deterministic featurizer stub over their metadata columns so
evaluation-only flows still work.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import seeding
from .errors import DataFormatError
from .hierarchy import LabelTree, propagate

# Label codes (int8 storage)
POS = np.int8(1)
NEG = np.int8(0)
UNC = np.int8(-1)
MISSING = np.int8(-2)

_CELL_TO_CODE = {1.0: POS, 0.0: NEG, -1.0: UNC}
_CODE_TO_CELL = {int(POS): "1.0", int(NEG): "0.0", int(UNC): "-1.0", int(MISSING): ""}


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, label matrix, row ids, and preserved metadata columns."""

    features: np.ndarray  # (N, F) float64
    labels: np.ndarray  # (N, K) int8
    ids: tuple[str, ...]
    metadata: dict[str, tuple[str, ...]]

    def __post_init__(self):
        n = self.labels.shape[0]
        if self.features.shape[0] != n or len(self.ids) != n:
            raise ValueError(
                f"row counts disagree: features {self.features.shape[0]}, "
                f"labels {n}, ids {len(self.ids)}"
            )
        for col, values in self.metadata.items():
            if len(values) != n:
                raise ValueError(f"metadata column {col!r} has wrong length")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def take(self, rows: np.ndarray | Sequence[int]) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            features=self.features[rows],
            labels=self.labels[rows],
            ids=tuple(self.ids[i] for i in rows),
            metadata={
                col: tuple(vals[i] for i in rows)
                for col, vals in self.metadata.items()
            },
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator spec: per-node positive rates given a positive parent.

    ``theta[k]`` is the probability node k is positive when its parent is
    positive (for roots, the marginal rate).  A negative parent forces
    the child negative, so exact marginals are the theta products along
    ancestor paths.
    """

    tree: LabelTree
    theta: np.ndarray  # (K,) floats in [0, 1]
    feature_noise: float = 0.5
    feature_dim: int = 16

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        object.__setattr__(self, "theta", theta)
        if theta.shape != (self.tree.K,):
            raise ValueError(
                f"theta has shape {theta.shape}, expected ({self.tree.K},)"
            )
        if np.any((theta < 0.0) | (theta > 1.0)):
            bad = int(np.flatnonzero((theta < 0.0) | (theta > 1.0))[0])
            raise ValueError(
                f"theta for node {self.tree.names[bad]!r} is "
                f"{theta[bad]}, outside [0, 1]"
            )
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_cell(raw: str, where: str) -> np.int8:
    raw = raw.strip()
    if raw == "":
        return MISSING
    try:
        value = float(raw)
    except ValueError:
        raise DataFormatError(f"{where}: unparsable label cell {raw!r}") from None
    try:
        return _CELL_TO_CODE[value]
    except KeyError:
        raise DataFormatError(
            f"{where}: label value {raw!r} is not one of 1.0 / 0.0 / -1.0 / empty"
        ) from None


def load_labels_csv(
    path: str | Path, tree: LabelTree, missing_as_negative: bool = False
) -> tuple[np.ndarray, tuple[str, ...], dict[str, tuple[str, ...]]]:
    """Parse a label CSV into (labels, ids, metadata).

    Every tree label must appear as a column; all other columns are kept
    as metadata.  Row ids come from a ``Path`` or ``id`` column when
    present, else are positional.  ``missing_as_negative`` maps blank
    cells to NEG at load time instead of MISSING.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        missing_cols = [name for name in tree.names if name not in header]
        if missing_cols:
            raise DataFormatError(
                f"{path}: missing label column(s) {missing_cols}"
            )
        label_pos = {name: header.index(name) for name in tree.names}
        meta_cols = [c for c in header if c not in label_pos]
        meta_idx = [header.index(c) for c in meta_cols]

        rows: list[list[np.int8]] = []
        meta_values: list[list[str]] = [[] for _ in meta_cols]
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{line}: expected {len(header)} cells, got {len(row)}"
                )
            rows.append(
                [
                    _parse_cell(row[label_pos[name]], f"{path}:{line}")
                    for name in tree.names
                ]
            )
            for j, idx in enumerate(meta_idx):
                meta_values[j].append(row[idx])
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    labels = np.array(rows, dtype=np.int8)
    if missing_as_negative:
        labels[labels == MISSING] = NEG
    metadata = {c: tuple(v) for c, v in zip(meta_cols, meta_values)}
    if "Path" in metadata:
        ids = metadata["Path"]
    elif "id" in metadata:
        ids = metadata["id"]
    else:
        ids = tuple(f"row{i:05d}" for i in range(len(rows)))
    return labels, ids, metadata


def write_labels_csv(
    path: str | Path,
    labels: np.ndarray,
    tree: LabelTree,
    ids: Sequence[str] | None = None,
    metadata: dict[str, tuple[str, ...]] | None = None,
) -> None:
    """Write a label CSV: metadata columns first, then labels in index order."""
    path = Path(path)
    metadata = metadata or {}
    if ids is not None and "id" not in metadata and "Path" not in metadata:
        metadata = {"id": tuple(ids), **metadata}
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(metadata) + list(tree.names))
        for i in range(labels.shape[0]):
            row = [metadata[c][i] for c in metadata]
            row += [_CODE_TO_CELL[int(v)] for v in labels[i]]
            writer.writerow(row)


# Featurizer stub for label-only CSVs: a fixed 7-dim encoding of the
# standard metadata columns (one-hot Sex over Male/Female, one-hot
# Frontal/Lateral, one-hot AP/PA over AP/PA, Age/100).  Unknown or absent
# values contribute zeros, so files without these columns still load.
_STUB_ONE_HOT = [
    ("Sex", ("Male", "Female")),
    ("Frontal/Lateral", ("Frontal", "Lateral")),
    ("AP/PA", ("AP", "PA")),
]
STUB_FEATURE_DIM = sum(len(vals) for _, vals in _STUB_ONE_HOT) + 1


def featurize_metadata(metadata: dict[str, tuple[str, ...]], n: int) -> np.ndarray:
    features = np.zeros((n, STUB_FEATURE_DIM), dtype=np.float64)
    col = 0
    for name, values in _STUB_ONE_HOT:
        present = metadata.get(name)
        for j, value in enumerate(values):
            if present is not None:
                features[:, col + j] = [1.0 if v == value else 0.0 for v in present]
        col += len(values)
    ages = metadata.get("Age")
    if ages is not None:
        for i, raw in enumerate(ages):
            try:
                features[i, col] = float(raw) / 100.0
            except ValueError:
                pass
    return features


def load_csv(
    path: str | Path, tree: LabelTree, missing_as_negative: bool = False
) -> Dataset:
    """Load a label-only CSV, stubbing features from metadata columns."""
    labels, ids, metadata = load_labels_csv(path, tree, missing_as_negative)
    features = featurize_metadata(metadata, labels.shape[0])
    return Dataset(features=features, labels=labels, ids=ids, metadata=metadata)


def load_features_csv(path: str | Path) -> tuple[np.ndarray, tuple[str, ...]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if not header or header[0] != "id":
            raise DataFormatError(f"{path}: features file must start with an id column")
        ids = []
        rows = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{line}: expected {len(header)} cells, got {len(row)}"
                )
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise DataFormatError(f"{path}:{line}: unparsable feature value") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), tuple(ids)


def write_features_csv(path: str | Path, features: np.ndarray, ids: Sequence[str]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"] + [f"f{j}" for j in range(features.shape[1])])
        for i, row_id in enumerate(ids):
            # repr round-trips float64 exactly, keeping files byte-stable
            writer.writerow([row_id] + [repr(float(v)) for v in features[i]])


def load_dataset(features_path: str | Path, labels_path: str | Path, tree: LabelTree) -> Dataset:
    """Load a synthetic features/labels CSV pair, matching rows by order."""
    features, feat_ids = load_features_csv(features_path)
    labels, ids, metadata = load_labels_csv(labels_path, tree)
    if feat_ids != ids:
        raise DataFormatError(
            f"row ids disagree between {features_path} and {labels_path}"
        )
    return Dataset(features=features, labels=labels, ids=ids, metadata=metadata)


# ---------------------------------------------------------------------------
# Ground truth and masking


def conditional_mask(labels: np.ndarray, tree: LabelTree) -> np.ndarray:
    """Cells whose every ancestor label is POS in that row (roots: all).

    Uncertain or missing parents do not count as positive: conditioning
    on unconfirmed evidence would contaminate the conditional estimate.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[1] != tree.K:
        raise ValueError(
            f"label matrix shape {labels.shape} does not match tree K={tree.K}"
        )
    pos = labels == POS
    mask = np.ones(labels.shape, dtype=bool)
    for k in tree.topo_order:
        p = tree.parent_index[k]
        if p != -1:
            mask[:, k] = mask[:, p] & pos[:, p]
    return mask


def majority_vote(annotations: np.ndarray) -> np.ndarray:
    """Per-label majority of an odd panel of binary annotators.

    ``annotations`` is (R, K) with entries POS/NEG only.  Returns the
    (K,) ground-truth row: POS where more than half the annotators said
    POS.
    """
    annotations = np.asarray(annotations)
    if annotations.ndim != 2:
        raise ValueError("annotation stack must be 2-D (R, K)")
    r = annotations.shape[0]
    if r % 2 == 0:
        raise ValueError(f"annotator panel must be odd, got R={r}")
    if not np.isin(annotations, (POS, NEG)).all():
        raise ValueError("annotations must be POS/NEG only (no UNC or MISSING)")
    counts = (annotations == POS).sum(axis=0)
    return np.where(counts * 2 > r, POS, NEG).astype(np.int8)


# ---------------------------------------------------------------------------
# Synthetic generation


def generate_synthetic(
    spec: SyntheticSpec, n: int, seed: int
) -> tuple[Dataset, np.ndarray]:
    """Sample n rows top-down from the hierarchy plus noisy linear features.

    Roots fire with rate theta[k]; a child fires with rate theta[k] only
    under a positive parent.  Features are W @ y + sigma * gaussian with
    W a fixed (F, K) matrix derived from the same seed, so datasets drawn
    with one seed share feature semantics and row i's content depends
    only on (seed, i).  Also returns the exact per-label marginals.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    tree = spec.tree
    pos = np.zeros((n, tree.K), dtype=bool)
    for k in tree.topo_order:
        u = seeding.stream(seeding.PURPOSE_SYNTH_LABELS, seed, k).random(n)
        fire = u < spec.theta[k]
        p = tree.parent_index[k]
        pos[:, k] = fire if p == -1 else fire & pos[:, p]
    labels = np.where(pos, POS, NEG).astype(np.int8)

    mixing = seeding.stream(seeding.PURPOSE_SYNTH_MIXING, seed).standard_normal(
        (spec.feature_dim, tree.K)
    )
    noise = np.empty((n, spec.feature_dim), dtype=np.float64)
    for f in range(spec.feature_dim):
        noise[:, f] = seeding.stream(
            seeding.PURPOSE_SYNTH_FEATURES, seed, f
        ).standard_normal(n)

    features = pos.astype(np.float64) @ mixing.T + spec.feature_noise * noise
    ids = tuple(f"row{i:05d}" for i in range(n))
    dataset = Dataset(features=features, labels=labels, ids=ids, metadata={})
    true_marginals = propagate(tree, spec.theta)
    return dataset, true_marginals


def inject_uncertainty(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Independently turn non-MISSING cells into UNC with the given rate.

    Each cell's coin depends only on (seed, row, column), so the outcome
    is stable under row subsetting and iteration order.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"uncertainty rate must be in [0, 1], got {rate}")
    labels = dataset.labels.copy()
    if rate > 0.0:
        n, k = labels.shape
        for row in range(n):
            u = seeding.row_uniforms(seeding.PURPOSE_UNC_INJECT, seed, row, k)
            hit = (u < rate) & (labels[row] != MISSING)
            labels[row, hit] = UNC
    return replace(dataset, labels=labels)
