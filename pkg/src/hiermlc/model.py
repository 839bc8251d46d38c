"""Small feed-forward multi-label classifier with exact gradients.

Rectifier hidden layers, K independent sigmoid output units, masked
soft-target cross-entropy, hand-derived backprop, bias-corrected Adam,
and per-layer freezing.  Everything runs in float64 so gradient checks
and cross-run comparisons stay tight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import seeding
from .errors import DataFormatError, NumericError

# Probabilities are clamped away from {0, 1} inside the loss so targets
# of 0/1 can never produce infinite cross-entropy.
PROB_CLAMP = 1e-7

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class OptimizerConfig:
    """Adam settings plus the learning-rate schedule and batch geometry.

    Defaults follow the usual Adam choices: beta1 0.9, beta2 0.999, base
    rate 1e-4 cut by 10x after each epoch, batch size 32.  ``iterations``
    is the single-stage step budget; two-stage plans carry their own
    per-stage counts.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    lr0: float = 1e-4
    epsilon: float = 1e-8
    decay_factor: float = 0.1
    batch_size: int = 32
    iterations: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.lr0 <= 0.0:
            raise ValueError("lr0 must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def lr_schedule(config: OptimizerConfig, epoch: int) -> float:
    """Learning rate for an epoch: lr0 * decay_factor ** epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr0 * config.decay_factor**epoch


class Mlp:
    """Rectifier MLP with sigmoid outputs and per-layer freeze flags."""

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        frozen: Sequence[bool] | None = None,
    ):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight/bias shapes disagree")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input dim does not chain")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.frozen = list(frozen) if frozen is not None else [False] * len(weights)
        if len(self.frozen) != len(self.weights):
            raise ValueError("need one frozen flag per layer")

    @classmethod
    def init(cls, layer_sizes: Sequence[int], seed: int) -> "Mlp":
        """Seed-deterministic uniform fan-in-scaled initialization.

        ``layer_sizes`` runs input dim, hidden dims..., output dim K.
        """
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = seeding.stream(seeding.PURPOSE_INIT, seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.frozen),
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probabilities in (0, 1) for a single (F,) input or an (N, F) batch."""
        probs, _ = _forward_trace(self, np.asarray(x, dtype=np.float64))
        return probs


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid exp overflow
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_trace(model: Mlp, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Sigmoid outputs plus per-layer post-activation values for backprop."""
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"input has shape {x.shape}, model expects (*, {model.input_dim})"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    activations = [x]
    h = x
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = _sigmoid(z) if i == model.n_layers - 1 else np.maximum(z, 0.0)
        activations.append(h)
    probs = activations[-1]
    return (probs[0], activations) if single else (probs, activations)


def masked_bce(probs: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> float:
    """Masked soft-target cross-entropy, averaged per example.

    Per example: -(1/|mask|) * sum over masked-in labels of
    y*ln(p) + (1-y)*ln(1-p), with p clamped to [PROB_CLAMP, 1-PROB_CLAMP];
    0 when the example's mask is empty.  Batches return the mean over
    examples.
    """
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if probs.shape != targets.shape or probs.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: probs {probs.shape}, targets {targets.shape}, "
            f"mask {mask.shape}"
        )
    single = probs.ndim == 1
    if single:
        probs, targets, mask = probs[None], targets[None], mask[None]
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    terms = targets * np.log(p) + (1.0 - targets) * np.log1p(-p)
    counts = mask.sum(axis=1)
    safe = np.maximum(counts, 1)
    per_example = -np.where(mask, terms, 0.0).sum(axis=1) / safe
    per_example[counts == 0] = 0.0
    return float(per_example.mean())


def backward(
    model: Mlp, x: np.ndarray, targets: np.ndarray, mask: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradients of masked_bce(forward(x)) w.r.t. every parameter.

    Frozen layers still get gradients; freezing acts at the update.
    Returns [(dW, db)] matching model layers.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if x.ndim == 1:
        x, targets, mask = x[None], targets[None], mask[None]
    probs, activations = _forward_trace(model, x)
    n = x.shape[0]
    counts = mask.sum(axis=1)
    scale = np.zeros(n)
    nonzero = counts > 0
    scale[nonzero] = 1.0 / (counts[nonzero] * n)

    # d(loss)/d(logit): (p - y) inside the clamp band, 0 where clamped
    # (the clamped loss is flat there).
    unclamped = (probs > PROB_CLAMP) & (probs < 1.0 - PROB_CLAMP)
    delta = np.where(mask & unclamped, probs - targets, 0.0) * scale[:, None]

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * model.n_layers  # type: ignore
    for i in range(model.n_layers - 1, -1, -1):
        h_in = activations[i]
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (activations[i] > 0.0)
    return grads


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    m: list[tuple[np.ndarray, np.ndarray]]
    v: list[tuple[np.ndarray, np.ndarray]]
    t: int = 0

    @classmethod
    def init(cls, model: Mlp) -> "AdamState":
        zeros = lambda: [
            (np.zeros_like(w), np.zeros_like(b))
            for w, b in zip(model.weights, model.biases)
        ]
        return cls(m=zeros(), v=zeros())


def adam_step(
    model: Mlp,
    state: AdamState,
    grads: list[tuple[np.ndarray, np.ndarray]],
    config: OptimizerConfig,
    lr: float,
) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update in place; frozen layers untouched."""
    if lr <= 0.0:
        raise ValueError("lr must be positive")
    if len(grads) != model.n_layers:
        raise ValueError("gradient list does not match model layers")
    for dw, db in grads:
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericError("non-finite gradient")
    state.t += 1
    bc1 = 1.0 - config.beta1**state.t
    bc2 = 1.0 - config.beta2**state.t
    for i in range(model.n_layers):
        if model.frozen[i]:
            continue
        for params, moments1, moments2, g in (
            (model.weights[i], state.m[i][0], state.v[i][0], grads[i][0]),
            (model.biases[i], state.m[i][1], state.v[i][1], grads[i][1]),
        ):
            moments1 *= config.beta1
            moments1 += (1.0 - config.beta1) * g
            moments2 *= config.beta2
            moments2 += (1.0 - config.beta2) * (g * g)
            m_hat = moments1 / bc1
            v_hat = moments2 / bc2
            params -= lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return model, state


def freeze_all_but_last(model: Mlp) -> Mlp:
    """Mark every layer frozen except the final one (in place)."""
    model.frozen = [True] * (model.n_layers - 1) + [False]
    return model


# ---------------------------------------------------------------------------
# Checkpoints: versioned JSON with nested float lists.  json emits the
# shortest round-tripping decimal form of each float64, so saved files
# are byte-stable and reload bit-exactly.


def _array_to_lists(a: np.ndarray):
    return a.tolist()


def save_checkpoint(
    path: str | Path,
    model: Mlp,
    state: AdamState | None = None,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layer_sizes": [model.input_dim]
        + [w.shape[1] for w in model.weights],
        "frozen": list(model.frozen),
        "weights": [_array_to_lists(w) for w in model.weights],
        "biases": [_array_to_lists(b) for b in model.biases],
    }
    if state is not None:
        payload["adam"] = {
            "t": state.t,
            "m": [[_array_to_lists(mw), _array_to_lists(mb)] for mw, mb in state.m],
            "v": [[_array_to_lists(vw), _array_to_lists(vb)] for vw, vb in state.v],
        }
    if extra:
        payload["extra"] = extra
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[Mlp, AdamState | None, dict]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not a valid checkpoint: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported checkpoint format version {version!r}"
        )
    weights = [np.array(w, dtype=np.float64) for w in payload["weights"]]
    biases = [np.array(b, dtype=np.float64) for b in payload["biases"]]
    model = Mlp(weights, biases, payload["frozen"])
    state = None
    if "adam" in payload:
        adam = payload["adam"]
        state = AdamState(
            m=[
                (np.array(mw, dtype=np.float64), np.array(mb, dtype=np.float64))
                for mw, mb in adam["m"]
            ],
            v=[
                (np.array(vw, dtype=np.float64), np.array(vb, dtype=np.float64))
                for vw, vb in adam["v"]
            ],
            t=int(adam["t"]),
        )
    return model, state, payload.get("extra", {})
