"""Deterministic stream derivation for every random draw in the package.

All randomness flows through numpy's PCG64 seeded by a ``SeedSequence``
whose entropy is ``(purpose, user_seed, *key)``.  Purposes keep streams
for unrelated jobs (target smoothing, batch shuffling, weight init, ...)
disjoint even when the integer keys coincide.  The scheme is stable
across runs and numpy versions: both PCG64 and SeedSequence are frozen
algorithms.

Per-cell draws are keyed by row: stream ``(purpose, seed, row)`` yields
one uniform per column, so the value at cell (row, col) depends only on
(purpose, seed, row, col) and never on iteration order or matrix height.
"""

import numpy as np

# Stream purposes.  Values are arbitrary but frozen; changing them
# changes every derived draw.
PURPOSE_LSR = 1
PURPOSE_UNC_INJECT = 2
PURPOSE_SYNTH_LABELS = 3
PURPOSE_SYNTH_FEATURES = 4
PURPOSE_SYNTH_MIXING = 5
PURPOSE_INIT = 6
PURPOSE_SHUFFLE = 7
PURPOSE_MEMBER = 8


def stream(purpose: int, seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for the stream identified by (purpose, seed, key)."""
    return np.random.default_rng(np.random.SeedSequence((purpose, seed) + key))


def row_uniforms(purpose: int, seed: int, row: int, n_cols: int) -> np.ndarray:
    """The n_cols uniforms for one matrix row; cell (row, k) gets entry k."""
    return stream(purpose, seed, row).random(n_cols)
