"""Hierarchical multi-label classification at desk scale.

Trains small sigmoid-output classifiers over feature vectors under a label
hierarchy: conditional two-stage training, uncertainty-label smoothing,
Bayes chain-rule propagation of conditional outputs, ensembling, and
ROC/AUC + reader-study evaluation.  Synthetic generators with known
marginals provide ground truth for verification.
"""

__version__ = "0.1.0"
