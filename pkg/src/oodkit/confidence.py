"""Classifier-based ("confidence") base scores computed from logits.

All five kinds are oriented so that higher means more in-distribution:

- energy:   log sum_c exp f_c          (negated energy)
- msp:      max_c softmax(f)_c
- maxlogit: max_c f_c
- kl:       KL(softmax(f) || uniform) = log K - H(softmax(f)); this is the
  textbook divergence to the uniform distribution (published result
  tables sometimes report a KL row that tracks the energy row almost
  exactly, which this quantity does not reproduce)
- gradnorm: ||p - u||_1 * ||z||_1 with p = softmax(f), u uniform; this is
  the entrywise L1 norm of the rank-1 gradient (p - u) z^T of the
  uniform-target cross-entropy with respect to the final weight matrix.
  The bias is excluded from the gradient; including it would add
  ||p - u||_1.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import DataError

CONFIDENCE_KINDS = ("energy", "msp", "maxlogit", "kl", "gradnorm")
DEFAULT_CONFIDENCE = "energy"


class NegativeConfidenceWarning(UserWarning):
    """Emitted when a bank's base confidences contain negative values;
    the guided score's nonnegativity arguments assume s_i >= 0."""


@dataclass
class ScoreReport:
    """Per-sample scores for one detector on one evaluation set."""

    kind: str
    params: dict = field(default_factory=dict)
    scores: np.ndarray = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1:
            raise DataError("scores must be a vector")
        if not np.all(np.isfinite(self.scores)):
            raise DataError("scores contain non-finite entries")


def softmax(logits):
    """Numerically stable softmax along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_logits(logits):
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if logits.shape[-1] < 1:
        raise DataError("logits must have at least one class")
    if not np.all(np.isfinite(logits)):
        raise DataError("logits contain non-finite entries")
    return logits


def confidence_scores(kind, logits, features=None, head=None):
    """Vectorized base confidence for a batch. logits is (m, K); features
    (m, d) and head are only consulted for gradnorm."""
    logits = _check_logits(logits)
    K = logits.shape[-1]
    if kind == "energy":
        return logsumexp(logits, axis=-1)
    if kind == "msp":
        return softmax(logits).max(axis=-1)
    if kind == "maxlogit":
        return logits.max(axis=-1)
    if kind == "kl":
        p = softmax(logits)
        entropy = -xlogy(p, p).sum(axis=-1)
        return np.log(K) - entropy
    if kind == "gradnorm":
        if head is None:
            raise DataError("gradnorm requires the classifier head")
        if features is None:
            raise DataError("gradnorm requires features")
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        p = softmax(logits)
        return np.abs(p - 1.0 / K).sum(axis=-1) * np.abs(features).sum(axis=-1)
    raise DataError(f"unknown confidence kind {kind!r}")


def base_confidence(kind, logits, feature=None, head=None):
    """Scalar base confidence for a single sample."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise DataError("base_confidence expects a logit vector")
    feats = None if feature is None else np.asarray(feature, dtype=np.float64)[None, :]
    return float(confidence_scores(kind, logits[None, :], feats, head)[0])


def batch_confidence(kind, bank, head=None, clamp_nonneg=False):
    """Base confidences for every bank row.

    Warns with NegativeConfidenceWarning when any value is negative
    (suppressed by ``clamp_nonneg``, which maps s <- max(s, 0)).
    """
    if bank.logits is None:
        raise DataError("bank has no logits; confidences cannot be computed")
    scores = confidence_scores(kind, bank.logits, bank.features, head)
    if clamp_nonneg:
        return np.maximum(scores, 0.0)
    if np.any(scores < 0):
        warnings.warn(
            f"{int(np.sum(scores < 0))} of {scores.size} bank confidences are "
            "negative; the nonnegative-range assumption does not hold",
            NegativeConfidenceWarning,
            stacklevel=2,
        )
    return scores
