"""ReAct-style activation clipping as a composable pre-scoring transform.

The clip value is a percentile of the pooled distribution of all bank
activation entries. Clipping a feature must propagate to any
classifier-derived confidence, so logits are recomputed as W @ clip(z) + b
from the stored head wherever a clipped score needs them.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DataError


@dataclass(frozen=True)
class ReactThreshold:
    c: float
    percentile: float


def fit_react(bank_or_features, percentile=90.0) -> ReactThreshold:
    """Percentile (linear interpolation between order statistics) of the
    pooled n*d bank activations."""
    if not (0.0 < percentile <= 100.0):
        raise DataError(f"percentile must be in (0, 100], got {percentile}")
    feats = getattr(bank_or_features, "features", bank_or_features)
    feats = np.asarray(feats, dtype=np.float64)
    if feats.size == 0:
        raise DataError("cannot fit a clip threshold on an empty bank")
    c = float(np.percentile(feats.ravel(), percentile))
    return ReactThreshold(c=c, percentile=float(percentile))


def apply_react(features, threshold: ReactThreshold):
    """Elementwise min(feature, c)."""
    return np.minimum(np.asarray(features, dtype=np.float64), threshold.c)


class ReactClipper(BaseEstimator, TransformerMixin):
    """sklearn-style transformer around fit_react/apply_react."""

    def __init__(self, percentile=90.0):
        self.percentile = percentile

    def fit(self, X, y=None):
        self.threshold_ = fit_react(X, self.percentile)
        return self

    def transform(self, X):
        if not hasattr(self, "threshold_"):
            raise NotFittedError("ReactClipper is not fitted")
        return apply_react(X, self.threshold_)
