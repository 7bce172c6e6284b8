"""sklearn-style detector estimators over precomputed features.

Every detector is fit on bank data and scores query samples, higher
meaning more in-distribution:

    det = NNGuideDetector(k=10).fit(features, logits=logits, head=head)
    scores = det.score_samples(test_features, logits=test_logits)

``fit`` accepts plain arrays; ``fit_bank``/``score_bank`` adapt a
FeatureBank. Estimators follow the sklearn conventions (``get_params``,
``set_params``, clone-ability, NotFittedError before fit), so they compose
with sklearn tooling.
"""

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError

from . import distance, guidance
from .bank import ClassifierHead, FeatureBank
from .confidence import CONFIDENCE_KINDS, confidence_scores
from .errors import DataError
from .react import apply_react, fit_react
from .validation import as_float_matrix


class BankDetector(BaseEstimator):
    """Shared fit/score plumbing for the detectors below."""

    def fit(self, X, logits=None, labels=None, head=None):
        X = as_float_matrix(X, "X")
        if logits is not None:
            logits = as_float_matrix(logits, "logits")
            if logits.shape[0] != X.shape[0]:
                raise DataError("logits row count differs from X")
        self._fit(X, logits, labels, head)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_bank(self, bank: FeatureBank, head: ClassifierHead | None = None):
        return self.fit(bank.features, bank.logits, bank.labels, head)

    def score_samples(self, X, logits=None, threads=1):
        if not hasattr(self, "n_features_in_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted")
        X = as_float_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise DataError(
                f"X has dimension {X.shape[1]}, detector was fit with "
                f"{self.n_features_in_}"
            )
        if logits is not None:
            logits = as_float_matrix(logits, "logits")
        return self._score(X, logits, threads)

    def score_bank(self, bank: FeatureBank, threads=1):
        return self.score_samples(bank.features, bank.logits, threads)


def _require_logits(logits, what):
    if logits is None:
        raise DataError(f"{what} requires logits")
    return logits


class ConfidenceDetector(BankDetector):
    """Classifier-output score (energy, msp, maxlogit, kl, gradnorm)."""

    def __init__(self, kind="energy", clamp_nonneg=False):
        self.kind = kind
        self.clamp_nonneg = clamp_nonneg

    def _fit(self, X, logits, labels, head):
        if self.kind not in CONFIDENCE_KINDS:
            raise DataError(f"unknown confidence kind {self.kind!r}")
        if self.kind == "gradnorm" and head is None:
            raise DataError("gradnorm requires the classifier head")
        self.head_ = head

    def _score(self, X, logits, threads):
        scores = confidence_scores(
            self.kind, _require_logits(logits, self.kind), X, self.head_
        )
        return np.maximum(scores, 0.0) if self.clamp_nonneg else scores


class KNNDetector(BankDetector):
    """Similarity to the k-th nearest bank feature (cosine); with
    ``average=True``, the mean of the top-k similarities instead."""

    def __init__(self, k=10, average=False):
        self.k = k
        self.average = average

    def _fit(self, X, logits, labels, head):
        normalized = guidance.normalize_rows(X, "bank features")
        self.index_ = guidance.index_from_arrays(normalized, np.ones(X.shape[0]))

    def _score(self, X, logits, threads):
        sims = guidance.batch_plain_topk(self.index_, X, self.k, threads)
        return sims.mean(axis=1) if self.average else sims[:, -1]


class MahalanobisDetector(BankDetector):
    """Negative squared Mahalanobis distance to the nearest class mean
    under a shared covariance; ``per_class=False`` is the single-Gaussian
    (SSD-style) variant."""

    def __init__(self, per_class=True):
        self.per_class = per_class

    def _fit(self, X, logits, labels, head):
        bank = FeatureBank(
            features=X,
            K=int(labels.max()) + 1 if labels is not None else 1,
            labels=labels,
        )
        self.model_ = distance.fit_gaussian(bank, per_class=self.per_class)

    def _score(self, X, logits, threads):
        return distance.gaussian_score(self.model_, X)


class VimDetector(BankDetector):
    """Virtual-logit score: energy minus the scaled residual norm against
    the principal subspace of the offset bank features."""

    def __init__(self, principal_dim=None):
        self.principal_dim = principal_dim

    def _fit(self, X, logits, labels, head):
        bank = FeatureBank(
            features=X,
            K=_require_logits(logits, "vim").shape[1],
            logits=logits,
        )
        self.model_ = distance.fit_vim(bank, head, self.principal_dim)

    def _score(self, X, logits, threads):
        return distance.vim_score(self.model_, X, _require_logits(logits, "vim"))


class NNGuideDetector(BankDetector):
    """Base confidence times the nearest-neighbor guidance term.

    Ablations: ``confidence_scaling=False`` drops the scaling from the
    neighbor ordering (plain top-k mean); ``multiply_base=False`` returns
    the guidance term alone.
    """

    def __init__(
        self,
        base="energy",
        k=10,
        confidence_scaling=True,
        multiply_base=True,
        clamp_nonneg=False,
    ):
        self.base = base
        self.k = k
        self.confidence_scaling = confidence_scaling
        self.multiply_base = multiply_base
        self.clamp_nonneg = clamp_nonneg

    def _fit(self, X, logits, labels, head):
        bank = FeatureBank(
            features=X,
            K=_require_logits(logits, "nnguide").shape[1],
            logits=logits,
        )
        if self.base == "gradnorm" and head is None:
            raise DataError("gradnorm requires the classifier head")
        self.head_ = head
        self.index_ = guidance.build_index(
            bank, head, self.base, clamp_nonneg=self.clamp_nonneg
        )

    def _score(self, X, logits, threads):
        if self.confidence_scaling:
            terms = guidance.batch_guidance_terms(self.index_, X, self.k, threads)
        else:
            terms = guidance.batch_plain_topk(self.index_, X, self.k, threads).mean(
                axis=1
            )
        if not self.multiply_base:
            return terms
        base = confidence_scores(
            self.base, _require_logits(logits, "nnguide"), X, self.head_
        )
        if self.clamp_nonneg:
            base = np.maximum(base, 0.0)
        return base * terms


class MahalanobisGuidanceDetector(BankDetector):
    """Base confidence times exp(-min_c mahal^2 / (2 d)): the guidance
    term replaced by a squashed class-conditional Mahalanobis score."""

    def __init__(self, base="energy", clamp_nonneg=False):
        self.base = base
        self.clamp_nonneg = clamp_nonneg

    def _fit(self, X, logits, labels, head):
        if labels is None:
            raise DataError("mahalanobis guidance requires labels")
        _require_logits(logits, "mahalanobis guidance")
        bank = FeatureBank(features=X, K=int(labels.max()) + 1, labels=labels)
        self.model_ = distance.fit_gaussian(bank, per_class=True)
        self.head_ = head

    def _score(self, X, logits, threads):
        base = confidence_scores(
            self.base, _require_logits(logits, "mahalanobis guidance"), X, self.head_
        )
        if self.clamp_nonneg:
            base = np.maximum(base, 0.0)
        m2 = distance.mahalanobis_sq_min(self.model_, X)
        return base * np.exp(-m2 / (2.0 * X.shape[1]))


class FusionDetector(BankDetector):
    """Naive fusion of the KNN score with a base confidence: raw product,
    or sum/max/min after min-max normalizing each constituent with
    coefficients fitted on the bank."""

    def __init__(self, mode="product", k=10, base="energy"):
        self.mode = mode
        self.k = k
        self.base = base

    def _fit(self, X, logits, labels, head):
        _require_logits(logits, "fusion")
        if self.mode not in guidance.FUSION_KINDS:
            raise DataError(f"unknown fusion kind {self.mode!r}")
        normalized = guidance.normalize_rows(X, "bank features")
        self.index_ = guidance.index_from_arrays(normalized, np.ones(X.shape[0]))
        self.head_ = head
        bank_knn = guidance.batch_plain_topk(self.index_, X, self.k)[:, -1]
        bank_base = confidence_scores(self.base, logits, X, head)
        self.knn_coeff_ = guidance.fit_minmax(bank_knn)
        self.base_coeff_ = guidance.fit_minmax(bank_base)

    def _score(self, X, logits, threads):
        knn = guidance.batch_plain_topk(self.index_, X, self.k, threads)[:, -1]
        base = confidence_scores(
            self.base, _require_logits(logits, "fusion"), X, self.head_
        )
        return guidance.fuse(self.mode, knn, base, self.knn_coeff_, self.base_coeff_)


class ReactDetector(BankDetector):
    """Wraps any detector with activation clipping.

    The clip threshold is fitted on the un-truncated bank; by default the
    bank side is clipped too and bank logits are recomputed from the head
    so bank confidences reflect the clipped features. Both choices are
    switchable because the composition order is a convention, not a
    contract.
    """

    def __init__(
        self,
        detector=None,
        percentile=90.0,
        clip_bank=True,
        recompute_bank_confidence=True,
    ):
        self.detector = detector
        self.percentile = percentile
        self.clip_bank = clip_bank
        self.recompute_bank_confidence = recompute_bank_confidence

    def _fit(self, X, logits, labels, head):
        if self.detector is None:
            raise DataError("ReactDetector needs an inner detector")
        self.threshold_ = fit_react(X, self.percentile)
        self.head_ = head
        bank_X = apply_react(X, self.threshold_) if self.clip_bank else X
        bank_logits = logits
        if self.clip_bank and self.recompute_bank_confidence and logits is not None:
            if head is None:
                raise DataError(
                    "recomputing clipped bank logits requires the classifier head"
                )
            bank_logits = head.logits(bank_X)
        self.inner_ = clone(self.detector).fit(bank_X, bank_logits, labels, head)

    def _score(self, X, logits, threads):
        clipped = apply_react(X, self.threshold_)
        if logits is not None:
            if self.head_ is None:
                raise DataError(
                    "scoring clipped samples with logits requires the classifier head"
                )
            logits = self.head_.logits(clipped)
        return self.inner_.score_samples(clipped, logits, threads)


# ---------------------------------------------------------------------------
# Score-name registry (the CLI's score vocabulary)
# ---------------------------------------------------------------------------

_NNGUIDE_BASES = {
    "nnguide": "energy",
    "nnguide-msp": "msp",
    "nnguide-maxlogit": "maxlogit",
    "nnguide-kl": "kl",
    "nnguide-gradnorm": "gradnorm",
}

SCORE_NAMES = (
    "energy",
    "msp",
    "maxlogit",
    "kl",
    "gradnorm",
    "knn",
    "mahalanobis",
    "ssd",
    "vim",
    *_NNGUIDE_BASES,
    "knn-avg",
    "guidance-only",
    "no-scale",
    "mahal-guide",
    "fuse-product",
    "fuse-sum",
    "fuse-max",
    "fuse-min",
)


def make_detector(name, k=10, vim_dim=None, clamp_nonneg=False):
    """Detector instance for a registered CLI score name."""
    if name in CONFIDENCE_KINDS:
        return ConfidenceDetector(kind=name, clamp_nonneg=clamp_nonneg)
    if name == "knn":
        return KNNDetector(k=k)
    if name == "knn-avg":
        return KNNDetector(k=k, average=True)
    if name == "mahalanobis":
        return MahalanobisDetector(per_class=True)
    if name == "ssd":
        return MahalanobisDetector(per_class=False)
    if name == "vim":
        return VimDetector(principal_dim=vim_dim)
    if name in _NNGUIDE_BASES:
        return NNGuideDetector(
            base=_NNGUIDE_BASES[name], k=k, clamp_nonneg=clamp_nonneg
        )
    if name == "guidance-only":
        return NNGuideDetector(k=k, multiply_base=False, clamp_nonneg=clamp_nonneg)
    if name == "no-scale":
        return NNGuideDetector(
            k=k, confidence_scaling=False, clamp_nonneg=clamp_nonneg
        )
    if name == "mahal-guide":
        return MahalanobisGuidanceDetector(clamp_nonneg=clamp_nonneg)
    if name.startswith("fuse-"):
        mode = name.removeprefix("fuse-")
        if mode in guidance.FUSION_KINDS:
            return FusionDetector(mode=mode, k=k)
    raise DataError(f"unknown score name {name!r}")
