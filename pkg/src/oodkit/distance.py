"""Distance-based detector baselines: KNN, Mahalanobis, SSD, and ViM."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .errors import DataError, NumericalError
from .guidance import GuidanceIndex, plain_topk_similarities

# Relative ridge added to the covariance diagonal; an absolute floor keeps
# zero-spread banks (trace 0) factorizable.
COV_REG_SCALE = 1e-6
COV_REG_FLOOR = 1e-12


def knn_score(query_feature, index: GuidanceIndex, k) -> float:
    """Cosine similarity to the k-th most similar bank feature under plain
    similarity ordering (no confidence scaling). Unlike the guided search,
    which clamps oversized k for sweep convenience, k must satisfy
    1 <= k <= n here."""
    if not (1 <= int(k) <= index.n):
        raise DataError(f"k={k} out of range [1, {index.n}]")
    sims = plain_topk_similarities(index, query_feature, k)
    return float(sims[-1])


@dataclass
class GaussianModel:
    """Class-conditional (or single) Gaussian with a shared covariance."""

    means: np.ndarray  # (C, d)
    precision: np.ndarray  # (d, d)
    reg_eps: float

    @property
    def d(self):
        return self.means.shape[1]


def fit_gaussian(bank, per_class=True) -> GaussianModel:
    """Fit means and the shared covariance on the bank features.

    Covariance uses the population divisor n and is regularized by
    reg_eps * I with reg_eps = 1e-6 * trace / d (floored at 1e-12 so a
    zero-spread bank still factorizes). The precision matrix is the
    Cholesky-based inverse.
    """
    feats = bank.features
    n, d = feats.shape
    if per_class:
        if bank.labels is None:
            raise DataError("per-class Gaussian requires labels")
        classes = np.unique(bank.labels)
        means = np.stack([feats[bank.labels == c].mean(axis=0) for c in classes])
        centered = feats - means[np.searchsorted(classes, bank.labels)]
    else:
        means = feats.mean(axis=0, keepdims=True)
        centered = feats - means
    cov = centered.T @ centered / n
    reg_eps = max(COV_REG_SCALE * float(np.trace(cov)) / d, COV_REG_FLOOR)
    cov = cov + reg_eps * np.eye(d)
    try:
        chol = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "covariance is singular even after regularization"
        ) from exc
    precision = cho_solve(chol, np.eye(d))
    precision = (precision + precision.T) / 2.0  # keep symmetry exact
    return GaussianModel(means=means, precision=precision, reg_eps=reg_eps)


def mahalanobis_sq_min(model: GaussianModel, features):
    """min_c (z - mu_c)^T P (z - mu_c), vectorized over query rows."""
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    # (m, C, d) differences; einsum keeps memory linear in m*C
    diffs = feats[:, None, :] - model.means[None, :, :]
    sq = np.einsum("mcd,de,mce->mc", diffs, model.precision, diffs)
    out = sq.min(axis=1)
    return out if np.asarray(features).ndim == 2 else float(out[0])


def gaussian_score(model: GaussianModel, feature):
    """Negative squared Mahalanobis distance to the nearest mean; the
    maximum value 0 is attained exactly at a mean."""
    m2 = mahalanobis_sq_min(model, feature)
    return -m2


@dataclass
class VimModel:
    """Virtual-logit model: residual energy against the principal subspace
    of the (offset) bank features, scaled to the max-logit magnitude."""

    offset: np.ndarray  # (d,)
    residual_basis: np.ndarray  # (d, d - D), orthonormal columns
    alpha: float
    principal_dim: int


def default_vim_dim(d):
    return min(512, d - 1) if d >= 1024 else math.ceil(d / 2)


def fit_vim(bank, head, principal_dim=None) -> VimModel:
    if head is None:
        raise DataError("ViM requires the classifier head")
    if bank.logits is None:
        raise DataError("ViM requires bank logits")
    d = bank.d
    D = default_vim_dim(d) if principal_dim is None else int(principal_dim)
    if not (0 <= D < d):
        raise DataError(f"principal dimension must satisfy 0 <= D < d, got D={D}, d={d}")
    offset = -np.linalg.pinv(head.W) @ head.b
    centered = bank.features - offset
    # Second moment about the offset (the ViM convention), not the
    # mean-centered covariance.
    moment = centered.T @ centered / bank.n
    eigvals, eigvecs = np.linalg.eigh(moment)  # ascending
    residual_basis = eigvecs[:, : d - D]
    residual_norms = np.linalg.norm(centered @ residual_basis, axis=1)
    denom = residual_norms.sum()
    if denom == 0.0:
        raise NumericalError("bank features have no residual energy; alpha undefined")
    alpha = float(bank.logits.max(axis=1).sum() / denom)
    return VimModel(
        offset=offset, residual_basis=residual_basis, alpha=alpha, principal_dim=D
    )


def vim_score(model: VimModel, feature, logits):
    """log-sum-exp of the logits minus the scaled residual norm."""
    feats = np.atleast_2d(np.asarray(feature, dtype=np.float64))
    logit_arr = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if feats.shape[1] != model.offset.shape[0]:
        raise DataError(
            f"feature dimension {feats.shape[1]} != model dimension "
            f"{model.offset.shape[0]}"
        )
    residual = np.linalg.norm((feats - model.offset) @ model.residual_basis, axis=1)
    out = logsumexp(logit_arr, axis=1) - model.alpha * residual
    return out if np.asarray(feature).ndim == 2 else float(out[0])
