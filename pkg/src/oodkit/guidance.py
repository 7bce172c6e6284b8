"""Nearest-neighbor guidance for classifier confidences.

The guided score multiplies a base confidence by a guidance term: the mean
of the k largest confidence-scaled cosine similarities between the test
feature and an in-distribution bank,

    score(x) = s_base(x) * (1/k) * sum of top-k over i of s_i * cos(z_i, z),

where the top-k selection itself uses the scaled values s_i * cos(z_i, z),
so the neighbor search is biased toward high-confidence bank regions.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .confidence import (
    DEFAULT_CONFIDENCE,
    ScoreReport,
    batch_confidence,
    confidence_scores,
)
from .errors import DataError

# Queries are scored in fixed-size chunks so results do not depend on the
# worker count; only chunk scheduling is parallel.
CHUNK = 256


class KClampedWarning(UserWarning):
    """Emitted when k exceeds the bank size and is clamped to it."""


@dataclass(frozen=True)
class GuidanceIndex:
    """Immutable search index: unit-normalized bank features, their base
    confidences, and the precomputed confidence-scaled rows."""

    normalized_features: np.ndarray  # (n, d), unit L2 rows
    confidences: np.ndarray  # (n,)
    scaled_rows: np.ndarray  # (n, d), row i = confidences[i] * normalized[i]
    base_kind: str = DEFAULT_CONFIDENCE
    source_alpha: float = 100.0
    source_seed: int | None = None

    def __post_init__(self):
        for arr in (self.normalized_features, self.confidences, self.scaled_rows):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.normalized_features.shape[0]

    @property
    def d(self):
        return self.normalized_features.shape[1]


def normalize_rows(features, name="features"):
    """Unit-normalize rows, rejecting zero-norm rows by index."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    zero = np.flatnonzero(norms.ravel() == 0.0)
    if zero.size:
        raise DataError(f"{name} row {zero[0]} has zero norm and cannot be normalized")
    return features / norms


def build_index(
    bank,
    head=None,
    base_kind=DEFAULT_CONFIDENCE,
    clamp_nonneg=False,
    source_alpha=100.0,
    source_seed=None,
) -> GuidanceIndex:
    """Build the guidance index from a bank with logits."""
    normalized = normalize_rows(bank.features, "bank features")
    confidences = batch_confidence(base_kind, bank, head, clamp_nonneg=clamp_nonneg)
    scaled = confidences[:, None] * normalized
    return GuidanceIndex(
        normalized_features=normalized,
        confidences=confidences,
        scaled_rows=scaled,
        base_kind=base_kind,
        source_alpha=source_alpha,
        source_seed=source_seed,
    )


def index_from_arrays(normalized_features, confidences, base_kind=DEFAULT_CONFIDENCE):
    """Index from an already-normalized feature matrix and confidences;
    used by tests and by callers that manage banks themselves."""
    normalized = np.asarray(normalized_features, dtype=np.float64)
    confidences = np.asarray(confidences, dtype=np.float64)
    if normalized.ndim != 2 or confidences.shape != (normalized.shape[0],):
        raise DataError("need an (n, d) matrix and an (n,) confidence vector")
    return GuidanceIndex(
        normalized_features=normalized,
        confidences=confidences,
        scaled_rows=confidences[:, None] * normalized,
        base_kind=base_kind,
    )


def _clamp_k(k, n):
    k = int(k)
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k > n:
        warnings.warn(
            f"k={k} exceeds bank size n={n}; clamping to n", KClampedWarning,
            stacklevel=3,
        )
        return n
    return k


def _topk_desc(values, k):
    """Indices of the k largest values, ordered by descending value with
    ties broken by ascending index. Exact under ties: rows strictly above
    the k-th value are all taken; rows equal to it fill the remaining
    slots in ascending index order."""
    n = values.shape[0]
    if k >= n:
        order = np.argsort(-values, kind="stable")
        return order
    kth = np.partition(values, n - k)[n - k]
    above = np.flatnonzero(values > kth)
    ties = np.flatnonzero(values == kth)
    idx = np.concatenate([above, ties[: k - above.size]])
    return idx[np.argsort(-values[idx], kind="stable")]


def _normalize_query(query):
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1:
        raise DataError("query must be a vector")
    # same arithmetic as the batched path so results agree bitwise
    return normalize_rows(query[None, :], "query")[0]


def scaled_topk(index: GuidanceIndex, query, k):
    """The k largest confidence-scaled similarities to the query.

    Returns a list of (bank_row, scaled_similarity), descending by value,
    ties resolved toward the lower bank row index. k > n clamps to n with
    a warning.
    """
    k = _clamp_k(k, index.n)
    q = _normalize_query(query)
    values = _chunked_matmul(index.scaled_rows, q[None, :])[0]
    rows = _topk_desc(values, k)
    return [(int(r), float(values[r])) for r in rows]


def plain_topk_similarities(index: GuidanceIndex, query, k):
    """Top-k plain cosine similarities (no confidence scaling), same
    deterministic ordering rule."""
    k = _clamp_k(k, index.n)
    q = _normalize_query(query)
    sims = _chunked_matmul(index.normalized_features, q[None, :])[0]
    rows = _topk_desc(sims, k)
    return sims[rows]


def guidance_term(index: GuidanceIndex, query, k) -> float:
    """Mean of the k largest scaled similarities."""
    pairs = scaled_topk(index, query, k)
    return float(np.mean([v for _, v in pairs]))


def nnguide_score(
    index: GuidanceIndex,
    query_feature,
    query_logits,
    head=None,
    base_kind=None,
    k=10,
    clamp_nonneg=False,
) -> float:
    """Guided score: base confidence times guidance term, nothing else."""
    base_kind = base_kind or index.base_kind
    base = confidence_scores(
        base_kind,
        np.asarray(query_logits, dtype=np.float64)[None, :],
        np.asarray(query_feature, dtype=np.float64)[None, :],
        head,
    )[0]
    if clamp_nonneg:
        base = max(base, 0.0)
    return float(base) * guidance_term(index, query_feature, k)


def _chunk_product(matrix, chunk):
    # A one-row multiply would dispatch to the BLAS matrix-vector kernel,
    # whose summation order differs from the matrix-matrix kernel; padding
    # with a zero row keeps every row on the same kernel, so single-query
    # and batched scoring agree bitwise.
    if chunk.shape[0] == 1:
        return (np.vstack([chunk, np.zeros_like(chunk)]) @ matrix.T)[:1]
    return chunk @ matrix.T


def _chunked_matmul(matrix, queries, threads=1):
    """queries @ matrix.T computed in fixed CHUNK-row slices; the slice
    boundaries never depend on the thread count, so results are bitwise
    identical for any ``threads``."""
    queries = np.asarray(queries, dtype=np.float64)
    chunks = [queries[i : i + CHUNK] for i in range(0, queries.shape[0], CHUNK)]
    if threads <= 1 or len(chunks) <= 1:
        parts = [_chunk_product(matrix, chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _chunk_product(matrix, c), chunks))
    return np.vstack(parts) if parts else np.empty((0, matrix.shape[0]))


def batch_scaled_topk(index: GuidanceIndex, queries, k, threads=1):
    """Batched scaled_topk. Returns (rows (m, k), values (m, k)) with the
    same per-query ordering contract as scaled_topk."""
    k = _clamp_k(k, index.n)
    normed = normalize_rows(queries, "queries")
    values = _chunked_matmul(index.scaled_rows, normed, threads)
    rows = np.empty((values.shape[0], k), dtype=np.int64)
    topv = np.empty((values.shape[0], k), dtype=np.float64)
    for i, row_vals in enumerate(values):
        idx = _topk_desc(row_vals, k)
        rows[i] = idx
        topv[i] = row_vals[idx]
    return rows, topv


def batch_guidance_terms(index: GuidanceIndex, queries, k, threads=1):
    _, topv = batch_scaled_topk(index, queries, k, threads)
    return topv.mean(axis=1)


def batch_plain_topk(index: GuidanceIndex, queries, k, threads=1):
    """Top-k plain similarities for a batch (for KNN-style scores)."""
    k = _clamp_k(k, index.n)
    normed = normalize_rows(queries, "queries")
    sims = _chunked_matmul(index.normalized_features, normed, threads)
    topv = np.empty((sims.shape[0], k), dtype=np.float64)
    for i, row_vals in enumerate(sims):
        topv[i] = row_vals[_topk_desc(row_vals, k)]
    return topv


def batch_guided_scores(
    index: GuidanceIndex,
    eval_bank,
    head=None,
    base_kind=None,
    k=10,
    threads=1,
    clamp_nonneg=False,
) -> ScoreReport:
    """Guided scores for every row of an evaluation bank."""
    base_kind = base_kind or index.base_kind
    if eval_bank.logits is None:
        raise DataError("evaluation bank has no logits")
    base = confidence_scores(base_kind, eval_bank.logits, eval_bank.features, head)
    if clamp_nonneg:
        base = np.maximum(base, 0.0)
    terms = batch_guidance_terms(index, eval_bank.features, k, threads)
    return ScoreReport(
        kind=f"nnguide[{base_kind}]",
        params={"k": int(k), "base": base_kind},
        scores=base * terms,
    )


# ---------------------------------------------------------------------------
# Min-max fusion of a KNN score with a base confidence
# ---------------------------------------------------------------------------

FUSION_KINDS = ("product", "sum", "max", "min")


@dataclass(frozen=True)
class MinMaxCoefficients:
    """Per-constituent normalization range fitted on the bank."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.hi > self.lo):
            raise DataError(
                f"degenerate min-max coefficients: max {self.hi} <= min {self.lo}"
            )

    def normalize(self, values):
        return (np.asarray(values, dtype=np.float64) - self.lo) / (self.hi - self.lo)


def fit_minmax(values) -> MinMaxCoefficients:
    values = np.asarray(values, dtype=np.float64)
    return MinMaxCoefficients(lo=float(values.min()), hi=float(values.max()))


def fuse(kind, knn_scores, base_scores, knn_coeff=None, base_coeff=None):
    """Naive fusion of the two constituent scores.

    product multiplies the raw scores; sum/max/min first normalize each
    constituent with its bank-fitted min-max coefficients.
    """
    knn_scores = np.asarray(knn_scores, dtype=np.float64)
    base_scores = np.asarray(base_scores, dtype=np.float64)
    if kind == "product":
        return knn_scores * base_scores
    if kind not in FUSION_KINDS:
        raise DataError(f"unknown fusion kind {kind!r}")
    if knn_coeff is None or base_coeff is None:
        raise DataError(f"{kind} fusion requires bank-fitted min-max coefficients")
    a = knn_coeff.normalize(knn_scores)
    b = base_coeff.normalize(base_scores)
    if kind == "sum":
        return a + b
    if kind == "max":
        return np.maximum(a, b)
    return np.minimum(a, b)


def ablation_score(
    kind,
    index: GuidanceIndex,
    query_feature,
    query_logits=None,
    head=None,
    base_kind=None,
    k=10,
    gaussian_model=None,
):
    """Scalar ablation variants of the guided score.

    - knn_avg: mean of the top-k plain similarities
    - guidance_only: the guidance term alone
    - no_conf_scaling: base confidence times knn_avg
    - mahal_guidance: base confidence times exp(-min_c mahal^2 / (2 d));
      requires a fitted GaussianModel
    """
    base_kind = base_kind or index.base_kind

    def base():
        if query_logits is None:
            raise DataError(f"{kind} requires query logits")
        return confidence_scores(
            base_kind,
            np.asarray(query_logits, dtype=np.float64)[None, :],
            np.asarray(query_feature, dtype=np.float64)[None, :],
            head,
        )[0]

    if kind == "knn_avg":
        return float(np.mean(plain_topk_similarities(index, query_feature, k)))
    if kind == "guidance_only":
        return guidance_term(index, query_feature, k)
    if kind == "no_conf_scaling":
        return float(base()) * float(
            np.mean(plain_topk_similarities(index, query_feature, k))
        )
    if kind == "mahal_guidance":
        if gaussian_model is None:
            raise DataError("mahal_guidance requires a fitted Gaussian model")
        from .distance import mahalanobis_sq_min

        d = np.asarray(query_feature).shape[-1]
        m2 = mahalanobis_sq_min(gaussian_model, query_feature)
        return float(base()) * float(np.exp(-m2 / (2.0 * d)))
    raise DataError(f"unknown ablation kind {kind!r}")
