"""Synthetic 2-D lab: two Gaussian blobs, a near-OOD band between them,
and a far-OOD ring, plus score heatmaps over a lattice.

The construction is a concrete stand-in for the usual two-class toy: the
2-D points are used directly as penultimate features for a multinomial
logistic head, which keeps the whole experiment self-contained and fast.
The near set stresses fine-grained (between-class) detection; the ring
stresses far-field overconfidence.
"""

from dataclasses import dataclass, field

import numpy as np

from .bank import ClassifierHead, FeatureBank, with_logits
from .detectors import make_detector
from .errors import DataError
from .guidance import GuidanceIndex
from .confidence import CONFIDENCE_KINDS, confidence_scores
from . import guidance

GRID_SCORES = CONFIDENCE_KINDS + (
    "knn",
    "knn-avg",
    "nnguide",
    "nnguide-msp",
    "nnguide-maxlogit",
    "nnguide-kl",
    "nnguide-gradnorm",
    "guidance-only",
    "no-scale",
)


@dataclass
class ToyConfig:
    # Off-origin blobs make the cosine geometry non-trivial: the band
    # between the classes points in nearly the same direction as the data,
    # so plain KNN cannot separate it.
    class_means: np.ndarray = field(
        default_factory=lambda: np.array([[4.0, 1.0], [6.0, 3.0]])
    )
    class_std: float = 0.3
    n_per_class: int = 200
    grid_extent: float = 24.0
    grid_resolution: int = 64
    seed: int = 0

    def __post_init__(self):
        self.class_means = np.asarray(self.class_means, dtype=np.float64)
        if self.class_means.shape != (2, 2):
            raise DataError("class_means must be 2x2 (two classes in 2-D)")
        if self.class_std <= 0:
            raise DataError("class_std must be positive")
        if self.grid_resolution < 2:
            raise DataError("grid_resolution must be >= 2")


def make_toy(config: ToyConfig):
    """Deterministic (per seed) train/near/far banks.

    train: two Gaussian blobs with labels. near: points on the
    perpendicular bisector band between the means, within 0.5 * class_std
    of the midline and inside the train hull's extent along the bisector.
    far: points uniform on a ring of radius 6x the inter-mean distance
    centered at the blob centroid.
    """
    rng = np.random.default_rng(config.seed)
    means = config.class_means
    npc = config.n_per_class
    train_features = np.concatenate(
        [m + config.class_std * rng.standard_normal((npc, 2)) for m in means]
    )
    labels = np.repeat(np.arange(2), npc)
    train = FeatureBank(features=train_features, K=2, labels=labels)

    delta = float(np.linalg.norm(means[1] - means[0]))
    mid = means.mean(axis=0)
    u = (means[1] - means[0]) / delta  # inter-mean direction
    v = np.array([-u[1], u[0]])  # bisector direction

    along = (train_features - mid) @ v
    t = rng.uniform(along.min(), along.max(), npc)
    offset = rng.uniform(-0.5 * config.class_std, 0.5 * config.class_std, npc)
    near = FeatureBank(features=mid + np.outer(t, v) + np.outer(offset, u), K=2)

    theta = rng.uniform(0.0, 2.0 * np.pi, npc)
    ring = mid + 6.0 * delta * np.c_[np.cos(theta), np.sin(theta)]
    far = FeatureBank(features=ring, K=2)
    return train, near, far


def fit_softmax_head(train: FeatureBank, lr=0.1, iters=2000) -> ClassifierHead:
    """Multinomial logistic regression by full-batch gradient descent on
    the raw features; the learning rate is halved whenever the loss
    increases, so training is monotone for small enough steps."""
    if train.labels is None:
        raise DataError("fitting a head requires labels")
    classes = np.unique(train.labels)
    if classes.size < 2:
        raise DataError("need at least two classes")
    K = int(classes.max()) + 1
    X, y = train.features, train.labels
    n, d = X.shape
    W = np.zeros((K, d))
    b = np.zeros(K)
    onehot = np.eye(K)[y]
    prev_loss = np.inf
    for _ in range(int(iters)):
        logits = X @ W.T + b
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = -logp[np.arange(n), y].mean()
        if loss > prev_loss:
            lr *= 0.5
        prev_loss = loss
        grad = (np.exp(logp) - onehot) / n
        W -= lr * grad.T @ X
        b -= lr * grad.sum(axis=0)
    return ClassifierHead(W=W, b=b)


def _grid_points(config: ToyConfig):
    axis = np.linspace(-config.grid_extent, config.grid_extent, config.grid_resolution)
    xx, yy = np.meshgrid(axis, axis)  # row i: y_i ascending; col j: x_j
    pts = np.c_[xx.ravel(), yy.ravel()]
    # cosine scores are undefined exactly at the origin; nudge that single
    # lattice point if the resolution happens to produce it
    zero = np.flatnonzero((pts == 0.0).all(axis=1))
    if zero.size:
        pts[zero, 0] = config.grid_extent * 1e-12
    return pts


def _grid_score_values(head, index: GuidanceIndex, score_name, points, k=10):
    if score_name not in GRID_SCORES:
        raise DataError(
            f"unknown or unsupported grid score {score_name!r}; "
            f"available: {', '.join(GRID_SCORES)}"
        )
    logits = head.logits(points)
    if score_name in CONFIDENCE_KINDS:
        return confidence_scores(score_name, logits, points, head)
    if score_name == "knn":
        return guidance.batch_plain_topk(index, points, k)[:, -1]
    if score_name == "knn-avg":
        return guidance.batch_plain_topk(index, points, k).mean(axis=1)
    if score_name == "guidance-only":
        return guidance.batch_guidance_terms(index, points, k)
    if score_name == "no-scale":
        base = confidence_scores(index.base_kind, logits, points, head)
        return base * guidance.batch_plain_topk(index, points, k).mean(axis=1)
    base_kind = score_name.removeprefix("nnguide-") if "-" in score_name else "energy"
    base = confidence_scores(base_kind, logits, points, head)
    return base * guidance.batch_guidance_terms(index, points, k)


def write_pgm(path, grid):
    """8-bit binary portable graymap, min-max normalized over the grid;
    a constant grid renders mid-gray."""
    grid = np.asarray(grid, dtype=np.float64)
    lo, hi = grid.min(), grid.max()
    if hi > lo:
        pixels = np.round((grid - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pixels = np.full(grid.shape, 127, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_grid_csv(path, grid):
    with open(path, "w", newline="") as fh:
        for row in np.asarray(grid, dtype=np.float64):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def grid_scores(head, index: GuidanceIndex, score_name, config: ToyConfig,
                out_dir=None, k=10):
    """Evaluate a score over the lattice on [-extent, extent]^2.

    Returns the (resolution, resolution) value matrix with row i holding
    y_i ascending and column j holding x_j ascending. When ``out_dir`` is
    given, also emits <score>.csv (the raw matrix) and <score>.pgm (8-bit
    graymap, per-grid min-max normalized).
    """
    points = _grid_points(config)
    values = _grid_score_values(head, index, score_name, points, k)
    grid = values.reshape(config.grid_resolution, config.grid_resolution)
    if out_dir is not None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_grid_csv(out / f"{score_name}.csv", grid)
        write_pgm(out / f"{score_name}.pgm", grid)
    return grid


def toy_banks_with_logits(config: ToyConfig, lr=0.1, iters=2000):
    """Convenience pipeline: datasets, fitted head, and logits attached."""
    train, near, far = make_toy(config)
    head = fit_softmax_head(train, lr=lr, iters=iters)
    return (
        with_logits(train, head),
        with_logits(near, head),
        with_logits(far, head),
        head,
    )


def toy_auroc(config: ToyConfig, score_name, k=10):
    """AUROC of a score on (fresh ID vs near) and (fresh ID vs far)."""
    from .metrics import auroc

    train, near, far, head = toy_banks_with_logits(config)
    eval_cfg = ToyConfig(
        class_means=config.class_means,
        class_std=config.class_std,
        n_per_class=config.n_per_class,
        grid_extent=config.grid_extent,
        grid_resolution=config.grid_resolution,
        seed=config.seed + 1_000_003,
    )
    fresh_id = with_logits(make_toy(eval_cfg)[0], head)
    det = make_detector(score_name, k=k).fit_bank(train, head)
    id_scores = det.score_bank(fresh_id)
    return (
        auroc(id_scores, det.score_bank(near)),
        auroc(id_scores, det.score_bank(far)),
    )
