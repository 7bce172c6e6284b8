"""oodkit: post-hoc out-of-distribution detection over feature banks."""

__version__ = "0.1.0"

from .bank import (
    ClassifierHead,
    FeatureBank,
    read_bank,
    read_bank_csv,
    subsample_bank,
    with_logits,
    write_bank,
)
from .confidence import (
    CONFIDENCE_KINDS,
    NegativeConfidenceWarning,
    ScoreReport,
    base_confidence,
    batch_confidence,
    softmax,
)
from .detectors import (
    ConfidenceDetector,
    FusionDetector,
    KNNDetector,
    MahalanobisDetector,
    MahalanobisGuidanceDetector,
    NNGuideDetector,
    ReactDetector,
    SCORE_NAMES,
    VimDetector,
    make_detector,
)
from .distance import (
    GaussianModel,
    VimModel,
    fit_gaussian,
    fit_vim,
    gaussian_score,
    knn_score,
    vim_score,
)
from .errors import BankFormatError, DataError, NumericalError, OodkitError
from .guidance import (
    GuidanceIndex,
    KClampedWarning,
    ablation_score,
    batch_guided_scores,
    build_index,
    guidance_term,
    nnguide_score,
    scaled_topk,
)
from .metrics import EvalTable, auroc, aupr, decide, fpr_at_tpr, parse_eval_table
from .react import ReactClipper, ReactThreshold, apply_react, fit_react
from .toy import ToyConfig, fit_softmax_head, grid_scores, make_toy

__all__ = [name for name in dir() if not name.startswith("_")]
