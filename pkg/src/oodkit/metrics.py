"""Detection metrics and the thresholded ID/OOD decision.

ID samples are the positive class everywhere. The decision rule is
inclusive: a sample is ID iff score >= tau, and every metric uses the same
rule so boundary samples are treated consistently.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


def decide(score, tau):
    """Threshold rule: ID iff score >= tau."""
    return "ID" if score >= tau else "OOD"


def _check_scores(id_scores, ood_scores):
    id_scores = np.asarray(id_scores, dtype=np.float64).ravel()
    ood_scores = np.asarray(ood_scores, dtype=np.float64).ravel()
    if id_scores.size == 0 or ood_scores.size == 0:
        raise DataError("metrics need at least one ID score and one OOD score")
    return id_scores, ood_scores


def fpr_at_tpr(id_scores, ood_scores, tpr_target=0.95):
    """False-positive rate at the smallest threshold admitting at least
    ``tpr_target`` of the ID scores under the >= rule.

    The threshold is the m-th largest ID score with m = ceil(tpr_target *
    |ID|), so the realized TPR is never below the target; with small sets
    the ceiling is visible.
    """
    id_scores, ood_scores = _check_scores(id_scores, ood_scores)
    m = math.ceil(tpr_target * id_scores.size)
    tau = np.sort(id_scores)[::-1][m - 1]
    return float(np.mean(ood_scores >= tau))


def auroc(id_scores, ood_scores):
    """Mann-Whitney statistic P(ID > OOD) + 0.5 * P(ID = OOD), computed by
    rank summation with average ranks for ties."""
    id_scores, ood_scores = _check_scores(id_scores, ood_scores)
    m, n = id_scores.size, ood_scores.size
    ranks = rankdata(np.concatenate([id_scores, ood_scores]))
    return float((ranks[:m].sum() - m * (m + 1) / 2.0) / (m * n))


def aupr(id_scores, ood_scores):
    """Average precision with ID positive: thresholds sweep the distinct
    scores in descending order, ties processed as one block, and
    AP = sum_t (R_t - R_{t-1}) * P_t."""
    id_scores, ood_scores = _check_scores(id_scores, ood_scores)
    scores = np.concatenate([id_scores, ood_scores])
    positive = np.concatenate(
        [np.ones(id_scores.size, bool), np.zeros(ood_scores.size, bool)]
    )
    order = np.argsort(-scores, kind="stable")
    scores, positive = scores[order], positive[order]
    # block boundaries: last occurrence of each distinct score value
    boundary = np.flatnonzero(np.diff(scores) != 0)
    ends = np.append(boundary, scores.size - 1)
    cum_tp = np.cumsum(positive)[ends]
    predicted = ends + 1
    precision = cum_tp / predicted
    recall = cum_tp / id_scores.size
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


@dataclass(frozen=True)
class EvalRow:
    score: str
    ood_set: str
    fpr95: float
    auroc: float
    aupr: float

    def __post_init__(self):
        for name in ("fpr95", "auroc", "aupr"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise DataError(f"{name}={v} outside [0, 1]")


@dataclass
class EvalTable:
    """FPR95/AUROC/AUPR per (score, OOD set), plus a derived per-score
    "average" row (arithmetic mean across that score's OOD sets)."""

    rows: list = field(default_factory=list)

    def add(self, score, ood_set, fpr95_value, auroc_value, aupr_value):
        if ood_set == AVERAGE_SET:
            raise DataError(f"{AVERAGE_SET!r} is a reserved OOD set name")
        self.rows.append(
            EvalRow(score, ood_set, float(fpr95_value), float(auroc_value),
                    float(aupr_value))
        )

    def scores(self):
        seen = []
        for row in self.rows:
            if row.score not in seen:
                seen.append(row.score)
        return seen

    def average_rows(self):
        out = []
        for score in self.scores():
            group = [r for r in self.rows if r.score == score]
            out.append(
                EvalRow(
                    score,
                    AVERAGE_SET,
                    float(np.mean([r.fpr95 for r in group])),
                    float(np.mean([r.auroc for r in group])),
                    float(np.mean([r.aupr for r in group])),
                )
            )
        return out

    def all_rows(self):
        """Data rows grouped by score, each group followed by its average."""
        out = []
        for score in self.scores():
            group = [r for r in self.rows if r.score == score]
            out.extend(group)
            out.extend(r for r in self.average_rows() if r.score == score)
        return out

    def to_tsv(self) -> str:
        """Machine-readable form; floats use repr so parsing is lossless."""
        lines = ["score\tood\tfpr95\tauroc\taupr"]
        for r in self.all_rows():
            lines.append(
                f"{r.score}\t{r.ood_set}\t{r.fpr95!r}\t{r.auroc!r}\t{r.aupr!r}"
            )
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        """Human-readable aligned table (4 decimal places)."""
        rows = self.all_rows()
        score_w = max([len("score")] + [len(r.score) for r in rows])
        ood_w = max([len("ood")] + [len(r.ood_set) for r in rows])
        header = (
            f"{'score':<{score_w}}  {'ood':<{ood_w}}  "
            f"{'fpr95':>8}  {'auroc':>8}  {'aupr':>8}"
        )
        lines = [header, "-" * len(header)]
        for r in rows:
            lines.append(
                f"{r.score:<{score_w}}  {r.ood_set:<{ood_w}}  "
                f"{r.fpr95:>8.4f}  {r.auroc:>8.4f}  {r.aupr:>8.4f}"
            )
        return "\n".join(lines) + "\n"


AVERAGE_SET = "average"


def parse_eval_table(text) -> EvalTable:
    """Inverse of EvalTable.to_tsv (average rows are recomputed)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t") != ["score", "ood", "fpr95", "auroc", "aupr"]:
        raise DataError("not an EvalTable TSV: bad header")
    table = EvalTable()
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != 5:
            raise DataError(f"bad EvalTable line: {ln!r}")
        score, ood_set, *vals = parts
        if ood_set == AVERAGE_SET:
            continue
        table.add(score, ood_set, *(float(v) for v in vals))
    return table
