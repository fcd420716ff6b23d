"""Per-sample selection scores computed from a forward pass.

Three scores share one container:

* minimal margin score (MMS): distance in feature space from a sample to the
  decision boundary between its two highest-scoring classes,
  ``(s1 - s2) / ||w_i1 - w_i2||``; small = uncertain, selected smallest-first;
* hard-negative score: the per-sample cross-entropy loss (needs labels),
  selected largest-first;
* entropy score: entropy of the softmax posterior, selected largest-first.

Ties in the top-two extraction are broken toward the lower class index so
runs are reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .model import ForwardResult, LinearHead
from .numerics import Vector, as_vector, log_softmax_rows

log = logging.getLogger(__name__)

# score kinds carried by ScoredPool
MMS = "mms"
LOSS = "loss"
ENTROPY = "entropy"


@dataclass(frozen=True)
class ScoredPool:
    """Selection scores for a candidate pool, aligned with pool row order.

    ``scores`` units depend on ``kind``: feature-space distance for mms, nats
    for loss and entropy.  ``top2`` holds (best, runner-up) class indices per
    sample with best-score-then-lowest-index ordering.
    """

    kind: str
    scores: np.ndarray  # (pool_size,)
    predicted: np.ndarray  # (pool_size,) int64
    top2: np.ndarray  # (pool_size, 2) int64

    @property
    def pool_size(self) -> int:
        return self.scores.shape[0]


def _top_two(logits: np.ndarray) -> np.ndarray:
    """Per-row (argmax, runner-up) with ties broken by lower class index."""
    # stable sort on -logits keeps lower indices first among equal scores
    order = np.argsort(-logits, axis=1, kind="stable")
    return order[:, :2].astype(np.int64)


def mms_scores(fr: ForwardResult, head: LinearHead) -> ScoredPool:
    """Minimal margin score per pool sample.

    Degenerate pairs with identical weight rows have no boundary in feature
    space: the score is 0 when the logits also tie (the sample sits on the
    everywhere-boundary) and +inf when they differ only by bias (no feature
    displacement can ever flip the prediction).  Both cases are logged.
    """
    logits = fr.logits
    if logits.shape[1] != head.n_classes:
        raise DimensionError(
            f"forward has {logits.shape[1]} classes, head has {head.n_classes}"
        )
    if fr.features.shape[1] != head.feat_dim:
        raise DimensionError(
            f"forward features dim {fr.features.shape[1]} != head feat_dim {head.feat_dim}"
        )
    top2 = _top_two(logits)
    i1 = top2[:, 0]
    i2 = top2[:, 1]
    rows = np.arange(logits.shape[0])
    gap = logits[rows, i1] - logits[rows, i2]  # >= 0 by construction
    wdiff = head.weights[i1] - head.weights[i2]
    denom = np.sqrt((wdiff * wdiff).sum(axis=1))

    scores = np.empty_like(gap)
    regular = denom > 0.0
    scores[regular] = gap[regular] / denom[regular]
    for k in np.nonzero(~regular)[0]:
        if gap[k] == 0.0:
            scores[k] = 0.0
            log.warning(
                "sample %d: top-two weight rows identical and logits tie; score 0", k
            )
        else:
            scores[k] = np.inf
            log.warning(
                "sample %d: top-two weight rows identical, logits differ by bias "
                "only; score +inf",
                k,
            )
    return ScoredPool(kind=MMS, scores=scores, predicted=i1.copy(), top2=top2)


def boundary_displacement(y: Vector, head: LinearHead, i1: int, i2: int) -> Vector:
    """Least-norm feature displacement putting ``y`` on the class i1/i2 boundary.

    Returns dy with f_i1(y + dy) = f_i2(y + dy) and ||dy|| equal to the margin
    score of the pair.
    """
    y = as_vector(y, length=head.feat_dim)
    if not (0 <= i1 < head.n_classes and 0 <= i2 < head.n_classes) or i1 == i2:
        raise ConfigError(f"invalid class pair ({i1}, {i2})")
    wdiff = head.weights[i1] - head.weights[i2]
    denom2 = float(wdiff @ wdiff)
    if denom2 == 0.0:
        raise ConfigError(
            f"classes {i1} and {i2} share one weight row; no boundary in feature space"
        )
    gap = float((head.weights[i1] - head.weights[i2]) @ y + head.biases[i1] - head.biases[i2])
    return -gap * wdiff / denom2


def hnm_scores(fr: ForwardResult, labels) -> ScoredPool:
    """Per-sample cross-entropy loss in nats; hard negatives score highest."""
    labels = np.asarray(labels, dtype=np.int64)
    n = fr.logits.shape[0]
    if labels.ndim != 1 or labels.shape[0] != n:
        raise DimensionError("labels must align with the pool rows")
    n_classes = fr.logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ConfigError(f"label out of range [0, {n_classes})")
    logp = log_softmax_rows(fr.logits)
    scores = -logp[np.arange(n), labels]
    top2 = _top_two(fr.logits)
    return ScoredPool(kind=LOSS, scores=scores, predicted=top2[:, 0].copy(), top2=top2)


def entropy_scores(fr: ForwardResult) -> ScoredPool:
    """Posterior entropy -sum p ln p in nats, in [0, ln n_classes]."""
    logp = log_softmax_rows(fr.logits)
    p = np.exp(logp)
    scores = -(p * logp).sum(axis=1)
    top2 = _top_two(fr.logits)
    return ScoredPool(kind=ENTROPY, scores=scores, predicted=top2[:, 0].copy(), top2=top2)
