"""Training objective for the repeat scorer.

Per sample, predicted scores and measured repeat gains over the candidate set
are standardized and matched with a mean-squared regression loss; a margin
ranking loss additionally pushes every positive-gain frame above every
negative-gain frame and above randomly drawn non-candidate frames. The final
objective is the weighted sum of the two. Scores may be taped tensors, so the
losses are differentiable end to end through the scorer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import ConfigError, DegenerateInputError, DimensionError


@dataclass(frozen=True)
class LossConfig:
    reg_weight: float = 1.0
    rank_weight: float = 0.1
    margin: float = 0.2
    eps: float = 1e-6
    n_extra_negatives: int = 16

    def __post_init__(self) -> None:
        if self.reg_weight < 0 or self.rank_weight < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")
        if self.n_extra_negatives < 0:
            raise ConfigError("n_extra_negatives must be >= 0")


def standardize(x, eps: float = 1e-6) -> nm.Tensor:
    """(x - mean) / (population std + eps); requires at least two elements."""
    x = nm.as_tensor(x)
    n = x.data.size
    if n < 2:
        raise DegenerateInputError(f"standardize needs >= 2 values, got {n}")
    centered = x - nm.mean(x)
    # the additive 1e-300 never changes the value but keeps the sqrt gradient
    # defined when every input is identical (variance exactly zero)
    std = nm.sqrt(nm.mean(centered * centered) + 1e-300)
    return centered / (std + eps)


def regression_loss(scores, gains, eps: float = 1e-6) -> nm.Tensor:
    """Mean squared difference between the standardized scores and gains."""
    scores = nm.as_tensor(scores)
    gains = np.asarray(gains, dtype=np.float64)
    if scores.data.shape != gains.shape:
        raise DimensionError(
            f"scores shape {scores.data.shape} != gains shape {gains.shape}"
        )
    diff = standardize(scores, eps) - standardize(gains, eps).data
    return nm.mean(diff * diff)


def ranking_loss(scores, gains, extra_scores=None, margin: float = 0.2) -> nm.Tensor:
    """Pairwise hinge on raw scores: positives above negatives-and-extras by `margin`.

    Positives are candidates with gain > 0, negatives gain < 0; zero-gain
    candidates sit out. Returns 0 when either side is empty.
    """
    scores = nm.as_tensor(scores)
    gains = np.asarray(gains, dtype=np.float64)
    if scores.data.shape != gains.shape:
        raise DimensionError(
            f"scores shape {scores.data.shape} != gains shape {gains.shape}"
        )
    pos_idx = np.flatnonzero(gains > 0)
    neg_idx = np.flatnonzero(gains < 0)

    negatives = []
    if neg_idx.size:
        negatives.append(nm.take(scores, neg_idx))
    if extra_scores is not None:
        extra_scores = nm.as_tensor(extra_scores)
        if extra_scores.data.size:
            negatives.append(extra_scores)
    if not pos_idx.size or not negatives:
        return nm.as_tensor(0.0)

    pos = nm.reshape(nm.take(scores, pos_idx), (pos_idx.size, 1))
    neg = nm.concat(negatives, axis=0)
    neg_row = nm.reshape(neg, (1, neg.data.size))
    hinge = nm.relu(neg_row - pos + margin)
    # each row shares the same |C^- ∪ U|, so the mean of means is the flat mean
    return nm.mean(hinge)


def total_loss(scores, candidates, gains, extras, config: LossConfig) -> nm.Tensor:
    """Weighted objective over one sample.

    `scores` covers all n frames (tensor while training); `candidates` indexes
    the scanned frames, `gains` aligns with them, and `extras` are
    non-candidate frames serving as additional ranking negatives.
    """
    scores = nm.as_tensor(scores)
    candidates = np.asarray(candidates, dtype=np.intp)
    gains = np.asarray(gains, dtype=np.float64)
    if candidates.shape != gains.shape:
        raise DimensionError("candidates and gains must align")
    cand_scores = nm.take(scores, candidates)
    loss = config.reg_weight * regression_loss(cand_scores, gains, config.eps)
    if config.rank_weight > 0:
        extras = np.asarray(extras, dtype=np.intp)
        extra_scores = nm.take(scores, extras) if extras.size else None
        loss = loss + config.rank_weight * ranking_loss(
            cand_scores, gains, extra_scores, config.margin
        )
    return loss
