"""Cosine similarity, pair mining by place label, and the multi-similarity
loss with its analytic gradient.

Loss over an m-image batch with per-anchor positive sets P_i and negative
sets N_i:

    L = (1/m) * sum_i { (1/alpha) * log[1 + sum_{k in P_i} exp(-alpha*(S_ik - margin))]
                      + (1/beta)  * log[1 + sum_{k in N_i} exp( beta*(S_ik - margin))] }

Empty sets contribute log(1) = 0. All log-sum terms are evaluated with a
shifted log-sum-exp so beta*(S - margin) magnitudes of ~100 stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import ShapeError, require_finite

__all__ = [
    "LossConfig",
    "PairSets",
    "similarity_matrix",
    "mine_pairs",
    "ms_loss",
    "ms_loss_backward",
    "descriptor_grads",
]

MINING_ALL_PAIRS = "all_pairs"
MINING_HARDEST_MARGIN = "hardest_margin"


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 2.0
    beta: float = 50.0
    margin: float = 0.5
    mining: str = MINING_HARDEST_MARGIN
    epsilon: float = 0.1  # hardest_margin slack

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.mining not in (MINING_ALL_PAIRS, MINING_HARDEST_MARGIN):
            raise ValueError(f"unknown mining mode {self.mining!r}")


@dataclass
class PairSets:
    """Per-anchor index lists; positives[i] never contains i."""

    positives: list[np.ndarray]
    negatives: list[np.ndarray]

    def __len__(self):
        return len(self.positives)


def similarity_matrix(descriptors):
    """Pairwise dot products of unit-norm descriptors: S[i, j] = d_i . d_j."""
    d = np.asarray(descriptors)
    if d.ndim != 2:
        raise ShapeError(f"descriptors must be stacked (m, dim), got {d.shape}")
    require_finite("descriptors", d)
    norms = np.sqrt((d * d).sum(axis=1))
    bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-3)
    if bad.size:
        raise ValueError(
            f"descriptor {bad[0]} is not unit-norm (|v| = {norms[bad[0]]:.6f})"
        )
    return d @ d.T


def mine_pairs(labels, cfg, similarities=None):
    """Select the positive/negative pairs each anchor contributes.

    all_pairs keeps the full label-defined sets. hardest_margin keeps
    negatives with S > min(S over P_i) - epsilon and positives with
    S < max(S over N_i) + epsilon, so it needs the similarity matrix; an
    anchor with no positives (or no negatives) mines an empty opposite set.
    """
    labels = list(labels)
    m = len(labels)
    if m < 2:
        raise ValueError(f"need at least 2 labels to form pairs, got {m}")
    if cfg.mining == MINING_HARDEST_MARGIN and similarities is None:
        raise ValueError("hardest_margin mining requires the similarity matrix")

    positives = []
    negatives = []
    for i in range(m):
        pos = np.array([k for k in range(m) if k != i and labels[k] == labels[i]], dtype=np.intp)
        neg = np.array([k for k in range(m) if labels[k] != labels[i]], dtype=np.intp)
        if cfg.mining == MINING_HARDEST_MARGIN:
            s_i = np.asarray(similarities)[i]
            if pos.size and neg.size:
                keep_neg = s_i[neg] > s_i[pos].min() - cfg.epsilon
                keep_pos = s_i[pos] < s_i[neg].max() + cfg.epsilon
                pos, neg = pos[keep_pos], neg[keep_neg]
            else:
                pos = pos[:0]
                neg = neg[:0]
        positives.append(pos)
        negatives.append(neg)
    return PairSets(positives=positives, negatives=negatives)


def _log1p_sum_exp(x):
    """log(1 + sum_k exp(x_k)) via log-sum-exp over x extended with 0."""
    if x.size == 0:
        return 0.0
    hi = max(float(x.max()), 0.0)
    return hi + np.log(np.exp(-hi) + np.exp(x - hi).sum())


def ms_loss(similarities, pairs, cfg):
    """Multi-similarity loss averaged over anchors."""
    s = np.asarray(similarities)
    m = len(pairs)
    if s.shape != (m, m):
        raise ShapeError(f"similarity matrix {s.shape} does not match {m} anchors")
    require_finite("similarities", s)

    total = 0.0
    for i in range(m):
        pos = pairs.positives[i]
        neg = pairs.negatives[i]
        if pos.size:
            total += _log1p_sum_exp(-cfg.alpha * (s[i, pos] - cfg.margin)) / cfg.alpha
        if neg.size:
            total += _log1p_sum_exp(cfg.beta * (s[i, neg] - cfg.margin)) / cfg.beta
    return total / m


def ms_loss_backward(similarities, pairs, cfg):
    """dL/dS, zero for pairs mined into neither set.

    For k in P_i the entry is -(1/m) * softmax-with-1 weight; for k in N_i
    it is +(1/m) * softmax-with-1 weight, where the weight of x_k against
    log(1 + sum exp(x)) is exp(x_k - log(1 + sum exp(x))).
    """
    s = np.asarray(similarities)
    m = len(pairs)
    if s.shape != (m, m):
        raise ShapeError(f"similarity matrix {s.shape} does not match {m} anchors")
    require_finite("similarities", s)

    grad = np.zeros_like(s, dtype=np.float64)
    for i in range(m):
        pos = pairs.positives[i]
        neg = pairs.negatives[i]
        if pos.size:
            x = -cfg.alpha * (s[i, pos] - cfg.margin)
            grad[i, pos] -= np.exp(x - _log1p_sum_exp(x))
        if neg.size:
            x = cfg.beta * (s[i, neg] - cfg.margin)
            grad[i, neg] += np.exp(x - _log1p_sum_exp(x))
    grad /= m
    return grad.astype(s.dtype, copy=False)


def descriptor_grads(descriptors, grad_similarities):
    """Chain dL/dS through S = D @ D.T: dL/dD = (dS + dS.T) @ D."""
    d = np.asarray(descriptors)
    g = np.asarray(grad_similarities)
    if g.shape != (d.shape[0], d.shape[0]):
        raise ShapeError(f"grad {g.shape} does not match {d.shape[0]} descriptors")
    return (g + g.T) @ d
