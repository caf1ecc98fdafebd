"""Binary cross-entropy, margin contrastive loss with hardest-pair mining,
and the combined training objective."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import numerics as nx
from .numerics import ConfigurationError

P_MIN, P_MAX = 1e-7, 1 - 1e-7


@dataclass(frozen=True)
class ContrastiveConfig:
    m_pos: float = 0.2
    m_neg: float = 1.0
    weight: float = 1.0
    hinge: bool = True

    def __post_init__(self):
        if not 0 <= self.m_pos < self.m_neg:
            raise ConfigurationError(f"need 0 <= m_pos < m_neg, got {self.m_pos}, {self.m_neg}")
        if self.weight < 0:
            raise ConfigurationError(f"contrastive weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class PairIndices:
    """Mined pairs; a missing pair type is None."""

    hardest_positive: tuple = None
    hardest_negative: tuple = None
    d_pos: float = 0.0
    d_neg: float = 0.0


def bce_terms(p, y):
    """Per-sample clamped binary cross-entropy (Tensor in, Tensor out)."""
    y = np.asarray(y, dtype=p.value.dtype)
    pc = nx.clip(p, P_MIN, P_MAX)
    return -(nx.log(pc) * y + nx.log(1.0 - pc) * (1.0 - y))


def bce_loss(p, y):
    """Mean clamped BCE. Accepts floats/arrays (returns float) or a Tensor."""
    if isinstance(p, nx.Tensor):
        return nx.mean(bce_terms(p, y))
    p = np.clip(np.asarray(p, dtype=np.float64), P_MIN, P_MAX)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


def mine_hard_pairs(embeddings, labels):
    """Farthest same-label pair and closest different-label pair.

    Pairs are (i, j) with i < j; ties go to the smallest (i, j).
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim == 1:
        emb = emb[:, None]
    ip, jp, dp2, in_, jn, dn2 = kernels.hardest_pairs(emb, np.asarray(labels))
    return PairIndices(
        (ip, jp) if ip >= 0 else None,
        (in_, jn) if in_ >= 0 else None,
        float(np.sqrt(dp2)),
        float(np.sqrt(dn2)),
    )


def _pair_distance(emb, pair):
    diff = nx.take(emb, [pair[0]], axis=0) - nx.take(emb, [pair[1]], axis=0)
    return nx.sqrt(nx.sum(diff * diff))


def contrastive_from_distances(d_pos, d_neg, cfg=ContrastiveConfig()):
    """Scalar version on plain distances (None marks an absent term)."""
    total = 0.0
    if d_pos is not None:
        total += max(0.0, d_pos - cfg.m_pos) if cfg.hinge else d_pos - cfg.m_pos
    if d_neg is not None:
        total += max(0.0, cfg.m_neg - d_neg) if cfg.hinge else cfg.m_neg - d_neg
    return total


def contrastive_loss(embeddings, labels, cfg=ContrastiveConfig()):
    """Margin loss over the mined hardest pairs.

    ``embeddings`` is an (n, D) Tensor (differentiable) or array (float out).
    """
    if not isinstance(embeddings, nx.Tensor):
        pairs = mine_hard_pairs(embeddings, labels)
        return contrastive_from_distances(
            pairs.d_pos if pairs.hardest_positive else None,
            pairs.d_neg if pairs.hardest_negative else None,
            cfg,
        )
    pairs = mine_hard_pairs(embeddings.value, labels)
    total = nx.tensor(0.0, dtype=embeddings.value.dtype)
    if pairs.hardest_positive is not None:
        term = _pair_distance(embeddings, pairs.hardest_positive) - cfg.m_pos
        total = total + (nx.relu(term) if cfg.hinge else term)
    if pairs.hardest_negative is not None:
        term = cfg.m_neg - _pair_distance(embeddings, pairs.hardest_negative)
        total = total + (nx.relu(term) if cfg.hinge else term)
    return total


def total_loss(head_outputs, labels, cfg=ContrastiveConfig(), contrastive=True):
    """Mean BCE over every routed sample plus weight * per-head contrastive.

    ``head_outputs`` are model.HeadOutput; ``labels`` is indexed by batch
    position. Returns (loss Tensor, parts dict of floats).
    """
    labels = np.asarray(labels)
    n = int(np.sum([len(h.index) for h in head_outputs]))
    bce_sum = None
    contrast = None
    for h in head_outputs:
        y = labels[h.index]
        s = nx.sum(bce_terms(h.prob, y))
        bce_sum = s if bce_sum is None else bce_sum + s
        if contrastive and cfg.weight > 0:
            c = contrastive_loss(h.embedding, y, cfg)
            contrast = c if contrast is None else contrast + c
    loss = bce_sum * (1.0 / n)
    parts = {"bce": float(loss.value), "contrastive": 0.0}
    if contrast is not None:
        parts["contrastive"] = float(contrast.value)
        loss = loss + contrast * cfg.weight
    return loss, parts
