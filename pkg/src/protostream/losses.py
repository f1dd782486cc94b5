"""Training objective: prototype-softmax cross entropy plus a margin
contrastive term over all unordered pairs in the batch."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractViolation, Tensor
from .prototypes import PrototypeMemory

log = logging.getLogger(__name__)


@dataclass
class LossReport:
    total: float
    ce_term: float
    contrastive_term: float
    positive_pairs: int
    negative_pairs: int


def proto_cross_entropy(embeddings: Tensor, labels: np.ndarray,
                        memory: PrototypeMemory) -> Tensor:
    """Mean -log p(label) under softmax over negative squared distances.

    Prototypes enter as constants; gradient flows only through the query
    embeddings.
    """
    ids = memory.class_ids
    index_of = {c: i for i, c in enumerate(ids)}
    labels = np.asarray(labels)
    unknown = [int(c) for c in np.unique(labels) if int(c) not in index_of]
    if unknown:
        raise ContractViolation(f"labels {unknown} missing from prototype memory")
    protos = Tensor(memory.matrix())
    logits = -ad.pairwise_sqdist(embeddings, protos)
    label_idx = np.array([index_of[int(c)] for c in labels])
    return ad.softmax_cross_entropy(logits, label_idx)


def contrastive(embeddings: Tensor, labels: np.ndarray, margin: float) -> Tensor:
    """Mean over unordered pairs: squared distance for same-class pairs,
    hinge max(0, margin - squared distance) for different-class pairs."""
    if margin <= 0:
        raise ContractViolation("margin must be positive")
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n < 2:
        log.warning("contrastive loss needs >= 2 samples, got %d; returning 0", n)
        return Tensor(0.0)
    dists = ad.pairwise_sqdist(embeddings, embeddings)
    upper = np.triu(np.ones((n, n)), k=1)
    same = (labels[:, None] == labels[None, :]).astype(np.float64)
    pos_term = ad.tsum(ad.mul(dists, Tensor(upper * same)))
    hinge = ad.relu(ad.sub(float(margin), dists))
    neg_term = ad.tsum(ad.mul(hinge, Tensor(upper * (1.0 - same))))
    n_pairs = n * (n - 1) // 2
    return ad.mul(ad.add(pos_term, neg_term), 1.0 / n_pairs)


def combined(embeddings: Tensor, labels: np.ndarray, memory: PrototypeMemory,
             margin: float, contrastive_on: bool = True) -> tuple[Tensor, LossReport]:
    """Total objective; contrastive term can be ablated away."""
    labels = np.asarray(labels)
    ce = proto_cross_entropy(embeddings, labels, memory)
    if contrastive_on:
        con = contrastive(embeddings, labels, margin)
        total = ad.add(ce, con)
        iu, ju = np.triu_indices(labels.shape[0], k=1)
        positives = int((labels[iu] == labels[ju]).sum())
        negatives = int(iu.shape[0] - positives)
    else:
        con = Tensor(0.0)
        total = ce
        positives = negatives = 0
    report = LossReport(
        total=float(total.data),
        ce_term=float(ce.data),
        contrastive_term=float(con.data),
        positive_pairs=positives,
        negative_pairs=negatives,
    )
    return total, report
