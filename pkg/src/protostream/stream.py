"""Task-free data-incremental protocol: base/new class split, pretrain
fraction, and randomized batch generation with a class-count cap."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractViolation
from .batch import LabeledBatch

log = logging.getLogger(__name__)

MAX_CLASSES_PER_BATCH = 5
DEFAULT_BATCH_SIZE = 20


@dataclass
class Dataset:
    """Windowed dataset with a train/test partition."""

    train: LabeledBatch
    test: LabeledBatch

    @property
    def class_ids(self) -> list[int]:
        return sorted(set(self.train.classes()) | set(self.test.classes()))


@dataclass
class StreamBatch:
    step: int
    batch: LabeledBatch
    sample_ids: np.ndarray  # indices into the original training arrays


@dataclass
class Split:
    """Base/new class split with the pretraining set carved out."""

    base_classes: list[int]
    new_classes: list[int]
    pretrain: LabeledBatch           # D_0
    pool: LabeledBatch               # streaming pool
    pool_ids: np.ndarray             # train-array indices of pool rows
    test_base: LabeledBatch
    test_new: LabeledBatch

    @property
    def all_classes(self) -> list[int]:
        return sorted(self.base_classes + self.new_classes)


def make_split(dataset: Dataset, n_base: int = 5, fraction: float = 0.5,
               seed: int = 0) -> Split:
    """Randomly pick base classes, carve ``fraction`` of each base class's
    training data into the pretraining set, and leave the remainder plus
    all new-class data as the streaming pool."""
    if not 0.0 < fraction < 1.0:
        raise ContractViolation("pretrain fraction must lie in (0, 1)")
    classes = dataset.train.classes()
    usable = []
    for c in classes:
        n = int((dataset.train.labels == c).sum())
        if n < 2:
            log.warning("class %d has %d training samples; excluded from the protocol", c, n)
            continue
        usable.append(c)
    if len(usable) < n_base + 1:
        raise ContractViolation(
            f"need at least {n_base + 1} usable classes, found {len(usable)}")
    rng = np.random.default_rng(seed)
    base = sorted(int(c) for c in rng.choice(usable, size=n_base, replace=False))
    new = sorted(c for c in usable if c not in base)

    labels = dataset.train.labels
    pretrain_idx: list[np.ndarray] = []
    pool_idx: list[np.ndarray] = []
    for c in base:
        rows = np.flatnonzero(labels == c)
        k = int(round(len(rows) * fraction))
        k = min(max(k, 1), len(rows) - 1)
        picked = rng.permutation(rows)
        pretrain_idx.append(np.sort(picked[:k]))
        pool_idx.append(np.sort(picked[k:]))
    for c in new:
        pool_idx.append(np.flatnonzero(labels == c))
    d0 = np.concatenate(pretrain_idx)
    pool = np.sort(np.concatenate(pool_idx))

    test_labels = dataset.test.labels
    base_mask = np.isin(test_labels, base)
    new_mask = np.isin(test_labels, new)
    return Split(
        base_classes=base,
        new_classes=new,
        pretrain=dataset.train.subset(d0),
        pool=dataset.train.subset(pool),
        pool_ids=pool,
        test_base=dataset.test.subset(base_mask),
        test_new=dataset.test.subset(new_mask),
    )


class StreamSampler:
    """Emits batches of at most ``batch_size`` samples spanning at most
    ``max_classes`` classes, consuming the pool exactly once."""

    def __init__(self, pool: LabeledBatch, pool_ids: np.ndarray | None = None,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 max_classes: int = MAX_CLASSES_PER_BATCH, seed: int = 0):
        if batch_size < 1 or max_classes < 1:
            raise ContractViolation("batch_size and max_classes must be positive")
        self.pool = pool
        self.pool_ids = np.arange(len(pool)) if pool_ids is None else np.asarray(pool_ids)
        self.batch_size = batch_size
        self.max_classes = max_classes
        self.rng = np.random.default_rng(seed)
        self._remaining: dict[int, list[int]] = {}
        for c in pool.classes():
            self._remaining[c] = np.flatnonzero(pool.labels == c).tolist()

    def __iter__(self):
        step = 0
        while True:
            batch = self._next_batch(step)
            if batch is None:
                return
            yield batch
            step += 1

    def _next_batch(self, step: int) -> StreamBatch | None:
        alive = sorted(c for c, rows in self._remaining.items() if rows)
        if not alive:
            return None
        k = min(self.max_classes, len(alive))
        chosen = self.rng.choice(alive, size=k, replace=False)
        # union of the chosen classes' remaining rows; uniform draw without
        # replacement keeps per-class counts proportional to pool sizes
        candidates = np.concatenate([self._remaining[int(c)] for c in np.sort(chosen)])
        take = min(self.batch_size, candidates.shape[0])
        picked = self.rng.choice(candidates, size=take, replace=False)
        picked = np.sort(picked)
        for row in picked:
            self._remaining[int(self.pool.labels[row])].remove(int(row))
        return StreamBatch(step=step, batch=self.pool.subset(picked),
                           sample_ids=self.pool_ids[picked])


def write_manifest(path, batches: list[StreamBatch]):
    """JSON manifest (per-step classes and sample ids) for exact replay."""
    records = [
        {
            "step": sb.step,
            "classes": sb.batch.classes(),
            "sample_ids": [int(i) for i in sb.sample_ids],
        }
        for sb in batches
    ]
    with open(path, "w") as fh:
        json.dump(records, fh, indent=1, sort_keys=True)
        fh.write("\n")
