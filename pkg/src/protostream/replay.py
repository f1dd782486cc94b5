"""Per-class replay store with uniform random sampling and fixed capacity."""
from __future__ import annotations

import numpy as np

from .autodiff import ContractViolation
from .batch import LabeledBatch


class ReplayBuffer:
    """Holds up to ``capacity_per_class`` raw windows for every class seen.

    Windows are stored raw (not embedded) so replayed samples are always
    re-embedded under the current encoder parameters.
    """

    def __init__(self, capacity_per_class: int, seed: int = 0):
        if capacity_per_class < 1:
            raise ContractViolation("capacity_per_class must be positive")
        self.capacity_per_class = capacity_per_class
        self.store: dict[int, np.ndarray] = {}   # class id -> (k, C, T), k <= capacity
        self.rng = np.random.default_rng(seed)
        self._window_shape: tuple[int, int] | None = None

    def __len__(self) -> int:
        return sum(w.shape[0] for w in self.store.values())

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.store)

    def class_counts(self) -> dict[int, int]:
        return {c: self.store[c].shape[0] for c in self.class_ids}

    def update(self, combined: LabeledBatch):
        """Resample each class's store from the combined candidate pool.

        ``combined`` must already be the union of the current batch and
        the buffer contents; each class keeps min(capacity, available)
        samples drawn uniformly without replacement from its pool.
        Classes absent from ``combined`` are left untouched.
        """
        if len(combined) == 0:
            return
        if self._window_shape is None:
            self._window_shape = combined.window_shape
        for c in combined.classes():
            pool = combined.windows[combined.labels == c]
            if pool.shape[0] <= self.capacity_per_class:
                self.store[c] = pool.copy()
            else:
                keep = self.rng.choice(pool.shape[0], size=self.capacity_per_class, replace=False)
                self.store[c] = pool[np.sort(keep)].copy()

    def drain(self) -> LabeledBatch:
        """All stored (window, label) pairs, buffer unchanged."""
        if not self.store:
            shape = self._window_shape or (0, 0)
            return LabeledBatch.empty(*shape)
        windows = np.concatenate([self.store[c] for c in self.class_ids], axis=0)
        labels = np.concatenate(
            [np.full(self.store[c].shape[0], c, dtype=np.int64) for c in self.class_ids]
        )
        return LabeledBatch(windows, labels)
