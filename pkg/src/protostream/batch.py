"""Labeled window batches: the unit of streaming, replay and evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractViolation


@dataclass
class LabeledBatch:
    """A set of (window, class-label) pairs.

    windows: float64 array (n, channels, timesteps); labels: int array (n,).
    """

    windows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 3:
            raise ContractViolation(
                f"windows must be (n, channels, timesteps), got shape {self.windows.shape}"
            )
        if self.labels.shape != (self.windows.shape[0],):
            raise ContractViolation("labels must align with windows along the batch axis")
        if self.windows.size and not np.all(np.isfinite(self.windows)):
            raise ContractViolation("windows contain non-finite values")

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def window_shape(self) -> tuple[int, int]:
        return self.windows.shape[1], self.windows.shape[2]

    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def subset(self, index) -> "LabeledBatch":
        return LabeledBatch(self.windows[index], self.labels[index])

    def for_class(self, class_id: int) -> "LabeledBatch":
        return self.subset(self.labels == class_id)

    @staticmethod
    def concat(batches: list["LabeledBatch"]) -> "LabeledBatch":
        batches = [b for b in batches if len(b) > 0]
        if not batches:
            raise ContractViolation("cannot concatenate only empty batches")
        return LabeledBatch(
            np.concatenate([b.windows for b in batches], axis=0),
            np.concatenate([b.labels for b in batches], axis=0),
        )

    @staticmethod
    def empty(channels: int, timesteps: int) -> "LabeledBatch":
        return LabeledBatch(np.zeros((0, channels, timesteps)), np.zeros(0, dtype=np.int64))
