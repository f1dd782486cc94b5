"""Per-class prototype memory: online averaging, softmax-distance
classification and replay-based adaptation."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .autodiff import ContractViolation
from .batch import LabeledBatch


@dataclass
class Prediction:
    """Class distributions for a batch of queries.

    probabilities: (n, K) rows summing to 1, columns ordered by
    ascending class id; labels: argmax with ties broken toward the
    lowest class id.
    """

    class_ids: list[int]
    probabilities: np.ndarray
    labels: np.ndarray


class PrototypeMemory:
    """Map from every class seen so far to its prototype vector and count."""

    def __init__(self):
        self.prototypes: dict[int, np.ndarray] = {}
        self.counts: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.prototypes)

    def __contains__(self, class_id: int) -> bool:
        return class_id in self.prototypes

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.prototypes)

    def matrix(self) -> np.ndarray:
        """Prototypes stacked (K, d) in ascending class-id order."""
        if not self.prototypes:
            raise ContractViolation("prototype memory is empty")
        return np.stack([self.prototypes[c] for c in self.class_ids])

    def clone(self) -> "PrototypeMemory":
        out = PrototypeMemory()
        out.prototypes = {c: p.copy() for c, p in self.prototypes.items()}
        out.counts = dict(self.counts)
        return out

    # -- construction and refinement -----------------------------------------

    @classmethod
    def from_data(cls, encoder, data: LabeledBatch,
                  expected_classes=None) -> "PrototypeMemory":
        """Build prototypes as per-class embedding means over all of ``data``."""
        if expected_classes is not None:
            missing = set(int(c) for c in expected_classes) - set(data.classes())
            if missing:
                raise ContractViolation(f"no samples for expected classes {sorted(missing)}")
        if len(data) == 0:
            raise ContractViolation("cannot initialize prototypes from an empty batch")
        memory = cls()
        embeddings = encoder.embed_array(data.windows)
        for c in data.classes():
            mask = data.labels == c
            memory.prototypes[c] = embeddings[mask].mean(axis=0)
            memory.counts[c] = int(mask.sum())
        return memory

    def online_update(self, encoder, batch: LabeledBatch):
        """Fold a batch into the running per-class means.

        Known class: p <- (c_old/c_new) p + (sum of embeddings)/c_new.
        New class: prototype = batch class mean. The encoder must be the
        pre-update parameters for this step; classes absent from the
        batch are untouched.
        """
        if len(batch) == 0:
            raise ContractViolation("online update requires a non-empty batch")
        embeddings = encoder.embed_array(batch.windows)
        for c in batch.classes():
            mask = batch.labels == c
            n_new = int(mask.sum())
            emb_sum = embeddings[mask].sum(axis=0)
            if c in self.prototypes:
                c_old = self.counts[c]
                c_new = c_old + n_new
                self.prototypes[c] = (c_old / c_new) * self.prototypes[c] + emb_sum / c_new
                self.counts[c] = c_new
            else:
                self.prototypes[c] = emb_sum / n_new
                self.counts[c] = n_new

    def replay_adapt(self, encoder, buffer, refresh_ratio: float):
        """Blend each replayed class's prototype toward its current-encoder
        replay mean: p <- a*p + (1-a)*mean. Counts are not touched."""
        if not 0.0 <= refresh_ratio <= 1.0:
            raise ContractViolation(f"refresh_ratio {refresh_ratio} outside [0, 1]")
        if refresh_ratio == 1.0:
            return
        replayed = buffer.drain()
        if len(replayed) == 0:
            return
        embeddings = encoder.embed_array(replayed.windows)
        for c in replayed.classes():
            if c not in self.prototypes:
                raise ContractViolation(f"replay buffer holds unseen class {c}")
            mean = embeddings[replayed.labels == c].mean(axis=0)
            if refresh_ratio == 0.0:
                self.prototypes[c] = mean
            else:
                self.prototypes[c] = refresh_ratio * self.prototypes[c] + (1.0 - refresh_ratio) * mean

    # -- classification --------------------------------------------------------

    def predict_embeddings(self, embeddings: np.ndarray) -> Prediction:
        """Softmax over negative squared distances to each prototype."""
        if not self.prototypes:
            raise ContractViolation("cannot predict with an empty prototype memory")
        ids = self.class_ids
        protos = self.matrix()
        diff = embeddings[:, None, :] - protos[None, :, :]
        logits = -(diff * diff).sum(axis=2)
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        labels = np.array([ids[i] for i in probs.argmax(axis=1)], dtype=np.int64)
        return Prediction(class_ids=ids, probabilities=probs, labels=labels)

    def predict(self, encoder, windows: np.ndarray) -> Prediction:
        return self.predict_embeddings(encoder.embed_array(windows))

    # -- export ----------------------------------------------------------------

    def snapshot_rows(self) -> list[list]:
        return [[c, self.counts[c], *self.prototypes[c].tolist()] for c in self.class_ids]

    def write_snapshot(self, path):
        """CSV export (class_id, count, d floats) for external embedding plots."""
        dim = next(iter(self.prototypes.values())).shape[0] if self.prototypes else 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class_id", "count", *[f"p_{i}" for i in range(dim)]])
            for row in self.snapshot_rows():
                writer.writerow([row[0], row[1], *[repr(v) for v in row[2:]]])
