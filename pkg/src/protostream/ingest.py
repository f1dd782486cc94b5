"""Dataset ingestion: documented CSV recordings, sliding-window
segmentation, z-score normalization and a synthetic Gaussian generator.

CSV schema (UTF-8, comma-separated, '.' decimal):
    timestamp,ch_0,...,ch_{n-1},label
one row per timestep, constant channel count, integer labels.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractViolation
from .batch import LabeledBatch
from .stream import Dataset

log = logging.getLogger(__name__)

# window length / step in seconds, per supported recording style
WINDOW_PRESETS: dict[str, tuple[float, float]] = {
    "opportunity": (0.8, 0.4),
    "pamap2": (1.0, 0.5),
    "dsads": (5.0, 5.0),
    "skoda": (1.0, 0.5),
    "hapt": (2.56, 1.28),
}


@dataclass
class RawRecording:
    values: np.ndarray        # (timesteps, channels)
    labels: np.ndarray        # (timesteps,) int
    sample_rate_hz: float
    subject_id: str | None = None


@dataclass
class WindowingSpec:
    window_s: float
    step_s: float

    def __post_init__(self):
        if not 0 < self.step_s <= self.window_s:
            raise ContractViolation("require 0 < step <= window")

    @classmethod
    def preset(cls, name: str) -> "WindowingSpec":
        if name not in WINDOW_PRESETS:
            raise ContractViolation(
                f"unknown windowing preset '{name}'; choose from {sorted(WINDOW_PRESETS)}")
        return cls(*WINDOW_PRESETS[name])


def read_recording(path, sample_rate_hz: float | None = None,
                   expected_channels: int | None = None) -> RawRecording:
    """Parse one CSV recording; the sample rate is inferred from the
    timestamp column when not given."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "timestamp" or header[-1] != "label" or len(header) < 3:
            raise ContractViolation(
                f"{path}: header must be timestamp,ch_0..ch_n,label, got {header}")
        n_channels = len(header) - 2
        if expected_channels is not None and n_channels != expected_channels:
            raise ContractViolation(
                f"{path}: {n_channels} channels, expected {expected_channels}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ContractViolation(f"{path}:{line_no}: wrong column count")
            rows.append([float(v) for v in row[:-1]] + [float(row[-1])])
    if len(rows) < 2:
        raise ContractViolation(f"{path}: recording too short")
    data = np.asarray(rows)
    ts = data[:, 0]
    if sample_rate_hz is None:
        dt = np.median(np.diff(ts))
        if dt <= 0:
            raise ContractViolation(f"{path}: timestamps not increasing")
        sample_rate_hz = 1.0 / dt
    return RawRecording(values=data[:, 1:-1], labels=data[:, -1].astype(np.int64),
                        sample_rate_hz=float(sample_rate_hz))


def segment(recording: RawRecording, spec: WindowingSpec) -> LabeledBatch:
    """Slide a window along the recording; each window is labeled by
    majority vote, ties resolved toward the label seen earlier in the
    window."""
    win = int(round(spec.window_s * recording.sample_rate_hz))
    step = int(round(spec.step_s * recording.sample_rate_hz))
    if win < 1 or step < 1:
        raise ContractViolation("window and step must cover at least one sample")
    total = recording.values.shape[0]
    if total < win:
        raise ContractViolation("recording shorter than one window")
    starts = range(0, total - win + 1, step)
    windows, labels = [], []
    for s in starts:
        chunk = recording.values[s:s + win]
        windows.append(chunk.T)  # (channels, timesteps)
        labels.append(_majority_label(recording.labels[s:s + win]))
    return LabeledBatch(np.stack(windows), np.asarray(labels))


def _majority_label(window_labels: np.ndarray) -> int:
    counts: dict[int, int] = {}
    first_seen: dict[int, int] = {}
    for pos, lab in enumerate(int(v) for v in window_labels):
        counts[lab] = counts.get(lab, 0) + 1
        first_seen.setdefault(lab, pos)
    # most frequent wins; ties resolve to the label seen earlier in the window
    return max(counts, key=lambda lab: (counts[lab], -first_seen[lab]))


@dataclass
class ChannelStats:
    mean: np.ndarray  # (channels,)
    std: np.ndarray   # (channels,)

    def apply(self, windows: np.ndarray) -> np.ndarray:
        return (windows - self.mean[None, :, None]) / self.std[None, :, None]


def fit_normalizer(train_windows: np.ndarray) -> ChannelStats:
    """Per-channel z-score statistics from training windows only."""
    if train_windows.shape[0] == 0:
        raise ContractViolation("cannot fit normalization on an empty training set")
    mean = train_windows.mean(axis=(0, 2))
    std = train_windows.std(axis=(0, 2))
    flat = std == 0.0
    if flat.any():
        log.warning("zero-variance channels %s; using unit divisor",
                    np.flatnonzero(flat).tolist())
        std = np.where(flat, 1.0, std)
    return ChannelStats(mean=mean, std=std)


def normalize(train: LabeledBatch, *others: LabeledBatch
              ) -> tuple[list[LabeledBatch], ChannelStats]:
    """Z-score the training set and apply the same statistics to the rest."""
    stats = fit_normalizer(train.windows)
    out = [LabeledBatch(stats.apply(train.windows), train.labels)]
    for batch in others:
        if len(batch) == 0:
            out.append(batch)
        else:
            out.append(LabeledBatch(stats.apply(batch.windows), batch.labels))
    return out, stats


@dataclass
class SyntheticSpec:
    """Gaussian class-conditional windows for deterministic desk-scale runs.

    Class means are per-channel vectors; ``class_std`` is the isotropic
    per-timestep noise. ``drift_per_sample`` shifts a class's mean
    linearly along its sample order, emulating gradual concept drift.
    """

    n_classes: int = 8
    channels: int = 3
    timesteps: int = 8
    train_per_class: int = 100
    test_per_class: int = 50
    mean_scale: float = 1.0
    class_std: float = 1.0
    drift_per_sample: float = 0.0
    seed: int = 0
    class_means: np.ndarray | None = None   # (n_classes, channels) override

    def __post_init__(self):
        if self.n_classes < 2:
            raise ContractViolation("need at least two classes")
        if self.class_std < 0:
            raise ContractViolation("class_std must be nonnegative")


def synth(spec: SyntheticSpec) -> Dataset:
    """Draw a seeded synthetic dataset; identical spec gives identical bytes."""
    rng = np.random.default_rng(spec.seed)
    if spec.class_means is not None:
        means = np.asarray(spec.class_means, dtype=np.float64)
        if means.shape != (spec.n_classes, spec.channels):
            raise ContractViolation("class_means must be (n_classes, channels)")
    else:
        means = rng.normal(scale=spec.mean_scale, size=(spec.n_classes, spec.channels))

    def draw(per_class: int, drifting: bool) -> LabeledBatch:
        windows = np.empty((spec.n_classes * per_class, spec.channels, spec.timesteps))
        labels = np.empty(spec.n_classes * per_class, dtype=np.int64)
        row = 0
        for c in range(spec.n_classes):
            for i in range(per_class):
                mean = means[c]
                if drifting and spec.drift_per_sample:
                    mean = mean + spec.drift_per_sample * i
                noise = rng.normal(scale=spec.class_std,
                                   size=(spec.channels, spec.timesteps))
                windows[row] = mean[:, None] + noise
                labels[row] = c
                row += 1
        return LabeledBatch(windows, labels)

    return Dataset(train=draw(spec.train_per_class, drifting=True),
                   test=draw(spec.test_per_class, drifting=False))
