"""Training orchestration: offline episodic pretraining, the continual
step (memory update -> model update -> adaptation -> buffer update) and
the streaming run loop with held-out evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import losses
from .autodiff import ContractViolation, Tensor
from .batch import LabeledBatch
from .config import ContinualConfig, PretrainConfig
from .encoder import Encoder
from .metrics import EvalRecord, MetricsLedger, macro_f1, per_class_f1
from .prototypes import PrototypeMemory
from .replay import ReplayBuffer
from .stream import StreamBatch

log = logging.getLogger(__name__)


@dataclass
class TrainerState:
    encoder: Encoder
    memory: PrototypeMemory
    buffer: ReplayBuffer
    optimizer: object
    step: int = 0


def _episode_loss(encoder: Encoder, support: LabeledBatch, query: LabeledBatch) -> Tensor:
    """Few-shot episode objective: prototypes from the support embeddings
    (differentiable), negative log-likelihood on the query set."""
    classes = support.classes()
    sup_emb = encoder.embed(support.windows)
    # per-class averaging as a constant row-normalized indicator matrix
    avg = np.zeros((len(classes), len(support)))
    for i, c in enumerate(classes):
        mask = support.labels == c
        avg[i, mask] = 1.0 / mask.sum()
    protos = Tensor(avg) @ sup_emb
    logits = -ad.pairwise_sqdist(encoder.embed(query.windows), protos)
    index_of = {c: i for i, c in enumerate(classes)}
    label_idx = np.array([index_of[int(c)] for c in query.labels])
    return ad.softmax_cross_entropy(logits, label_idx)


def _sample_episode(data: LabeledBatch, cfg: PretrainConfig, rng: np.random.Generator,
                    warned: set) -> tuple[LabeledBatch, LabeledBatch]:
    sup_idx, qry_idx = [], []
    for c in data.classes():
        rows = np.flatnonzero(data.labels == c)
        n_support = cfg.support_per_class
        if len(rows) < cfg.support_per_class + 1:
            n_support = max(1, len(rows) - 1)
            if c not in warned:
                log.warning("class %d has only %d samples; shrinking support to %d",
                            c, len(rows), n_support)
                warned.add(c)
        picked = rng.permutation(rows)
        sup_idx.append(picked[:n_support])
        qry_idx.append(picked[n_support:n_support + cfg.query_per_class])
    return data.subset(np.concatenate(sup_idx)), data.subset(np.concatenate(qry_idx))


def offline_pretrain(encoder: Encoder, base_data: LabeledBatch, cfg: PretrainConfig,
                     *, replay_capacity: int = 6, seed: int = 0,
                     base_classes=None) -> TrainerState:
    """Episodic pretraining, then prototype memory from all of the base
    data and a randomly seeded replay buffer."""
    if base_classes is not None:
        missing = set(int(c) for c in base_classes) - set(base_data.classes())
        if missing:
            raise ContractViolation(f"base data missing classes {sorted(missing)}")
    rng = np.random.default_rng([seed, 1])
    optimizer = ad.Adam(encoder.params, cfg.learning_rate)
    episodes_per_epoch = max(1, math.ceil(len(base_data) / cfg.batch_size))
    warned: set = set()
    for _ in range(cfg.epochs):
        for _ in range(episodes_per_epoch):
            support, query = _sample_episode(base_data, cfg, rng, warned)
            if len(query) == 0:
                continue
            ad.forward_backward(encoder.params,
                                lambda: _episode_loss(encoder, support, query))
            optimizer.step()
    memory = PrototypeMemory.from_data(encoder, base_data, expected_classes=base_classes)
    buffer = ReplayBuffer(replay_capacity, seed=int(rng.integers(2 ** 31)))
    buffer.update(base_data)
    return TrainerState(encoder=encoder, memory=memory, buffer=buffer,
                        optimizer=optimizer)


def continual_step(state: TrainerState, batch: LabeledBatch, cfg: ContinualConfig,
                   hook=None) -> losses.LossReport:
    """One streaming step, phases in fixed order:

    1. fold the batch into the prototype memory under the pre-update encoder
    2. one gradient step on the batch plus replayed samples
    3. optionally blend prototypes toward their replayed means (updated encoder)
    4. optionally refresh the replay buffer from the combined query set
    """
    if len(batch) == 0:
        raise ContractViolation("continual step requires a non-empty batch")

    state.memory.online_update(state.encoder, batch)
    if hook:
        hook("memory_update")

    replayed = state.buffer.drain() if cfg.replay_on else None
    q = LabeledBatch.concat([batch, replayed]) if replayed and len(replayed) else batch
    report = None
    for _ in range(cfg.epochs_per_batch):
        def loss_fn():
            nonlocal report
            emb = state.encoder.embed(q.windows)
            total, report = losses.combined(emb, q.labels, state.memory, cfg.margin,
                                            contrastive_on=cfg.contrastive_on)
            return total
        ad.forward_backward(state.encoder.params, loss_fn)
        state.optimizer.step()
    if hook:
        hook("model_update")

    if cfg.adapt_on:
        state.memory.replay_adapt(state.encoder, state.buffer, cfg.refresh_ratio)
        if hook:
            hook("adapt")

    if cfg.replay_on:
        state.buffer.update(q)
        if hook:
            hook("buffer_update")

    state.step += 1
    return report


@dataclass
class EvalSuite:
    """Held-out test data split into base-class and new-class partitions."""

    base_classes: list[int]
    new_classes: list[int]
    test_base: LabeledBatch
    test_new: LabeledBatch


def evaluate(encoder: Encoder, memory: PrototypeMemory, suite: EvalSuite,
             step: int) -> EvalRecord:
    """Score the frozen model on base / new-seen / overall test data."""
    seen = memory.class_ids
    new_seen = [c for c in seen if c in suite.new_classes]

    base_pred = memory.predict(encoder, suite.test_base.windows)
    base_score = macro_f1(base_pred.labels, suite.test_base.labels, suite.base_classes)
    per_class = per_class_f1(base_pred.labels, suite.test_base.labels, suite.base_classes)

    new_score = None
    if new_seen:
        seen_mask = np.isin(suite.test_new.labels, new_seen)
        test_new_seen = suite.test_new.subset(seen_mask)
        if len(test_new_seen):
            new_pred = memory.predict(encoder, test_new_seen.windows)
            new_score = macro_f1(new_pred.labels, test_new_seen.labels, new_seen)
            per_class.update(per_class_f1(new_pred.labels, test_new_seen.labels, new_seen))
        overall_data = LabeledBatch.concat([suite.test_base, test_new_seen])
    else:
        overall_data = suite.test_base
    overall_pred = memory.predict(encoder, overall_data.windows)
    overall_score = macro_f1(overall_pred.labels, overall_data.labels, seen)

    return EvalRecord(step=step, seen_classes=seen, base_f1=base_score,
                      new_f1=new_score, overall_f1=overall_score, per_class=per_class)


def run(state: TrainerState, stream, cfg: ContinualConfig, suite: EvalSuite,
        ledger: MetricsLedger | None = None, snapshot_dir=None, hook=None,
        manifest: list[StreamBatch] | None = None) -> MetricsLedger:
    """Drive the continual loop over a finite stream, evaluating every
    ``eval_stride`` steps (plus the post-pretrain state and the final
    state) on the held-out suite."""
    if ledger is None:
        ledger = MetricsLedger(suite.base_classes, suite.new_classes)

    def snapshot(record: EvalRecord):
        if snapshot_dir is not None:
            state.memory.write_snapshot(snapshot_dir / f"prototypes_{record.step}.csv")

    snapshot(ledger.add(evaluate(state.encoder, state.memory, suite, step=0)))
    pending = None
    for sb in stream:
        if manifest is not None:
            manifest.append(sb)
        report = continual_step(state, sb.batch, cfg, hook=hook)
        pending = (sb.step + 1, report)
        if (sb.step + 1) % cfg.eval_stride == 0:
            record = evaluate(state.encoder, state.memory, suite, step=sb.step + 1)
            record.loss_total = report.total
            record.loss_ce = report.ce_term
            record.loss_contrastive = report.contrastive_term
            snapshot(ledger.add(record))
            pending = None
    if pending is not None:
        step, report = pending
        record = evaluate(state.encoder, state.memory, suite, step=step)
        record.loss_total = report.total
        record.loss_ce = report.ce_term
        record.loss_contrastive = report.contrastive_term
        snapshot(ledger.add(record))
    return ledger
