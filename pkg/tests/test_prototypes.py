"""Prototype memory oracles: batch-mean equivalence, hand arithmetic,
softmax classification, adaptation contraction."""
import math

import numpy as np
import pytest

from protostream.autodiff import ContractViolation
from protostream.batch import LabeledBatch
from protostream.encoder import Encoder, EncoderConfig
from protostream.prototypes import PrototypeMemory
from protostream.replay import ReplayBuffer


class IdentityEncoder:
    """Embeds a (n, 1, d) window as its flattened values; test double."""

    def embed_array(self, windows):
        return np.asarray(windows, dtype=np.float64).reshape(windows.shape[0], -1)


def batch_from_embeddings(embs, labels):
    embs = np.asarray(embs, dtype=np.float64)
    return LabeledBatch(embs[:, None, :], np.asarray(labels))


ENC = IdentityEncoder()


def test_single_sample_prototype_equals_embedding():
    batch = batch_from_embeddings([[1.0, 2.0], [3.0, 4.0]], [0, 1])
    mem = PrototypeMemory.from_data(ENC, batch)
    np.testing.assert_array_equal(mem.prototypes[0], [1.0, 2.0])
    np.testing.assert_array_equal(mem.prototypes[1], [3.0, 4.0])
    assert mem.counts == {0: 1, 1: 1}


def test_from_data_hand_mean():
    batch = batch_from_embeddings([[1.0, 0.0], [0.0, 1.0]], [3, 3])
    mem = PrototypeMemory.from_data(ENC, batch)
    np.testing.assert_array_equal(mem.prototypes[3], [0.5, 0.5])
    assert mem.counts[3] == 2


def test_duplicated_data_same_prototypes_doubled_counts():
    embs = np.random.default_rng(0).normal(size=(6, 2))
    labels = [0, 0, 1, 1, 2, 2]
    single = PrototypeMemory.from_data(ENC, batch_from_embeddings(embs, labels))
    doubled = PrototypeMemory.from_data(
        ENC, batch_from_embeddings(np.concatenate([embs, embs]), labels + labels))
    for c in single.class_ids:
        np.testing.assert_allclose(doubled.prototypes[c], single.prototypes[c], atol=1e-15)
        assert doubled.counts[c] == 2 * single.counts[c]


def test_from_data_missing_expected_class_rejected():
    batch = batch_from_embeddings([[1.0, 0.0]], [0])
    with pytest.raises(ContractViolation):
        PrototypeMemory.from_data(ENC, batch, expected_classes=[0, 1])


def test_online_update_class_absent_untouched():
    mem = PrototypeMemory.from_data(ENC, batch_from_embeddings([[1.0, 1.0]], [0]))
    before = mem.prototypes[0].copy()
    mem.online_update(ENC, batch_from_embeddings([[5.0, 5.0]], [1]))
    np.testing.assert_array_equal(mem.prototypes[0], before)
    assert mem.counts[0] == 1
    assert 1 in mem


def test_online_update_hand_arithmetic():
    # known class with c=3, p=[1,1]; one new sample embedding [4,4]
    mem = PrototypeMemory()
    mem.prototypes[0] = np.array([1.0, 1.0])
    mem.counts[0] = 3
    mem.online_update(ENC, batch_from_embeddings([[4.0, 4.0]], [0]))
    np.testing.assert_allclose(mem.prototypes[0], [1.75, 1.75])
    assert mem.counts[0] == 4


def test_sequential_updates_match_batch_mean_oracle():
    rng = np.random.default_rng(12)
    embs = rng.normal(size=(30, 4))
    labels = rng.integers(0, 3, size=30)
    full = batch_from_embeddings(embs, labels)
    mem = PrototypeMemory()
    for lo in range(0, 30, 7):  # uneven sub-batches
        mem.online_update(ENC, full.subset(slice(lo, min(lo + 7, 30))))
    one_shot = PrototypeMemory()
    one_shot.online_update(ENC, full)
    for c in range(3):
        brute = embs[labels == c].mean(axis=0)
        np.testing.assert_allclose(mem.prototypes[c], brute, atol=1e-9)
        np.testing.assert_allclose(one_shot.prototypes[c], brute, atol=1e-12)
        assert mem.counts[c] == one_shot.counts[c] == int((labels == c).sum())


def test_predict_at_prototype_wins():
    mem = PrototypeMemory()
    mem.prototypes = {0: np.array([0.0, 0.0]), 1: np.array([2.0, 2.0])}
    mem.counts = {0: 1, 1: 1}
    pred = mem.predict_embeddings(np.array([[2.0, 2.0]]))
    assert pred.labels[0] == 1


def test_predict_hand_softmax():
    # 1-D prototypes at 0 and 2, query 0.5 -> softmax(-0.25, -2.25)
    mem = PrototypeMemory()
    mem.prototypes = {0: np.array([0.0]), 1: np.array([2.0])}
    mem.counts = {0: 1, 1: 1}
    pred = mem.predict_embeddings(np.array([[0.5]]))
    expected0 = 1.0 / (1.0 + math.exp(-2.0))
    np.testing.assert_allclose(pred.probabilities[0], [expected0, 1.0 - expected0], atol=1e-12)
    np.testing.assert_allclose(pred.probabilities[0], [0.8808, 0.1192], atol=5e-5)


def test_predict_tie_breaks_to_lower_class_id():
    mem = PrototypeMemory()
    mem.prototypes = {5: np.array([1.0, 0.0]), 2: np.array([-1.0, 0.0])}
    mem.counts = {5: 1, 2: 1}
    pred = mem.predict_embeddings(np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(pred.probabilities[0], [0.5, 0.5], atol=1e-15)
    assert pred.labels[0] == 2


def test_predict_rows_sum_to_one_and_empty_memory_rejected():
    mem = PrototypeMemory()
    with pytest.raises(ContractViolation):
        mem.predict_embeddings(np.zeros((1, 2)))
    mem.prototypes = {0: np.zeros(2), 7: np.ones(2)}
    mem.counts = {0: 1, 7: 1}
    pred = mem.predict_embeddings(np.random.default_rng(3).normal(size=(50, 2)))
    np.testing.assert_allclose(pred.probabilities.sum(axis=1), np.ones(50), atol=1e-9)
    assert pred.probabilities.min() >= 0.0


def test_predict_shift_invariance():
    # adding a constant to all squared distances keeps the softmax fixed;
    # equivalent check: probabilities depend only on distance differences
    mem = PrototypeMemory()
    mem.prototypes = {0: np.array([0.0]), 1: np.array([3.0])}
    mem.counts = {0: 1, 1: 1}
    base = mem.predict_embeddings(np.array([[1.0]])).probabilities
    # shifting query and prototypes together adds the same constant pattern
    shifted = PrototypeMemory()
    shifted.prototypes = {0: np.array([10.0]), 1: np.array([13.0])}
    shifted.counts = {0: 1, 1: 1}
    np.testing.assert_allclose(
        shifted.predict_embeddings(np.array([[11.0]])).probabilities, base, atol=1e-12)


def _buffer_with(entries: dict):
    buf = ReplayBuffer(capacity_per_class=8, seed=0)
    windows, labels = [], []
    for c, rows in entries.items():
        for r in rows:
            windows.append([r])
            labels.append(c)
    buf.update(LabeledBatch(np.array(windows), np.array(labels)))
    return buf


def test_replay_adapt_alpha_one_is_bitwise_noop():
    mem = PrototypeMemory()
    mem.prototypes = {0: np.array([0.123456789, -1.0]), 1: np.array([2.0, 2.0])}
    mem.counts = {0: 4, 1: 2}
    snapshot = {c: p.copy() for c, p in mem.prototypes.items()}
    buf = _buffer_with({0: [[9.0, 9.0]], 1: [[5.0, 5.0]]})
    mem.replay_adapt(ENC, buf, refresh_ratio=1.0)
    for c in snapshot:
        assert np.array_equal(mem.prototypes[c], snapshot[c])
    assert mem.counts == {0: 4, 1: 2}


def test_replay_adapt_alpha_zero_sets_replay_mean():
    mem = PrototypeMemory()
    mem.prototypes = {0: np.array([100.0, 100.0])}
    mem.counts = {0: 9}
    buf = _buffer_with({0: [[1.0, 0.0], [0.0, 1.0]]})
    mem.replay_adapt(ENC, buf, refresh_ratio=0.0)
    np.testing.assert_allclose(mem.prototypes[0], [0.5, 0.5], atol=1e-12)
    assert mem.counts[0] == 9  # counts never refreshed


def test_replay_adapt_hand_arithmetic():
    mem = PrototypeMemory()
    mem.prototypes = {0: np.array([1.0, 0.0])}
    mem.counts = {0: 1}
    buf = _buffer_with({0: [[0.0, 1.0]]})
    mem.replay_adapt(ENC, buf, refresh_ratio=0.5)
    np.testing.assert_allclose(mem.prototypes[0], [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_replay_adapt_contraction(alpha):
    rng = np.random.default_rng(int(alpha * 100))
    mem = PrototypeMemory()
    mem.prototypes = {0: rng.normal(size=3)}
    mem.counts = {0: 5}
    rows = rng.normal(size=(4, 3))
    buf = _buffer_with({0: rows.tolist()})
    old = mem.prototypes[0].copy()
    mean = rows.mean(axis=0)
    mem.replay_adapt(ENC, buf, refresh_ratio=alpha)
    d_new = np.linalg.norm(mem.prototypes[0] - mean)
    d_old = np.linalg.norm(old - mean)
    assert abs(d_new - alpha * d_old) < 1e-9


def test_replay_adapt_class_absent_from_replay_untouched():
    mem = PrototypeMemory()
    mem.prototypes = {0: np.array([1.0, 1.0]), 1: np.array([2.0, 2.0])}
    mem.counts = {0: 1, 1: 1}
    buf = _buffer_with({0: [[0.0, 0.0]]})
    mem.replay_adapt(ENC, buf, refresh_ratio=0.5)
    np.testing.assert_array_equal(mem.prototypes[1], [2.0, 2.0])


def test_replay_adapt_alpha_out_of_range():
    mem = PrototypeMemory()
    mem.prototypes = {0: np.zeros(2)}
    mem.counts = {0: 1}
    buf = _buffer_with({0: [[1.0, 1.0]]})
    for bad in (-0.1, 1.5):
        with pytest.raises(ContractViolation):
            mem.replay_adapt(ENC, buf, refresh_ratio=bad)


def test_key_sets_coincide_and_finite_after_ops():
    rng = np.random.default_rng(5)
    mem = PrototypeMemory.from_data(ENC, batch_from_embeddings(rng.normal(size=(8, 2)),
                                                               rng.integers(0, 3, 8)))
    mem.online_update(ENC, batch_from_embeddings(rng.normal(size=(6, 2)),
                                                 rng.integers(0, 5, 6)))
    assert set(mem.prototypes) == set(mem.counts)
    assert all(v > 0 for v in mem.counts.values())
    assert all(np.all(np.isfinite(p)) for p in mem.prototypes.values())


def test_snapshot_csv_roundtrip(tmp_path):
    mem = PrototypeMemory()
    mem.prototypes = {2: np.array([0.25, -1.5]), 0: np.array([1.0, 2.0])}
    mem.counts = {2: 3, 0: 7}
    path = tmp_path / "protos.csv"
    mem.write_snapshot(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "class_id,count,p_0,p_1"
    assert lines[1].startswith("0,7,")
    assert lines[2].startswith("2,3,")
    vals = [float(v) for v in lines[2].split(",")[2:]]
    assert vals == [0.25, -1.5]


def test_real_encoder_integration():
    cfg = EncoderConfig(channels=2, timesteps=3, embedding_dim=4, hidden=(6,))
    enc = Encoder.init(cfg, seed=9)
    rng = np.random.default_rng(9)
    batch = LabeledBatch(rng.normal(size=(10, 2, 3)), rng.integers(0, 2, 10))
    mem = PrototypeMemory.from_data(enc, batch)
    emb = enc.embed_array(batch.windows)
    for c in (0, 1):
        np.testing.assert_allclose(mem.prototypes[c], emb[batch.labels == c].mean(axis=0))
    pred = mem.predict(enc, batch.windows)
    assert pred.probabilities.shape == (10, 2)
