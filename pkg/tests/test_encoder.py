"""Encoder contract tests: shapes, determinism, init bounds, hand math."""
import numpy as np
import pytest

from gradcheck import assert_grad_close, finite_difference_grad

from protostream.autodiff import ContractViolation, Tensor, squared_norm
from protostream.encoder import Encoder, EncoderConfig


def small_config(**overrides):
    base = dict(channels=2, timesteps=4, embedding_dim=3, hidden=(5,))
    base.update(overrides)
    return EncoderConfig(**base)


def test_zero_weight_encoder_gives_zero_embeddings():
    enc = Encoder.init(small_config(), seed=0)
    for p in enc.params:
        p.data[...] = 0.0
    out = enc.embed_array(np.random.default_rng(0).normal(size=(4, 2, 4)))
    np.testing.assert_array_equal(out, np.zeros((4, 3)))


def test_identical_windows_identical_rows():
    enc = Encoder.init(small_config(), seed=1)
    w = np.random.default_rng(1).normal(size=(1, 2, 4))
    batch = np.repeat(w, 5, axis=0)
    out = enc.embed_array(batch)
    for row in out[1:]:
        np.testing.assert_array_equal(row, out[0])


def test_hand_computed_forward_pass():
    # 2x4 window through a 1-hidden-layer net with hand-set weights
    cfg = EncoderConfig(channels=2, timesteps=4, embedding_dim=2, hidden=(2,))
    enc = Encoder.init(cfg, seed=0)
    w0 = np.zeros((8, 2))
    w0[0, 0] = 1.0   # picks x[0,0]
    w0[5, 1] = -1.0  # picks -x[1,1]
    enc.params[0].data[...] = w0
    enc.params[1].data[...] = [0.5, 0.0]
    enc.params[2].data[...] = [[2.0, 0.0], [0.0, 3.0]]
    enc.params[3].data[...] = [0.1, -0.1]
    x = np.array([[[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]])
    # flatten order: [1,2,3,4,5,6,7,8]; h = relu([1*1+0.5, -6]) = [1.5, 0]
    # out = [1.5*2+0.1, 1.5*0-0.1] = [3.1, -0.1]
    np.testing.assert_allclose(enc.embed_array(x), [[3.1, -0.1]])


def test_init_deterministic_and_seed_sensitive():
    cfg = small_config()
    a, b, c = Encoder.init(cfg, 7), Encoder.init(cfg, 7), Encoder.init(cfg, 8)
    for pa, pb in zip(a.params, b.params):
        np.testing.assert_array_equal(pa.data, pb.data)
    assert any(not np.array_equal(pa.data, pc.data) for pa, pc in zip(a.params, c.params))


def test_fanin_bound():
    cfg = EncoderConfig(channels=10, timesteps=10, embedding_dim=4, hidden=(20,))
    enc = Encoder.init(cfg, seed=3)
    bound = np.sqrt(6.0 / 100.0)
    w = enc.params[0].data
    assert np.abs(w).max() <= bound
    # distribution actually spans the range rather than collapsing
    assert np.abs(w).max() > 0.8 * bound


def test_shape_mismatch_rejected():
    enc = Encoder.init(small_config(), seed=0)
    with pytest.raises(ContractViolation):
        enc.embed_array(np.zeros((2, 3, 4)))
    with pytest.raises(ContractViolation):
        enc.embed_array(np.zeros((0, 2, 4)))


def test_param_count_reported():
    enc = Encoder.init(small_config(), seed=0)
    assert enc.n_params == 8 * 5 + 5 + 5 * 3 + 3


@pytest.mark.parametrize("arch", ["dense", "temporal_conv"])
def test_embedding_gradcheck_through_encoder(arch):
    cfg = EncoderConfig(channels=2, timesteps=6, embedding_dim=3, hidden=(4,),
                        arch=arch, conv_filters=3, kernel_size=3)
    enc = Encoder.init(cfg, seed=5)
    x = np.random.default_rng(5).normal(size=(3, 2, 6))
    target = np.random.default_rng(6).normal(size=(3, 3))

    def loss_fn():
        return squared_norm(enc.embed(x) - Tensor(target))

    for p in enc.params:
        p.grad = None
    loss_fn().backward()
    for p in enc.params:
        numeric = finite_difference_grad(loss_fn, p)
        assert_grad_close(p.grad, numeric)


def test_clone_is_independent():
    enc = Encoder.init(small_config(), seed=0)
    twin = enc.clone()
    twin.params[0].data += 1.0
    assert not np.array_equal(enc.params[0].data, twin.params[0].data)
