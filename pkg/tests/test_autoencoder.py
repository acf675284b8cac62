import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import latentpose.autoencoder as aem
from latentpose.autoencoder import (
    AeTrainConfig,
    AutoEncoderParams,
    ae_loss,
    contractive_penalty,
    corrupt,
    decode,
    encode,
    encoder_jacobian,
    finetune_ae,
    mean_reconstruction_error,
    pretrain_layerwise,
    reconstruct,
    train_dae,
)
from latentpose.errors import DimensionError, ParameterError
from latentpose.numerics import RngStream, finite_diff_grad, finite_diff_jacobian, relative_error


def square_ae(n=2, dec_bias=None):
    return AutoEncoderParams([np.eye(n)], [np.zeros(n)], [np.zeros(n) if dec_bias is None else dec_bias],
                             require_overcomplete=False)


def random_ae(rng, sizes, d=6):
    return AutoEncoderParams.initialize(d, sizes, RngStream(int(rng.integers(1 << 30))), require_overcomplete=False)


def jitter_biases(ae, rng):
    for b in ae.enc_biases + ae.dec_biases:
        b += rng.normal(scale=0.3, size=b.shape)
    return ae


def pose_batch(n, j=17, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.normal(scale=300.0, size=(n, 3 * j))
    y[:, :3] = 0.0
    return y


# ------------------------------------------------------------------ corrupt


def test_corrupt_zero_sigma_is_identity():
    y = pose_batch(3)
    np.testing.assert_array_equal(corrupt(y, 0.0, RngStream(0)), y)


def test_corrupt_std_law_of_large_numbers():
    y = np.tile(pose_batch(1)[0], (10_000, 1))
    noisy = corrupt(y, 40.0, RngStream(1))
    std = (noisy - y)[:, 3:].std(axis=0)
    assert std.min() >= 38.5 and std.max() <= 41.5
    assert np.all(noisy[:, :3] == 0.0)


def test_corrupt_negative_sigma():
    with pytest.raises(ParameterError):
        corrupt(pose_batch(1), -1.0, RngStream(0))


# ------------------------------------------------------------ encode/decode


def test_encode_examples():
    zero = AutoEncoderParams([np.zeros((4, 2))], [np.zeros(4)], [np.zeros(2)], require_overcomplete=False)
    np.testing.assert_array_equal(encode(zero, np.array([3.0, -1.0])), np.zeros(4))
    ident = square_ae(3)
    y = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(encode(ident, y), y)
    np.testing.assert_array_equal(encode(ident, -y), np.zeros(3))


def test_decode_examples():
    np.testing.assert_array_equal(decode(square_ae(2), np.array([0.5, 4.0])), [0.5, 4.0])
    c = np.array([7.0, -3.0])
    np.testing.assert_array_equal(decode(square_ae(2, c.copy()), np.zeros(2)), c)


def test_dimension_mismatch_errors():
    ae = square_ae(2)
    with pytest.raises(DimensionError):
        encode(ae, np.ones(3))
    with pytest.raises(DimensionError):
        decode(ae, np.ones(5))


def test_reconstruct_is_composition():
    rng = np.random.default_rng(0)
    ae = jitter_biases(random_ae(rng, [9, 7]), rng)
    x = rng.normal(size=(5, 6))
    assert np.array_equal(reconstruct(ae, x), decode(ae, encode(ae, x)))
    # the two decode examples lifted through encode
    y = np.array([1.0, 2.0])
    np.testing.assert_array_equal(reconstruct(square_ae(2), y), y)
    c = np.array([1.5, 2.5])
    np.testing.assert_array_equal(reconstruct(square_ae(2, c.copy()), -y), c)


def test_overcomplete_rule():
    with pytest.raises(DimensionError):
        AutoEncoderParams([np.zeros((51, 51))], [np.zeros(51)], [np.zeros(51)])
    with pytest.raises(DimensionError):
        AutoEncoderParams([np.zeros((40, 51))], [np.zeros(40)], [np.zeros(51)])
    AutoEncoderParams([np.zeros((52, 51))], [np.zeros(52)], [np.zeros(51)])


def test_tied_weights_are_exact_transpose():
    ae = random_ae(np.random.default_rng(1), [8, 10])
    for j in range(2):
        assert np.array_equal(ae.dec_weight(j), ae.enc_weights[j].T)
        assert np.shares_memory(ae.dec_weight(j), ae.enc_weights[j])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.integers(1, 12), min_size=1, max_size=3))
def test_codes_nonnegative(seed, sizes):
    rng = np.random.default_rng(seed)
    ae = jitter_biases(random_ae(rng, sizes), rng)
    assert np.all(encode(ae, rng.normal(size=(4, 6))) >= 0.0)


# ---------------------------------------------------------------- penalty


def test_penalty_examples():
    assert contractive_penalty(square_ae(2), np.array([1.0, 1.0]))[0] == 2.0
    assert contractive_penalty(square_ae(2), np.array([-1.0, -1.0]))[0] == 0.0


@pytest.mark.parametrize("sizes", [[9], [8, 11]])
def test_penalty_matches_fd_jacobian(sizes):
    rng = np.random.default_rng(len(sizes))
    for _ in range(20):
        ae = jitter_biases(random_ae(rng, sizes), rng)
        x = rng.normal(size=6)
        fd_jac = finite_diff_jacobian(lambda v: encode(ae, v), x, 1e-6)
        value, _ = contractive_penalty(ae, x)
        assert relative_error(np.array(value), np.array(np.sum(fd_jac**2))) <= 1e-4
        np.testing.assert_allclose(encoder_jacobian(ae, x), fd_jac, atol=1e-6)


@pytest.mark.parametrize("sizes", [[9], [8, 11]])
def test_penalty_gradient_matches_fd(sizes):
    rng = np.random.default_rng(10 + len(sizes))
    for _ in range(20):
        ae = jitter_biases(random_ae(rng, sizes), rng)
        x = rng.normal(size=(3, 6))
        _, grads = contractive_penalty(ae, x)
        for p, g in zip(ae.parameters(), grads):
            def f(v, p=p):
                saved = p.copy()
                p[...] = v
                out = contractive_penalty(ae, x)[0]
                p[...] = saved
                return out
            fd = finite_diff_grad(f, p.copy(), 1e-6)
            if np.linalg.norm(fd) == 0 and np.linalg.norm(g) == 0:
                continue
            assert relative_error(g, fd) <= 1e-4


# ------------------------------------------------------------------- loss


def test_loss_exact_reconstruction_zero():
    cfg = AeTrainConfig(lam=0.0, noise_sigmas=(0.0,))
    y = np.array([[1.0, 2.0], [0.5, 3.0]])
    loss, _ = ae_loss(square_ae(2), y, RngStream(0), cfg, root_relative=False)
    assert loss == 0.0


def test_loss_penalty_weighting():
    cfg = AeTrainConfig(lam=0.1, noise_sigmas=(0.0,))
    loss, _ = ae_loss(square_ae(2), np.array([[1.0, 1.0]]), RngStream(0), cfg, root_relative=False)
    assert loss == pytest.approx(0.2, abs=1e-15)


def test_loss_empty_batch():
    with pytest.raises(ParameterError):
        ae_loss(square_ae(2), np.zeros((0, 2)), RngStream(0), AeTrainConfig())


@pytest.mark.parametrize("sigma", [0.0, 0.4])
def test_loss_gradient_two_layer_fd(sigma):
    rng = np.random.default_rng(3)
    cfg = AeTrainConfig(lam=0.1, noise_sigmas=(sigma,))
    for trial in range(20):
        ae = jitter_biases(random_ae(rng, [7, 9]), rng)
        y = rng.normal(size=(4, 6))
        _, grads = ae_loss(ae, y, RngStream(trial), cfg, root_relative=False)
        for p, g in zip(ae.parameters(), grads):
            def f(v, p=p):
                saved = p.copy()
                p[...] = v
                out = ae_loss(ae, y, RngStream(trial), cfg, root_relative=False)[0]
                p[...] = saved
                return out
            assert relative_error(g, finite_diff_grad(f, p.copy(), 1e-6)) <= 1e-4


# --------------------------------------------------------------- training


def small_config(**kw):
    base = dict(lam=0.1, noise_sigmas=(40.0,), learning_rate=1e-3, batch_size=32, epochs=3, seed=5)
    base.update(kw)
    return AeTrainConfig(**base)


def test_pretrain_one_layer_equals_single_dae():
    y = pose_batch(40)
    cfg = small_config()
    a = pretrain_layerwise(y, [60], cfg)
    b = train_dae(y, 60, 40.0, cfg)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


def test_pretrain_call_order(monkeypatch):
    calls = []
    real = aem.train_dae

    def spy(data, hidden_dim, sigma, config, layer_index=0, **kw):
        calls.append((data.copy(), hidden_dim, sigma))
        return real(data, hidden_dim, sigma, config, layer_index=layer_index, **kw)

    monkeypatch.setattr(aem, "train_dae", spy)
    y = pose_batch(30)
    ae = pretrain_layerwise(y, [60, 70], small_config(noise_sigmas=(40.0, 20.0)))
    assert [(c[1], c[2]) for c in calls] == [(60, 40.0), (70, 20.0)]
    assert np.array_equal(calls[0][0], y)
    first = AutoEncoderParams([ae.enc_weights[0]], [ae.enc_biases[0]], [ae.dec_biases[0]])
    assert np.array_equal(calls[1][0], encode(first, y))
    assert ae.layer_sizes == [60, 70]


def test_pretrain_inconsistent_config():
    with pytest.raises(ParameterError):
        pretrain_layerwise(pose_batch(5), [60, 70], small_config(noise_sigmas=(40.0,)))


def test_pretrain_deterministic():
    y = pose_batch(30)
    a = pretrain_layerwise(y, [60], small_config())
    b = pretrain_layerwise(y, [60], small_config())
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_finetune_zero_epochs_identity():
    ae = pretrain_layerwise(pose_batch(20), [60], small_config())
    out = finetune_ae(ae, pose_batch(20), small_config(epochs=0))
    assert all(np.array_equal(p, q) for p, q in zip(ae.parameters(), out.parameters()))


def test_finetune_reduces_reconstruction_error():
    from latentpose.synthdata import default_skeleton, sample_pose

    model = default_skeleton()
    rng = RngStream(3)
    poses = np.stack([sample_pose(model, rng, "walking") for _ in range(500)])
    cfg = small_config(epochs=2, batch_size=64)
    ae = pretrain_layerwise(poses, [200], cfg)
    before = mean_reconstruction_error(ae, poses)
    tuned = finetune_ae(ae, poses, small_config(epochs=10, batch_size=64))
    assert mean_reconstruction_error(tuned, poses) < before
    again = finetune_ae(ae, poses, small_config(epochs=10, batch_size=64))
    assert all(np.array_equal(p, q) for p, q in zip(tuned.parameters(), again.parameters()))


def test_finetune_objective_monotone():
    y = pose_batch(64)
    cfg = small_config(epochs=6)
    ae = pretrain_layerwise(y, [80], small_config(epochs=1))
    tuned = finetune_ae(ae, y, cfg)
    before = aem._eval_objective(ae, y, cfg, 40.0, True, (2, 2))
    after = aem._eval_objective(tuned, y, cfg, 40.0, True, (2, 2))
    assert after <= before


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    ae = jitter_biases(random_ae(rng, [8, 10]), rng)
    ae.save(tmp_path / "ae.bin")
    back = AutoEncoderParams.load(tmp_path / "ae.bin")
    assert all(np.array_equal(p, q) for p, q in zip(ae.parameters(), back.parameters()))
