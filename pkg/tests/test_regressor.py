import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentpose import regressor as reg
from latentpose.autoencoder import AeTrainConfig, AutoEncoderParams, decode, pretrain_layerwise
from latentpose.config import ExperimentConfig
from latentpose.errors import DimensionError, ParameterError
from latentpose.numerics import RngStream, finite_diff_grad, relative_error
from latentpose.synthdata import CameraConfig, default_skeleton, generate_dataset

# loss-drop contracts use the pipeline's default epoch budgets
EXPERIMENT = ExperimentConfig()
TINY = reg.CnnShape(image_size=8, channels=(2, 3, 2), kernels=(1, 1, 1), fc=(5, 4, 3))


@pytest.fixture(scope="module")
def data200():
    return generate_dataset(default_skeleton(), CameraConfig(), 200, 10, seed=0).train


@pytest.fixture(scope="module")
def small_ae(data200):
    cfg = AeTrainConfig(epochs=5, batch_size=64, seed=1)
    return pretrain_layerwise(data200.poses, [120], cfg)


def tiny_net(out_dim=4, seed=0, head=None):
    rng = np.random.default_rng(seed)
    enc = reg.ImageEncoderParams.initialize(TINY, out_dim, RngStream(seed), rng.normal(size=out_dim), 1.7)
    for b in enc.conv_b + enc.fc_b:
        b += rng.normal(scale=0.1, size=b.shape)
    if head is None:
        return reg.StackedNetworkParams(enc)
    ws, bs, rel = [], [], []
    prev = out_dim
    for i, size in enumerate(head):
        ws.append(rng.normal(size=(size, prev)))
        bs.append(rng.normal(size=size))
        rel.append(i < len(head) - 1)
        prev = size
    return reg.StackedNetworkParams(enc, ws, bs, rel, True, "ours")


def check_net_gradients(net, x, t, training=False, p=0.0, seed=0):
    _, grads = reg.squared_loss(net, x, t, training, p, RngStream(seed))
    for param, g in zip(net.parameters(), grads):
        def f(v, param=param):
            saved = param.copy()
            param[...] = v
            out = reg.squared_loss(net, x, t, training, p, RngStream(seed))[0]
            param[...] = saved
            return out
        assert relative_error(g, finite_diff_grad(f, param.copy(), 1e-6)) <= 1e-4


def test_zero_params_zero_output():
    net = tiny_net()
    enc = net.encoder
    for arr in enc.parameters():
        arr[...] = 0.0
    enc.out_shift[...] = 0.0
    x = np.random.default_rng(0).normal(size=(3, 1, 8, 8))
    np.testing.assert_array_equal(reg.cnn_forward(enc, x), np.zeros((3, 4)))


def test_full_network_backward_fd():
    x = np.random.default_rng(1).normal(size=(2, 1, 8, 8))
    t = np.random.default_rng(2).normal(size=(2, 4))
    check_net_gradients(tiny_net(), x, t)


def test_full_network_backward_fd_with_dropout():
    x = np.random.default_rng(3).normal(size=(2, 1, 8, 8))
    t = np.random.default_rng(4).normal(size=(2, 4))
    check_net_gradients(tiny_net(seed=1), x, t, training=True, p=0.3, seed=9)


def test_decoder_head_gradients_fd():
    x = np.random.default_rng(5).normal(size=(3, 1, 8, 8))
    t = np.random.default_rng(6).normal(size=(3, 6))
    check_net_gradients(tiny_net(seed=2, head=[7, 6]), x, t)


def test_larger_kernels_backward_fd():
    shape = reg.CnnShape(image_size=16, channels=(2, 2, 2), kernels=(3, 3, 1), fc=(4,))
    enc = reg.ImageEncoderParams.initialize(shape, 3, RngStream(3), np.zeros(3), 1.0)
    for b in enc.conv_b + enc.fc_b:
        b += 0.2  # keep pre-activations off the ReLU kink
    net = reg.StackedNetworkParams(enc)
    x = np.random.default_rng(7).normal(size=(2, 1, 16, 16))
    check_net_gradients(net, x, np.ones((2, 3)))


def test_dropout_zero_modes_agree():
    enc = tiny_net().encoder
    x = np.random.default_rng(8).normal(size=(2, 1, 8, 8))
    a = reg.cnn_forward(enc, x, training=True, dropout_p=0.0, rng=RngStream(0))
    b = reg.cnn_forward(enc, x, training=False)
    assert np.array_equal(a, b)


def test_cnn_dimension_mismatch():
    enc = tiny_net().encoder
    with pytest.raises(DimensionError):
        reg.cnn_forward(enc, np.zeros((1, 2, 8, 8)))
    with pytest.raises(DimensionError):
        reg.cnn_forward(enc, np.zeros((1, 1, 16, 16)))


def test_config_rejects_bad_dropout():
    with pytest.raises(ParameterError):
        reg.RegTrainConfig(dropout_p=1.0)


def test_stack_decoder_composition_and_copy(small_ae, data200):
    cnn = reg.new_latent_cnn(reg.CnnShape(), small_ae, data200.poses, reg.RegTrainConfig())
    stacked = reg.stack_decoder(cnn, small_ae)
    x = data200.images[:4]
    expected = decode(small_ae, reg.cnn_forward(cnn, x))
    expected[:, :3] = 0.0
    assert np.array_equal(reg.predict_pose(stacked, x), expected)
    before = small_ae.enc_weights[0].copy()
    stacked.head_w[0] += 1.0
    assert np.array_equal(small_ae.enc_weights[0], before)


def test_stack_decoder_rejects_mismatch(small_ae):
    cnn = reg.ImageEncoderParams.initialize(reg.CnnShape(), 99, RngStream(0), np.zeros(99), 1.0)
    with pytest.raises(DimensionError):
        reg.stack_decoder(cnn, small_ae)
    with pytest.raises(DimensionError):
        reg.train_latent_regression(cnn, small_ae, np.zeros((1, 1, 32, 32)), np.zeros((1, 51)), reg.RegTrainConfig())


def test_predict_deterministic_and_root_zero(small_ae, data200):
    cnn = reg.new_latent_cnn(reg.CnnShape(), small_ae, data200.poses, reg.RegTrainConfig())
    stacked = reg.stack_decoder(cnn, small_ae)
    a = reg.predict_pose(stacked, data200.images[:3])
    assert np.array_equal(a, reg.predict_pose(stacked, data200.images[:3]))
    assert np.all(a[:, :3] == 0.0)
    assert reg.predict_pose(stacked, data200.images[0]).shape == (51,)


def inference_loss(net, images, targets):
    return reg.squared_loss(net, images, targets)[0]


def test_latent_regression_contract(small_ae, data200):
    config = dataclasses.replace(EXPERIMENT.reg_config(EXPERIMENT.train_latent_epochs), seed=2)
    cnn0 = reg.new_latent_cnn(reg.CnnShape(), small_ae, data200.poses, config)
    ae_before = [p.copy() for p in small_ae.parameters()]
    cnn = reg.train_latent_regression(cnn0, small_ae, data200.images, data200.poses, config)
    assert all(np.array_equal(p, q) for p, q in zip(ae_before, small_ae.parameters()))
    targets = reg.latent_targets(small_ae, data200.poses)
    start = inference_loss(reg.StackedNetworkParams(cnn0), data200.images, targets)
    end = inference_loss(reg.StackedNetworkParams(cnn), data200.images, targets)
    assert end <= 0.5 * start
    short = reg.RegTrainConfig(seed=2, epochs=2)
    a = reg.train_latent_regression(cnn0, small_ae, data200.images, data200.poses, short)
    b = reg.train_latent_regression(cnn0, small_ae, data200.images, data200.poses, short)
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_finetune_stacked_contract(small_ae, data200):
    config = reg.RegTrainConfig(seed=3, epochs=5)
    cnn = reg.new_latent_cnn(reg.CnnShape(), small_ae, data200.poses, config)
    cnn = reg.train_latent_regression(cnn, small_ae, data200.images, data200.poses, reg.RegTrainConfig(seed=3, epochs=5))
    stacked = reg.stack_decoder(cnn, small_ae)
    same = reg.finetune_stacked(stacked, data200.images, data200.poses, reg.RegTrainConfig(epochs=0))
    assert all(np.array_equal(p, q) for p, q in zip(stacked.parameters(), same.parameters()))
    tuned = reg.finetune_stacked(stacked, data200.images, data200.poses, config)
    from latentpose.eval import mpjpe_batch

    before = np.mean(mpjpe_batch(reg.predict_batched(stacked, data200.images), data200.poses))
    after = np.mean(mpjpe_batch(reg.predict_batched(tuned, data200.images), data200.poses))
    assert after <= before
    assert not np.array_equal(tuned.head_w[0], stacked.head_w[0])  # decoder updated too


@pytest.mark.parametrize("extra", [None, 2000])
def test_direct_and_extrafc_contract(data200, extra):
    config = dataclasses.replace(EXPERIMENT.reg_config(EXPERIMENT.train_direct_epochs), seed=4)
    if extra is None:
        net = reg.train_direct_baseline(data200.images, data200.poses, config, reg.CnnShape())
        init = reg.train_direct_baseline(data200.images, data200.poses, reg.RegTrainConfig(seed=4, epochs=0), reg.CnnShape())
    else:
        net = reg.train_extrafc_baseline(data200.images, data200.poses, config, reg.CnnShape(), extra)
        init = reg.train_extrafc_baseline(data200.images, data200.poses, reg.RegTrainConfig(seed=4, epochs=0),
                                          reg.CnnShape(), extra)
        assert net.encoder.fc_w[-1].shape[0] == 2000
    assert net.out_dim == 51
    assert inference_loss(net, data200.images, data200.poses) <= 0.5 * inference_loss(init, data200.images, data200.poses)


def test_direct_seed_determinism(data200):
    cfg = reg.RegTrainConfig(seed=5, epochs=2)
    a = reg.train_direct_baseline(data200.images[:50], data200.poses[:50], cfg, reg.CnnShape())
    b = reg.train_direct_baseline(data200.images[:50], data200.poses[:50], cfg, reg.CnnShape())
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    c = reg.train_extrafc_baseline(data200.images[:50], data200.poses[:50], cfg, reg.CnnShape(), 30)
    d = reg.train_extrafc_baseline(data200.images[:50], data200.poses[:50], cfg, reg.CnnShape(), 30)
    assert all(np.array_equal(p, q) for p, q in zip(c.parameters(), d.parameters()))


def test_augmented_training_uses_crops(data200):
    cfg = reg.RegTrainConfig(seed=1, epochs=1, augment=True)
    net = reg.train_direct_baseline(data200.images[:20], data200.poses[:20], cfg, reg.CnnShape())
    assert net.encoder.image_size == reg.crop_size(32) == 28
    assert reg.center_crops(data200.images[:2]).shape == (2, 1, 28, 28)


# ------------------------------------------------------------------- PCA


def test_pca_line_and_full_rank():
    t = np.linspace(-1, 1, 12)[:, None]
    line = np.hstack([t, 2 * t, -t]) + np.array([1.0, 2.0, 3.0])
    basis = reg.fit_pca(line, 1)
    np.testing.assert_allclose(basis.reconstruct(basis.project(line)), line, atol=1e-12)
    y = np.random.default_rng(0).normal(size=(60, 51))
    full = reg.fit_pca(y, 51)
    np.testing.assert_allclose(full.reconstruct(full.project(y)), y, atol=1e-9)


def test_pca_eigendecomposition_oracle():
    x = np.random.default_rng(1).normal(size=(10, 6)) * np.arange(1, 7)
    basis = reg.fit_pca(x, 5)
    evals, evecs = np.linalg.eigh(np.cov(x, rowvar=False))
    order = np.argsort(evals)[::-1][:5]
    np.testing.assert_allclose(basis.explained_variance, evals[order], atol=1e-8)
    for comp, vec in zip(basis.components, evecs[:, order].T):
        assert min(np.max(np.abs(comp - vec)), np.max(np.abs(comp + vec))) <= 1e-8
    assert np.all(np.diff(basis.explained_variance) <= 0)
    np.testing.assert_allclose(basis.components @ basis.components.T, np.eye(5), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8))
def test_pca_orthonormal_descending(seed, k):
    x = np.random.default_rng(seed).normal(size=(12, 8))
    basis = reg.fit_pca(x, k)
    np.testing.assert_allclose(basis.components @ basis.components.T, np.eye(k), atol=1e-10)
    assert np.all(np.diff(basis.explained_variance) <= 1e-12)


def test_pca_errors():
    with pytest.raises(ParameterError):
        reg.fit_pca(np.zeros((10, 6)), 0)
    with pytest.raises(ParameterError):
        reg.fit_pca(np.zeros((10, 6)), 7)
    with pytest.raises(ParameterError):
        reg.fit_pca(np.zeros((3, 6)), 3)


@pytest.mark.parametrize("k", [30, 40, 51])
def test_pca_baseline_sizes(data200, k):
    cfg = reg.RegTrainConfig(seed=6, epochs=1)
    net = reg.train_pca_baseline(data200.images[:60], data200.poses[:60], cfg, reg.CnnShape(), k)
    assert net.encoder.out_dim == k and net.out_dim == 51
    again = reg.train_pca_baseline(data200.images[:60], data200.poses[:60], cfg, reg.CnnShape(), k)
    assert all(np.array_equal(p, q) for p, q in zip(net.parameters(True), again.parameters(True)))


def test_pca_basis_frozen_without_finetune(data200):
    cfg = reg.RegTrainConfig(seed=6, epochs=2)
    net = reg.train_pca_baseline(data200.images[:60], data200.poses[:60], cfg, reg.CnnShape(), 30)
    basis = reg.fit_pca(data200.poses[:60], 30)
    assert np.array_equal(net.head_w[0], basis.components.T)
    tuned = reg.train_pca_baseline(data200.images[:60], data200.poses[:60], cfg, reg.CnnShape(), 30,
                                   finetune_config=cfg)
    assert not np.array_equal(tuned.head_w[0], basis.components.T)


def test_stacked_save_load(tmp_path, small_ae, data200):
    cnn = reg.new_latent_cnn(reg.CnnShape(), small_ae, data200.poses, reg.RegTrainConfig())
    net = reg.stack_decoder(cnn, small_ae)
    net.save(tmp_path / "m.bin")
    back = reg.StackedNetworkParams.load(tmp_path / "m.bin")
    assert back.kind == "ours" and back.head_relu == net.head_relu
    assert all(np.array_equal(p, q) for p, q in zip(net.parameters(), back.parameters()))
    assert np.array_equal(reg.predict_pose(net, data200.images[:2]), reg.predict_pose(back, data200.images[:2]))


def test_reglog_csv():
    log = reg.RegLog()
    log.add(1, 2.5)
    log.add(2, 1.25, 30.0)
    assert log.to_csv() == "epoch,train_loss,eval_mpjpe\n1,2.500000,\n2,1.250000,30.000000\n"
