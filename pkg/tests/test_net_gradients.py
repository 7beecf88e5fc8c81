"""Backward passes against central finite differences.

Every hand-written adjoint must track the numeric gradient to 1e-4
relative (1e-3 for the full U-Net composition). Each check contracts
the op's output against a fixed random matrix so a single scalar probes
all output entries at once.
"""

import numpy as np

from fd import fd_array, fd_tree, rel_err, rel_err_tree
from motiongraph.net import (
    UNetConfig,
    affinity_decode,
    affinity_decode_backward,
    continuous_conv,
    continuous_conv_backward,
    init_mlp,
    init_pointnet_decoder,
    init_pointnet_encoder,
    init_unet,
    joint_knn,
    mlp_backward,
    mlp_forward,
    pad_support,
    pointnet_decode,
    pointnet_decode_backward,
    pointnet_encode,
    pointnet_encode_backward,
    shape_conv,
    shape_conv_backward,
    unet_backward,
    unet_forward,
)
from motiongraph.net.layers import layer_norm, layer_norm_backward

TOL = 1e-4


class TestMLPGradients:
    def test_params_and_input(self):
        rng = np.random.default_rng(30)
        params = init_mlp(rng, [3, 8, 5, 4])
        x = rng.standard_normal((6, 3))
        probe = rng.standard_normal((6, 4))

        y, acts = mlp_forward(params, x)
        d_x, grads = mlp_backward(params, acts, probe)

        def loss_p(p):
            out, _ = mlp_forward(p, x)
            return float((probe * out).sum())

        def loss_x(v):
            out, _ = mlp_forward(params, v)
            return float((probe * out).sum())

        assert rel_err_tree(grads, fd_tree(loss_p, params)) < TOL
        assert rel_err(d_x, fd_array(loss_x, x)) < TOL


class TestContinuousConvGradients:
    def test_kernel_and_features(self):
        rng = np.random.default_rng(31)
        feats = rng.standard_normal((6, 2))
        desc = rng.standard_normal((6, 3))
        rows = [[j for j in (i - 1, i + 1) if 0 <= j < 6] for i in range(6)]
        neighbors = pad_support(rows, 2, descriptors=desc)
        kernel = init_mlp(rng, [3, 8, 6])
        probe = rng.standard_normal((6, 3))

        out, cache = continuous_conv(feats, desc, neighbors, kernel, 3)
        d_feats, grads = continuous_conv_backward(kernel, cache, probe)

        def loss_k(k):
            o, _ = continuous_conv(feats, desc, neighbors, k, 3)
            return float((probe * o).sum())

        def loss_f(f):
            o, _ = continuous_conv(f, desc, neighbors, kernel, 3)
            return float((probe * o).sum())

        assert rel_err_tree(grads, fd_tree(loss_k, kernel)) < TOL
        assert rel_err(d_feats, fd_array(loss_f, feats)) < TOL


class TestShapeConvGradients:
    def test_kernel(self):
        rng = np.random.default_rng(32)
        joints = rng.standard_normal((3, 4, 3))
        centered = joints - joints.mean(axis=1, keepdims=True)
        nn = joint_knn(centered, 2)
        kernel = init_mlp(rng, [3, 8, 6])
        probe = rng.standard_normal((3, 2))

        _, cache = shape_conv(centered, nn, kernel, 2)
        grads = shape_conv_backward(kernel, cache, probe)

        def loss_k(k):
            o, _ = shape_conv(centered, nn, k, 2)
            return float((probe * o).sum())

        assert rel_err_tree(grads, fd_tree(loss_k, kernel)) < TOL


class TestLayerNormGradients:
    def test_input_and_params(self):
        rng = np.random.default_rng(33)
        x = rng.standard_normal((5, 7))
        gamma = rng.uniform(0.5, 1.5, 7)
        beta = rng.standard_normal(7)
        probe = rng.standard_normal((5, 7))

        _, cache = layer_norm(x, gamma, beta)
        d_x, d_gamma, d_beta = layer_norm_backward(cache, probe)

        def loss(v, g, b):
            y, _ = layer_norm(v, g, b)
            return float((probe * y).sum())

        assert rel_err(d_x, fd_array(lambda v: loss(v, gamma, beta), x)) < TOL
        assert rel_err(d_gamma, fd_array(lambda g: loss(x, g, beta), gamma)) < TOL
        assert rel_err(d_beta, fd_array(lambda b: loss(x, gamma, b), beta)) < TOL


class TestAffinityDecodeGradients:
    def test_latent(self):
        rng = np.random.default_rng(34)
        latent = rng.standard_normal((5, 3))
        probe = rng.standard_normal((5, 5))

        _, cache = affinity_decode(latent)
        d_latent = affinity_decode_backward(cache, probe)

        def loss(v):
            a, _ = affinity_decode(v)
            return float((probe * a).sum())

        assert rel_err(d_latent, fd_array(loss, latent)) < TOL


class TestPointNetGradients:
    def test_encoder_params(self):
        rng = np.random.default_rng(35)
        params = init_pointnet_encoder(rng, hidden=(8,), n_virtual=4)
        shape = rng.standard_normal((6, 3))
        probe = rng.standard_normal((4, 3))

        _, cache = pointnet_encode(params, shape)
        grads = pointnet_encode_backward(params, cache, probe)

        def loss(p):
            v, _ = pointnet_encode(p, shape)
            return float((probe * v).sum())

        assert rel_err_tree(grads, fd_tree(loss, params)) < TOL

    def test_decoder_params_and_input(self):
        rng = np.random.default_rng(36)
        params = init_pointnet_decoder(rng, n_joints=5, hidden=(8,), n_virtual=4)
        virtual = rng.standard_normal((4, 3))
        probe = rng.standard_normal((5, 3))

        _, cache = pointnet_decode(params, virtual)
        d_virtual, grads = pointnet_decode_backward(params, cache, probe)

        def loss_p(p):
            s, _ = pointnet_decode(p, virtual)
            return float((probe * s).sum())

        def loss_v(v):
            s, _ = pointnet_decode(params, v)
            return float((probe * s).sum())

        assert rel_err_tree(grads, fd_tree(loss_p, params)) < TOL
        assert rel_err(d_virtual, fd_array(loss_v, virtual)) < TOL


class TestUNetGradients:
    def _setup(self, seed=37, n=6):
        rng = np.random.default_rng(seed)
        config = UNetConfig(input_width=6, widths=(5, 4), kernel_hidden=(8,), joint_k=1)
        params = init_unet(rng, config)
        joints = rng.standard_normal((n, 2, 3))
        x = joints.reshape(n, 6)
        rows = [[j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)]
        support = pad_support(rows, 2, descriptors=x)
        return rng, config, params, x, joints, support

    def test_output_norm_gradient(self):
        rng, config, params, x, joints, support = self._setup()

        out = unet_forward(params, config, x, joints, support)
        grads, _ = unet_backward(params, config, out.cache, d_xhat=2.0 * out.x_hat)

        def loss(p):
            o = unet_forward(p, config, x, joints, support)
            return float((o.x_hat**2).sum())

        assert rel_err_tree(grads, fd_tree(loss, params)) < 1e-3

    def test_gradients_injected_at_every_map(self):
        rng, config, params, x, joints, support = self._setup(seed=38)
        out = unet_forward(params, config, x, joints, support)
        probes_enc = [np.asarray(rng.standard_normal(m.shape)) for m in out.encoder_maps]
        probes_dec = [np.asarray(rng.standard_normal(m.shape)) for m in out.decoder_maps]
        probe_latent = rng.standard_normal(out.latent.shape)

        grads, _ = unet_backward(
            params,
            config,
            out.cache,
            d_latent=probe_latent,
            d_encoder_maps=probes_enc,
            d_decoder_maps=probes_dec,
        )

        def loss(p):
            o = unet_forward(p, config, x, joints, support)
            total = float((probe_latent * o.latent).sum())
            for probe, m in zip(probes_enc, o.encoder_maps):
                total += float((probe * m).sum())
            for probe, m in zip(probes_dec, o.decoder_maps):
                total += float((probe * m).sum())
            return total

        assert rel_err_tree(grads, fd_tree(loss, params)) < 1e-3

    def test_input_gradient(self):
        rng, config, params, x, joints, support = self._setup(seed=39)
        probe = rng.standard_normal((6, 6))
        # fd_array perturbs its argument in place, so the geometry the
        # backward pass treats as constant (descriptors, joints) must
        # live in separate arrays; x is otherwise a view of joints
        x = x.copy()
        descriptors = x.copy()

        out = unet_forward(params, config, x, joints, support, descriptors=descriptors)
        _, d_x = unet_backward(params, config, out.cache, d_xhat=probe)

        def loss(v):
            o = unet_forward(params, config, v, joints, support, descriptors=descriptors)
            return float((probe * o.x_hat).sum())

        assert rel_err(d_x, fd_array(loss, x)) < 1e-3
