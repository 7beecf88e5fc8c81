"""Loss values against frozen formula oracles, gradients against FD."""

import numpy as np
import pytest

from motiongraph.graphopt import ObjectiveWeights, evaluate_objective
from motiongraph.train import (
    loss_affinity,
    loss_autoencoder,
    loss_reconstruction,
    loss_smoothness,
)

from fd import fd_array, rel_err
from synth import scene_from_points, static_points

TOL = 1e-4


def _random_affinity(rng, n):
    a = rng.uniform(0.0, 0.6, size=(n, n))
    np.fill_diagonal(a, 0.0)
    return a


class TestAutoencoderLoss:
    def test_scalar_mismatch_oracle(self):
        # One frame, one joint, output off by 2 in a single coordinate.
        x_in = np.array([[1.0, 0.0, 0.0]])
        x_hat = np.array([[3.0, 0.0, 0.0]])
        value, _, _, _ = loss_autoencoder(x_in, x_hat, [], [], n_joints=1)
        assert value == 4.0

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(3)
        n, width, p = 5, 6, 2
        x_in = rng.standard_normal((n, width))
        x_hat = rng.standard_normal((n, width))
        enc = [rng.standard_normal((n, 4)), rng.standard_normal((n, 3))]
        dec = [rng.standard_normal((n, 4)), rng.standard_normal((n, width))]
        value, _, _, _ = loss_autoencoder(x_in, x_hat, enc, dec, p)
        # Width-4 maps pair up; the bottleneck (width 3) and the decoded
        # output stay unpaired.
        expected = (np.sum((x_hat - x_in) ** 2) + np.sum((enc[0] - dec[0]) ** 2)) / (n * p)
        assert abs(value - expected) <= 1e-12

    def test_gradients_match_fd(self):
        rng = np.random.default_rng(4)
        n, width, p = 4, 5, 2
        x_in = rng.standard_normal((n, width))
        x_hat = rng.standard_normal((n, width))
        enc = [rng.standard_normal((n, 3)), rng.standard_normal((n, 2))]
        dec = [rng.standard_normal((n, 3)), rng.standard_normal((n, width))]
        value, d_hat, d_enc, d_dec = loss_autoencoder(x_in, x_hat, enc, dec, p)

        assert rel_err(d_hat, fd_array(lambda v: loss_autoencoder(x_in, v, enc, dec, p)[0], x_hat)) < TOL
        assert rel_err(
            d_enc[0],
            fd_array(lambda v: loss_autoencoder(x_in, x_hat, [v, enc[1]], dec, p)[0], enc[0]),
        ) < TOL
        assert rel_err(
            d_dec[0],
            fd_array(lambda v: loss_autoencoder(x_in, x_hat, enc, [v, dec[1]], p)[0], dec[0]),
        ) < TOL

    def test_mismatched_map_counts_rejected(self):
        with pytest.raises(ValueError):
            loss_autoencoder(np.zeros((2, 3)), np.zeros((2, 3)), [np.zeros((2, 2))], [], 1)


class TestAffinityLoss:
    def test_single_entry_oracle(self):
        # N=2, one entry off by one: 1/N * 1 = 0.5.
        a_d = np.array([[0.0, 1.0], [0.0, 0.0]])
        a_g = np.zeros((2, 2))
        value, grad = loss_affinity(a_d, a_g)
        assert value == 0.5
        assert np.array_equal(grad, np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(5)
        a_d = _random_affinity(rng, 5)
        a_g = _random_affinity(rng, 5)
        _, grad = loss_affinity(a_d, a_g)
        assert rel_err(grad, fd_array(lambda v: loss_affinity(v, a_g)[0], a_d)) < TOL


class TestReconstructionLoss:
    def test_uniform_offset_oracle(self):
        # Every joint 1 cm off in x: mean squared error is 1e-4 m^2.
        gt = np.zeros((3, 6))
        est = gt.copy()
        est[:, 0::3] = 0.01
        value, _ = loss_reconstruction(est, gt, n_joints=2)
        assert abs(value - 2 * 0.01**2 / 2) <= 1e-15

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(6)
        est = rng.standard_normal((4, 6))
        gt = rng.standard_normal((4, 6))
        _, grad = loss_reconstruction(est, gt, 2)
        assert rel_err(grad, fd_array(lambda v: loss_reconstruction(v, gt, 2)[0], est)) < TOL


class TestSmoothnessLoss:
    def test_matches_objective_components(self):
        # The self-supervised loss must equal the solver objective's
        # smoothness + compactness terms at unit weights, or training
        # would pull toward a different optimum than the solver.
        rng = np.random.default_rng(7)
        pts = static_points(6, 3, seed=2) + 0.1 * rng.standard_normal((6, 3, 3))
        scene = scene_from_points(pts)
        x = pts.reshape(6, 9)
        a = _random_affinity(rng, 6)
        value, _, _ = loss_smoothness(x, a)
        obj = evaluate_objective(x, a, scene, ObjectiveWeights(lambda_s=1.0, lambda_t=1.0, lambda_o=0.0))
        assert abs(value - (obj.smoothness + obj.compactness)) <= 1e-9

    def test_trace_identity(self):
        # tr(X^T L X) with the symmetrized Laplacian equals the pairwise
        # form 0.5 * sum A_ij ||x_i - x_j||^2.
        rng = np.random.default_rng(8)
        x = rng.standard_normal((7, 6))
        a = _random_affinity(rng, 7)
        sym = 0.5 * (a + a.T)
        lap = np.diag(sym.sum(axis=1)) - sym
        trace = np.trace(x.T @ lap @ x)
        pairwise = 0.5 * sum(
            a[i, j] * np.sum((x[i] - x[j]) ** 2) for i in range(7) for j in range(7)
        )
        assert abs(trace - pairwise) <= 1e-9

    def test_gradients_match_fd(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((5, 6))
        a = _random_affinity(rng, 5)
        _, d_x, d_a = loss_smoothness(x, a)
        assert rel_err(d_x, fd_array(lambda v: loss_smoothness(v, a)[0], x)) < TOL

        def wrt_a(v):
            m = v.copy()
            np.fill_diagonal(m, 0.0)
            return loss_smoothness(x, m)[0]

        fd_a = fd_array(wrt_a, a)
        np.fill_diagonal(fd_a, 0.0)
        assert rel_err(d_a, fd_a) < TOL

    def test_zero_affinity_is_zero(self):
        x = np.random.default_rng(1).standard_normal((4, 3))
        value, d_x, d_a = loss_smoothness(x, np.zeros((4, 4)))
        assert value == 0.0
        assert np.array_equal(d_x, np.zeros_like(x))
