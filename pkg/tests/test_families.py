"""Control families, well functions, restricted affine invariance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowmap import families as fam
from flowmap.families import AffineRestriction, apply_restriction, certify_well


class TestReluField:
    def test_zero_V_gives_zero_field(self):
        f = fam.relu_field(np.zeros((2, 3)), np.ones((3, 2)), np.ones(3))
        z = np.array([[0.3, -0.7], [2.0, 1.0]])
        np.testing.assert_array_equal(f.eval(z), np.zeros((2, 2)))

    def test_1d_well_vanishes_on_interval(self):
        w = fam.relu_well_1d(-0.5, 1.5)
        inside = np.linspace(-0.5, 1.5, 101)[:, None]
        np.testing.assert_array_equal(w.field.eval(inside), np.zeros((101, 1)))
        assert w.field.eval(np.array([2.5]))[0] == pytest.approx(0.5)
        assert w.field.eval(np.array([-1.5]))[0] == pytest.approx(0.5)

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_nd_well_value(self, n):
        w = fam.relu_well_nd(n)
        x = np.zeros(n)
        x[0] = 2.0
        np.testing.assert_allclose(w.field.eval(x), np.full(n, 1.0 / (2 * n)), rtol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fam.relu_field(np.zeros((2, 3)), np.ones((3, 3)), np.ones(3))
        with pytest.raises(ValueError):
            fam.relu_field(np.zeros((2, 3)), np.ones((3, 2)), np.ones(4))

    def test_lipschitz_is_operator_norm_product(self):
        V = np.array([[1.0, -2.0]])
        W = np.array([[3.0], [0.5]])
        f = fam.relu_field(V, W, np.zeros(2))
        assert f.lipschitz_bound == pytest.approx(
            np.linalg.norm(V, 2) * np.linalg.norm(W, 2))


class TestSigmoidThreshold:
    def test_soft_threshold_values(self):
        assert fam.sigmoid_soft_threshold(0.5) == 0.0
        assert fam.sigmoid_soft_threshold(1.5) == 0.25
        assert fam.sigmoid_soft_threshold(3.0) == 0.5

    def test_smn_at_zero(self):
        for M, N in ((25, 5), (100, 10)):
            assert fam.sigmoid_smn(M, N, 0.0) <= 1.0 / (1.0 + math.exp(M / N))

    def test_smn_bound_on_grid(self):
        zs = np.linspace(-5, 5, 10_000)
        gap = np.max(np.abs(fam.sigmoid_soft_threshold(zs) - fam.sigmoid_smn(100, 10, zs)))
        assert gap < 0.1 + 1.0 / (1.0 + math.exp(10.0))

    def test_smn_converges_as_M_eq_N_squared(self):
        zs = np.linspace(-4, 4, 4001)
        s = fam.sigmoid_soft_threshold(zs)
        gaps = []
        for N in (4, 8, 16):
            M = N * N
            gap = float(np.max(np.abs(s - fam.sigmoid_smn(M, N, zs))))
            assert gap < 1.0 / N + 1.0 / (1.0 + math.exp(N))
            gaps.append(gap)
        assert gaps[0] > gaps[1] > gaps[2]

    def test_validation(self):
        with pytest.raises(ValueError):
            fam.sigmoid_smn(0, 5, 0.0)


class TestWellCertification:
    @pytest.mark.parametrize("well,tol", [
        (fam.relu_well_1d(-1.0, 1.0), 1e-12),
        (fam.relu_well_nd(2), 1e-12),
        (fam.soft_threshold_well_1d(), 1e-12),
    ])
    def test_exact_wells(self, well, tol):
        report = certify_well(well, samples_per_line=20_000, tol=tol)
        assert report["passed"]
        assert report["inside_max_abs"] <= tol

    def test_smn_wells_pass_at_their_slack(self):
        for well in (fam.smn_well_1d(100, 10), fam.smn_well_nd(100, 10, 2)):
            report = certify_well(well, samples_per_line=20_000)
            assert report["passed"]
            assert well.slack == pytest.approx(1.0 / (1.0 + math.exp(10.0)))

    def test_block_wells(self):
        for sigma in ("relu", "sigmoid", "tanh"):
            report = certify_well(fam.block_well_1d(sigma), samples_per_line=20_000)
            assert report["passed"]


class TestBlockField:
    def test_zero_V(self):
        f = fam.block_field(np.zeros((2, 2)), np.eye(2), np.zeros(2),
                            np.eye(2), np.zeros(2), "relu")
        np.testing.assert_array_equal(f.eval(np.array([1.0, -2.0])), np.zeros(2))

    def test_reduces_to_relu_composite_on_positive_orthant(self):
        rng = np.random.default_rng(0)
        V, W2, b2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), rng.normal(size=2)
        block = fam.block_field(V, W2, b2, np.eye(2), np.zeros(2), "relu")
        composite = fam.relu_field(V, W2, b2)
        z = rng.uniform(0.1, 2.0, size=(20, 2))  # relu(z) = z here
        np.testing.assert_allclose(block.eval(z), composite.eval(z), rtol=1e-12)

    def test_block_well_zero_set(self):
        # s(a sigma(z) + b) vanishes exactly on the preimage interval.
        for sigma, (z1, z2) in (("relu", (0.5, 1.5)), ("tanh", (-1.0, 1.0))):
            w = fam.block_well_1d(sigma)
            zs = np.linspace(z1, z2, 501)[:, None]
            assert float(np.max(np.abs(w.field.eval(zs)))) <= 1e-12
            outside = np.array([[z1 - 0.3], [z2 + 0.3]])
            assert np.all(w.field.eval(outside) > 0)

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            fam.block_field(np.eye(1), np.eye(1), [0.0], np.eye(1), [0.0], "swish")


class TestApplyRestriction:
    def test_identity_restriction(self):
        w = fam.relu_well_1d(0.0, 1.0)
        r = AffineRestriction(np.ones(1), np.eye(1), np.zeros(1))
        g = apply_restriction(w.field, r)
        xs = np.linspace(-2, 3, 40)[:, None]
        np.testing.assert_allclose(g.eval(xs), w.field.eval(xs), rtol=1e-14)

    def test_translate_and_flip_1d_well(self):
        w = fam.relu_well_1d(0.0, 1.0)
        beta = 0.7
        r = AffineRestriction(-np.ones(1), np.eye(1), np.array([beta]))
        g = apply_restriction(w.field, r)
        # g(x) = -h(x + beta): zero set translated by -beta, sign flipped.
        inside = np.linspace(-beta, 1.0 - beta, 50)[:, None]
        np.testing.assert_array_equal(g.eval(inside), np.zeros_like(inside))
        assert g.eval(np.array([1.5 - beta]))[0] < 0

    def test_frozen_drive_nd(self):
        w = fam.relu_well_nd(3)
        D = np.array([1.0, 0.0, 0.0])
        A = np.zeros((3, 3))
        A[2, 2] = 0.5
        b = np.array([0.0, 0.0, 1.8])
        g = apply_restriction(w.field, AffineRestriction(D, A, b))
        z = np.array([0.4, -0.2, 1.0])  # slot = 0.5*1.0 + 1.8 = 2.3 outside
        vel = g.eval(z)
        assert vel[1] == 0.0 and vel[2] == 0.0
        assert vel[0] == pytest.approx((2.3 - 1.0) / 6.0)
        # frozen argument: exact flow is linear motion of coordinate 0 only
        out = g.exact_flow(z, 2.0)
        assert out[0] == pytest.approx(z[0] + 2.0 * vel[0])
        assert out[1] == z[1] and out[2] == z[2]

    def test_regime_validation(self):
        with pytest.raises(ValueError):
            AffineRestriction(np.array([2.0]), np.eye(1), np.zeros(1))
        with pytest.raises(ValueError):
            AffineRestriction(np.ones(2), np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))
        with pytest.raises(ValueError):
            AffineRestriction(np.ones(1), np.array([[1.5]]), np.zeros(1))
        # tensor regime admits arbitrary A
        AffineRestriction(np.ones(2), np.array([[1.0, 0.5], [0.0, 1.0]]),
                          np.zeros(2), regime="tensor")

    @given(st.floats(-0.9, 0.9), st.floats(-1.0, 1.0), st.floats(-0.9, 0.9),
           st.floats(-1.0, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_composition_matches_algebra(self, a1, b1, a2, b2):
        w = fam.relu_well_1d(-0.4, 0.6)
        r1 = AffineRestriction(np.ones(1), np.array([[a1]]), np.array([b1]))
        r2 = AffineRestriction(-np.ones(1), np.array([[a2]]), np.array([b2]))
        g1 = apply_restriction(apply_restriction(w.field, r1), r2)
        g2 = apply_restriction(w.field, r1.compose_inside(r2))
        xs = np.linspace(-3, 3, 41)[:, None]
        np.testing.assert_allclose(g1.eval(xs), g2.eval(xs), atol=1e-12)

    def test_lipschitz_update(self):
        w = fam.relu_well_nd(2)
        r = AffineRestriction(np.array([1.0, 0.0]), 0.5 * np.eye(2), np.zeros(2))
        g = apply_restriction(w.field, r)
        assert g.lipschitz_bound <= w.field.lipschitz_bound * 0.5 + 1e-12


class TestWellTransforms:
    def test_translated_zero_box(self):
        w = fam.relu_well_1d(0.0, 1.0).translated(2.5)
        assert (w.q1, w.q2) == (2.5, 3.5)
        assert certify_well(w, samples_per_line=5000)["passed"]

    def test_flipped_signs(self):
        w = fam.relu_well_1d(0.0, 1.0).flipped()
        assert w.outside_sign.left == -1 and w.outside_sign.right == -1
        assert w.field.eval(np.array([2.0]))[0] < 0

    def test_section_of_nd_well(self):
        w1 = fam.relu_well_nd(3).section_1d()
        assert (w1.q1, w1.q2) == (-1.0, 1.0)
        assert w1.field.eval(np.array([2.0]))[0] == pytest.approx(1.0 / 6.0)
        assert certify_well(w1, samples_per_line=5000)["passed"]
