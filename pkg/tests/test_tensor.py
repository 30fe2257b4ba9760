"""Tensor-product fields and shear-based point operations."""

import numpy as np
import pytest

from flowmap.core import Schedule, flow_eval
from flowmap.families import field_from_terms_1d
from flowmap.rates import translation_gadget
from flowmap.tensor import (shear_parts, shear_schedule, tensor_field,
                            tensor_transport)


class TestTensorField:
    def test_zero_inner(self):
        g = field_from_terms_1d([(0.0, 1.0, 0.0)])
        tf = tensor_field(g, 3)
        np.testing.assert_array_equal(tf.eval(np.array([1.0, -2.0, 0.5])), np.zeros(3))

    def test_relu_coordinatewise(self):
        g = field_from_terms_1d([(1.0, 1.0, -1.0)])  # relu(x - 1)
        tf = tensor_field(g, 2)
        np.testing.assert_allclose(tf.eval(np.array([2.0, 0.0])), [1.0, 0.0])

    def test_permutation_equivariance(self):
        g = field_from_terms_1d([(0.7, 1.0, 0.3), (-0.2, -1.0, 0.1)])
        tf = tensor_field(g, 3)
        rng = np.random.default_rng(2)
        x = rng.normal(size=3)
        perm = [2, 0, 1]
        np.testing.assert_allclose(tf.eval(x[perm]), tf.eval(x)[perm], rtol=1e-14)

    def test_exact_flow_matches_scalar_flow(self):
        g = field_from_terms_1d([(0.5, 1.0, 0.0), (-0.5, -1.0, 0.0)])
        tf = tensor_field(g, 2)
        x = np.array([0.4, -1.1])
        out = tf.exact_flow(x, 0.7)
        expect = [g.pwl.flow_scalar(0.4, 0.7), g.pwl.flow_scalar(-1.1, 0.7)]
        np.testing.assert_allclose(out, expect, rtol=1e-15)


class TestShear:
    def test_empty_schedule_identity(self):
        sched = shear_schedule(Schedule((), 1), 0, 1, 2)
        assert len(sched) == 0

    def test_translation_shear(self):
        gsched = translation_gadget(1.0, 0.01)
        sched = shear_schedule(gsched, 0, 1, 2)
        out = flow_eval(sched, np.array([[0.2, 0.5]]))
        np.testing.assert_allclose(out, [[1.7, 0.5]], atol=1e-9)

    def test_conserved_quantity_along_comove(self):
        gsched = translation_gadget(0.5, 0.02)
        parts = shear_parts(gsched, 0, 1, 2)
        z = np.array([0.3, 0.8])
        for f, tau in parts.comove.steps:
            z2 = f.exact_flow(z, tau)
            assert abs((z2[0] - z2[1]) - (z[0] - z[1])) <= 1e-9
            z = z2

    def test_frozen_coordinates_to_1e12(self):
        gsched = translation_gadget(0.5, 0.02)
        sched = shear_schedule(gsched, 0, 2, 3)
        x = np.array([[0.1, 0.7, 0.4]])
        out = flow_eval(sched, x)
        # coordinate 1 is neither sheared nor controlling: exactly fixed
        assert abs(out[0, 1] - 0.7) <= 1e-12
        assert abs(out[0, 2] - 0.4) <= 1e-12  # control restored exactly

    def test_difference_of_increasing_bump(self):
        # shear by a non-monotone function of x_j built as P - Q on 3 points
        from flowmap.tensor import _difference_shear

        absc = np.array([0.2, 0.5, 0.8])
        corr = np.array([0.3, -0.2, 0.1])
        sched = _difference_shear(absc, corr, 0, 1, 2)
        pts = np.stack([np.full(3, 0.4), absc], axis=1)
        out = flow_eval(sched, pts)
        np.testing.assert_allclose(out[:, 0], 0.4 + corr, atol=1e-9)
        np.testing.assert_allclose(out[:, 1], absc, atol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            shear_schedule(Schedule((), 1), 1, 1, 2)


class TestTensorTransport:
    def test_identity(self):
        xs = np.array([[0.1, 0.4], [0.6, 0.2]])
        sched = tensor_transport(xs, xs, eps=1e-3)
        out = flow_eval(sched, xs)
        assert float(np.max(np.abs(out - xs))) <= 1e-9

    def test_shared_coordinate_separated_then_matched(self):
        xs = np.array([[0.5, 0.2], [0.5, 0.8]])
        ys = np.array([[0.1, 0.3], [0.9, 0.6]])
        sched, trace = tensor_transport(xs, ys, eps=1e-3, return_trace=True)
        assert any(rec["kind"] == "separate" for rec in trace)
        out = flow_eval(sched, xs)
        assert float(np.max(np.abs(out - ys))) <= 1e-3

    def test_three_points_2d(self):
        xs = np.array([[0.1, 0.2], [0.4, 0.5], [0.8, 0.9]])
        ys = np.array([[0.3, 0.7], [0.2, 0.1], [0.9, 0.4]])
        sched = tensor_transport(xs, ys, eps=1e-3, seed=0)
        out = flow_eval(sched, xs)
        assert float(np.max(np.abs(out - ys))) <= 1e-3

    def test_unsupported_family(self):
        xs = np.array([[0.1, 0.2], [0.4, 0.5]])
        with pytest.raises(ValueError):
            tensor_transport(xs, xs, eps=1e-3, family1d="sigmoid")
