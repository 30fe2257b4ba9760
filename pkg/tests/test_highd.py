"""Grid targets, shrink maps, separation, transport, assembled pipeline."""

import numpy as np
import pytest

from flowmap.core import flow_eval
from flowmap.families import relu_well_nd
from flowmap.highd import (PipelineError, ShrinkSpec, approximate_lp,
                           build_contraction, build_grid_target, separate_points,
                           shrink_map_1d, transport_points)
from flowmap.targets import TargetSpec, builtin_target_nd
from flowmap.util import collision_counts

WELL2 = relu_well_nd(2)


class TestGridTarget:
    def test_identity_certificate(self):
        grid = build_grid_target(builtin_target_nd("identity", 2), 4, 2)
        # cell-center surrogate of the identity: L2 error = cell std
        assert grid.certified_error <= 0.25
        assert grid.values.shape == (16, 2)
        np.testing.assert_allclose(grid.values, (np.array(
            np.meshgrid(np.arange(4), np.arange(4), indexing="ij"))
            .reshape(2, -1).T + 0.5) / 4)

    def test_constant_target_exact(self):
        grid = build_grid_target(builtin_target_nd("const", 2), 3, 1)
        assert grid.certified_error <= 1e-12

    def test_non_unit_box_rejected(self):
        F = TargetSpec(fn=lambda x: x, n=2, m=2, domain=[[0, 2], [0, 1]])
        with pytest.raises(PipelineError):
            build_grid_target(F, 2, 1)


class TestShrink:
    def test_alpha_one_rejected(self):
        with pytest.raises(ValueError):
            ShrinkSpec(alpha=1.0, N=2, eps1=1e-3)

    def test_canonical_map_fixes_corners(self):
        h = shrink_map_1d(0.5, 4)
        corners = np.array([0.0, 0.25, 0.5, 0.75])
        np.testing.assert_allclose(h(corners), corners, atol=1e-15)
        assert h(np.array([0.1]))[0] == pytest.approx(0.0)  # inside the first flat
        assert h(np.array([1.0]))[0] == pytest.approx(1.0)

    def test_contraction_maps_cell_to_corner(self):
        spec = ShrinkSpec(alpha=0.5, N=2, eps1=1e-6)
        sched = build_contraction(spec, WELL2, n=2)
        out = flow_eval(sched, np.array([[0.2, 0.7]]))
        np.testing.assert_allclose(out, [[0.0, 0.5]], atol=1e-6)

    def test_contraction_fixes_corners(self):
        spec = ShrinkSpec(alpha=0.5, N=2, eps1=1e-6)
        sched = build_contraction(spec, WELL2, n=2)
        corners = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])
        out = flow_eval(sched, corners)
        assert float(np.max(np.abs(out - corners))) <= 1e-6

    def test_contraction_gap_bound(self):
        spec = ShrinkSpec(alpha=0.6, N=3, eps1=1e-7)
        sched = build_contraction(spec, WELL2, n=2)
        h = shrink_map_1d(0.6, 3)
        grid = np.linspace(0, 1, 61)
        pts = np.stack(np.meshgrid(grid, grid, indexing="ij"), axis=-1).reshape(-1, 2)
        out = flow_eval(sched, pts)
        ideal = np.stack([h(pts[:, 0]), h(pts[:, 1])], axis=1)
        assert float(np.max(np.linalg.norm(out - ideal, axis=1))) <= 1e-7


class TestSeparation:
    def test_already_distinct_gives_identity(self):
        pts = np.array([[0.1, 0.2], [0.3, 0.4]])
        sched = separate_points(pts, WELL2, eps=0.1)
        assert len(sched) == 0

    def test_two_points_sharing_a_coordinate(self):
        pts = np.array([[0.0, 0.0], [0.0, 1.0]])
        sched, trace = separate_points(pts, WELL2, eps=0.05, return_trace=True)
        out = flow_eval(sched, pts)
        assert all(c == 0 for c in collision_counts(out))
        assert float(np.max(np.linalg.norm(out - pts, axis=1))) <= 0.05
        assert len(trace) == 1 and trace[0]["collisions_after"] == 0

    def test_four_points_on_a_line(self):
        pts = np.array([[0.5, 0.1], [0.5, 0.4], [0.5, 0.6], [0.5, 0.9]])
        sched, trace = separate_points(pts, WELL2, eps=0.05, return_trace=True)
        out = flow_eval(sched, pts)
        assert all(c == 0 for c in collision_counts(out))
        assert len(trace) <= 6  # at most C(4, 2) stages
        for rec in trace:
            assert rec["collisions_after"] < rec["collisions_before"]

    def test_duplicate_points_rejected(self):
        with pytest.raises(ValueError):
            separate_points(np.array([[0.1, 0.2], [0.1, 0.2]]), WELL2, eps=0.1)


class TestTransport:
    def test_targets_equal_sources(self):
        xs = np.array([[0.1, 0.6], [0.4, 0.2], [0.9, 0.8]])
        sched = transport_points(xs, xs, WELL2, eps=1e-6)
        assert all(t == 0.0 for _, t in sched.steps)
        np.testing.assert_array_equal(flow_eval(sched, xs), xs)

    def test_single_point_n_stages(self):
        xs = np.array([[0.3, 0.4]])
        ys = np.array([[0.9, -0.2]])
        sched = transport_points(xs, ys, WELL2, eps=1e-8)
        assert len(sched) == 2  # one stage per coordinate
        np.testing.assert_allclose(flow_eval(sched, xs), ys, atol=1e-8)

    def test_three_random_targets(self):
        rng = np.random.default_rng(5)
        xs = np.array([[0.1, 0.2], [0.4, 0.5], [0.8, 0.9]])
        ys = rng.uniform(-0.5, 1.5, size=(3, 2))
        sched = transport_points(xs, ys, WELL2, eps=1e-4)
        assert float(np.max(np.abs(flow_eval(sched, xs) - ys))) <= 1e-4

    def test_non_driven_coordinates_exactly_fixed(self):
        xs = np.array([[0.1, 0.2], [0.4, 0.5], [0.8, 0.9]])
        ys = np.array([[0.5, 0.1], [0.2, 0.9], [0.7, 0.3]])
        sched = transport_points(xs, ys, WELL2, eps=1e-6)
        pts = xs.copy()
        for fld, tau in sched.steps:
            nxt = fld.exact_flow(pts, tau)
            driven = int(np.flatnonzero(np.any(np.asarray(fld.params["V"]) != 0.0, axis=1))[0])
            other = 1 - driven
            np.testing.assert_array_equal(nxt[:, other], pts[:, other])
            pts = nxt

    def test_collision_targets_perturbed(self):
        xs = np.array([[0.1, 0.2], [0.4, 0.5], [0.8, 0.9]])
        ys = np.array([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])  # all equal
        sched = transport_points(xs, ys, WELL2, eps=0.01, seed=0)
        out = flow_eval(sched, xs)
        assert float(np.max(np.linalg.norm(out - ys, axis=1))) <= 0.01

    def test_nondistinct_sources_rejected(self):
        xs = np.array([[0.1, 0.2], [0.1, 0.5]])
        with pytest.raises(ValueError):
            transport_points(xs, xs + 0.1, WELL2, eps=1e-4)


class TestPipeline:
    @pytest.mark.parametrize("name,p", [("identity", 2), ("flip", 1), ("const", 2)])
    def test_targets_meet_eps(self, name, p):
        F = builtin_target_nd(name, 2)
        sched, rep = approximate_lp(F, eps=0.5, p=p, well=WELL2, grid_N=4,
                                    seed=0, mc_samples=20_000)
        assert rep.measured_lp_error <= 0.5
        assert rep.grid_error <= 0.25
        assert rep.omega_check + rep.N ** (rep.n - rep.n / rep.p) * rep.eps1 <= 0.5 / 4 + 1e-12
        assert rep.leak_bound <= 0.5 / 4 + 1e-12
        assert rep.total_time_T == sched.total_time

    def test_orientation_reversing_target(self):
        # flip has negative Jacobian everywhere yet is approximable in L^p.
        F = builtin_target_nd("flip", 2)
        _, rep = approximate_lp(F, eps=0.5, p=1, well=WELL2, grid_N=4,
                                seed=0, mc_samples=20_000)
        assert rep.measured_lp_error <= 0.5

    @pytest.mark.parametrize("name", ["identity", "flip", "const"])
    def test_three_dimensions(self, name):
        F = builtin_target_nd(name, 3)
        _, rep = approximate_lp(F, eps=0.8, p=2, well=relu_well_nd(3),
                                grid_N=3, seed=0, mc_samples=20_000)
        assert rep.measured_lp_error <= 0.8

    def test_n1_rejected(self):
        F = TargetSpec(fn=lambda x: x, n=1, m=1, domain=[[0, 1]])
        with pytest.raises(ValueError):
            approximate_lp(F, eps=0.5, p=2, well=relu_well_nd(1))

    def test_determinism(self):
        F = builtin_target_nd("flip", 2)
        _, rep1 = approximate_lp(F, eps=0.5, p=1, well=WELL2, grid_N=4,
                                 seed=3, mc_samples=5_000)
        _, rep2 = approximate_lp(F, eps=0.5, p=1, well=WELL2, grid_N=4,
                                 seed=3, mc_samples=5_000)
        assert rep1.to_dict() == rep2.to_dict()

    def test_grid_infeasible_reports_binding_constraint(self):
        def wiggly(x):
            x = np.asarray(x, dtype=float)
            return np.sin(40 * x)

        F = TargetSpec(fn=wiggly, n=2, m=2, domain=[[0, 1], [0, 1]], name="wiggly")
        with pytest.raises(PipelineError, match="grid budget"):
            approximate_lp(F, eps=0.05, p=2, well=WELL2, max_N=3)
