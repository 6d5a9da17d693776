import math

import numpy as np
import pytest

from dgembed import (SolverConfig, build_graph, lazy_entropy_due, make_instance,
                     maxent_solve, maxent_step, rmsd, stress_value)
from dgembed.metrics import edge_lengths
from dgembed.solver import choose_q, default_stress_weights


def chain_instance(dists, lo_hi_pad=0.0):
    n = len(dists) + 1
    g = build_graph(n, [(i, i + 1) for i in range(len(dists))])
    d = np.asarray(dists, dtype=float)
    return make_instance(g, d - lo_hi_pad, d + lo_hi_pad)


class TestLazyEntropyDue:
    def test_first_iteration(self):
        assert lazy_entropy_due(1)

    def test_second_iteration(self):
        # floor(5 ln 2) = 3 != floor(5 ln 1) = 0
        assert lazy_entropy_due(2)

    def test_nine_not_due(self):
        assert math.floor(5 * math.log(8)) == 10
        assert math.floor(5 * math.log(9)) == 10
        assert not lazy_entropy_due(9)

    def test_schedule_prefix(self):
        due = [i for i in range(1, 30) if lazy_entropy_due(i)]
        assert due == [1, 2, 3, 4, 5, 7, 8, 10, 12, 14, 17, 21, 25]

    def test_base_ten(self):
        # floor(5 log10 i) changes at i = 10^(k/5)
        due = [i for i in range(1, 20) if lazy_entropy_due(i, base=10.0)]
        assert due == [1, 2, 3, 4, 7, 10, 16]

    def test_invalid_index(self):
        with pytest.raises(Exception):
            lazy_entropy_due(0)


class TestMaxentStep:
    def test_two_point_closed_form(self):
        g = build_graph(2, [(0, 1)])
        x_prev = np.array([[0.0, 0, 0], [2.0, 0, 0]])
        x = maxent_step(g, np.array([1.0]), np.array([1.0]), x_prev, 0.0, 0.0,
                        np.zeros((2, 3)))
        assert np.linalg.norm(x[0] - x[1]) == pytest.approx(1.0, abs=1e-6)

    def test_fixed_point_when_satisfied(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 4, (8, 3))
        g = build_graph(8, [(i, j) for i in range(8) for j in range(i + 1, 8)])
        d = np.linalg.norm(pts[g.edges[:, 0]] - pts[g.edges[:, 1]], axis=1)
        x = maxent_step(g, d, 1.0 / d ** 2, pts, 0.0, 0.0, np.zeros((8, 3)))
        assert rmsd(x, pts) < 1e-6

    def test_triangle_converges_to_equilateral(self):
        g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
        d = np.ones(3)
        x = np.random.default_rng(5).normal(size=(3, 3))
        for _ in range(100):
            x = maxent_step(g, d, np.ones(3), x, 0.0, 0.0, np.zeros((3, 3)))
        lengths = edge_lengths(x, g.edges)
        assert np.abs(lengths - 1.0).max() < 1e-4

    def test_result_mean_centered(self):
        g = build_graph(3, [(0, 1), (1, 2)])
        x_prev = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.5, 0, 0]]) + 100.0
        x = maxent_step(g, np.ones(2), np.ones(2), x_prev, 0.0, 0.0, np.zeros((3, 3)))
        assert np.abs(x.mean(axis=0)).max() < 1e-9


class TestChooseQ:
    def test_star_triggers_high_q(self):
        g = build_graph(10, [(0, i) for i in range(1, 10)])  # 90% degree-1
        assert choose_q(g) == pytest.approx(0.8)

    def test_cycle_keeps_zero(self):
        g = build_graph(10, [(i, (i + 1) % 10) for i in range(10)])
        assert choose_q(g) == 0.0


class TestMaxentSolve:
    def test_alpha_schedule_in_trace(self):
        inst = chain_instance([1.0, 1.0, 1.0], lo_hi_pad=0.1)
        init = np.random.default_rng(1).normal(size=(4, 3))
        cfg = SolverConfig(seed=0, early_alpha_exit=False)
        _, trace = maxent_solve(inst, cfg, init)
        seen = []
        for a in trace.alpha:
            if not seen or seen[-1] != a:
                seen.append(float(a))
        assert seen == pytest.approx([1.0, 0.3, 0.09, 0.027, 0.0081])
        assert np.all(np.diff(trace.alpha) <= 0)

    def test_star_records_q(self):
        g = build_graph(10, [(0, i) for i in range(1, 10)])
        inst = make_instance(g, np.ones(9), np.ones(9))
        init = np.random.default_rng(2).normal(size=(10, 3)) * 2
        _, trace = maxent_solve(inst, SolverConfig(seed=1), init)
        assert trace.q == pytest.approx(0.8)

    def test_explicit_q_override(self):
        inst = chain_instance([1.0, 1.0])
        init = np.random.default_rng(3).normal(size=(3, 3))
        _, trace = maxent_solve(inst, SolverConfig(seed=0, q=0.5), init)
        assert trace.q == pytest.approx(0.5)

    def test_full_matrix_self_reconstruction(self):
        from dgembed import layout_pivot_mds
        rng = np.random.default_rng(4)
        pts = rng.uniform(0, 10, (10, 3))
        g = build_graph(10, [(i, j) for i in range(10) for j in range(i + 1, 10)])
        d = np.linalg.norm(pts[g.edges[:, 0]] - pts[g.edges[:, 1]], axis=1)
        inst = make_instance(g, d, d)
        init = layout_pivot_mds(g, d, pivots=10, seed=5)
        x, _ = maxent_solve(inst, SolverConfig(seed=5), init)
        assert rmsd(x, pts) < 1e-2

    def test_rigid_motion_invariance_of_init(self):
        rng = np.random.default_rng(6)
        pts = rng.uniform(0, 6, (8, 3))
        g = build_graph(8, [(i, j) for i in range(8) for j in range(i + 1, 8)])
        d = np.linalg.norm(pts[g.edges[:, 0]] - pts[g.edges[:, 1]], axis=1)
        inst = make_instance(g, d, d)
        init = rng.normal(size=(8, 3)) * 4
        cfg = SolverConfig(seed=7, theta=0.0)
        x1, _ = maxent_solve(inst, cfg, init)
        ang = 0.8
        rot = np.array([[np.cos(ang), -np.sin(ang), 0],
                        [np.sin(ang), np.cos(ang), 0], [0, 0, 1.0]])
        x2, _ = maxent_solve(inst, cfg, init @ rot.T + np.array([3.0, -2.0, 1.0]))
        assert rmsd(x1, x2) < 1e-6

    def test_trace_entropy_flags_match_lazy_schedule(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform(0, 5, (12, 3))
        g = build_graph(12, [(i, (i + 1) % 12) for i in range(12)]
                        + [(i, (i + 3) % 12) for i in range(12)])
        d = np.linalg.norm(pts[g.edges[:, 0]] - pts[g.edges[:, 1]], axis=1)
        inst = make_instance(g, d, d)
        cfg = SolverConfig(seed=9, early_alpha_exit=False)
        _, trace = maxent_solve(inst, cfg, rng.normal(size=(12, 3)))
        expected = [lazy_entropy_due(i) for i in range(1, trace.iterations + 1)]
        assert list(trace.entropy_recomputed) == expected

    def test_majorization_monotone_stress(self):
        # alpha ~ 0 and realizable targets: stress non-increasing
        rng = np.random.default_rng(10)
        for _ in range(20):
            n = int(rng.integers(5, 12))
            pts = rng.uniform(0, 5, (n, 3))
            pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
            keep = [p for p in pairs if rng.random() < 0.7]
            if len(keep) < n:
                keep = pairs
            g = build_graph(n, keep)
            d = np.linalg.norm(pts[g.edges[:, 0]] - pts[g.edges[:, 1]], axis=1)
            inst = make_instance(g, d, d)
            w = default_stress_weights(inst)
            x = rng.normal(size=(n, 3)) * 3
            prev = stress_value(x, g, d, w)
            for _ in range(200):
                x = maxent_step(g, d, w, x, 0.0, 0.0, np.zeros((n, 3)),
                                cfg=SolverConfig(cg_tol=1e-12))
                cur = stress_value(x, g, d, w)
                assert cur <= prev + 1e-9
                prev = cur

    def test_deterministic(self):
        inst = chain_instance([1.0, 2.0, 1.5], lo_hi_pad=0.2)
        init = np.random.default_rng(11).normal(size=(4, 3)) * 2
        cfg = SolverConfig(seed=12)
        x1, t1 = maxent_solve(inst, cfg, init)
        x2, t2 = maxent_solve(inst, cfg, init)
        assert np.array_equal(x1, x2)
        assert np.array_equal(t1.rel_change, t2.rel_change)
