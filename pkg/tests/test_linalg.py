import numpy as np
import pytest

from dgembed import (SolverConfig, ValidationError, assemble_laplacian,
                     build_graph, build_octree, entropy_force, entropy_forces,
                     solve_cg)
from dgembed.linalg import neighbor_entropy_terms, pair_jitter


def brute_force_entropy(points, q, adjacency=None):
    """O(n^2) oracle: sgn(q) * sum (x_v - x_u) / ||.||^(q+2) over non-pairs."""
    n = len(points)
    sgn = 1.0 if q >= 0 else -1.0
    out = np.zeros((n, 3))
    for v in range(n):
        for u in range(n):
            if u == v:
                continue
            if adjacency is not None and u in adjacency[v]:
                continue
            diff = points[v] - points[u]
            r = np.linalg.norm(diff)
            out[v] += sgn * diff / r ** (q + 2)
    return out


def random_connected_graph(rng, n):
    edges = [(i, int(rng.integers(0, i))) for i in range(1, n)]
    extra = int(rng.integers(0, 2 * n))
    for _ in range(extra):
        a, b = rng.integers(0, n, 2)
        if a != b:
            edges.append((int(min(a, b)), int(max(a, b))))
    return build_graph(n, edges)


class TestAssembleLaplacian:
    def test_two_path(self):
        g = build_graph(2, [(0, 1)])
        sys = assemble_laplacian(g, np.ones(1))
        assert np.allclose(sys.matrix.toarray(), [[1, -1], [-1, 1]])

    def test_triangle(self):
        g = build_graph(3, [(0, 1), (1, 2), (0, 2)])
        mat = assemble_laplacian(g, np.ones(3)).matrix.toarray()
        assert np.allclose(np.diag(mat), 2)
        assert np.allclose(mat - np.diag(np.diag(mat)), -(1 - np.eye(3)))

    def test_star_weighted_degree(self):
        g = build_graph(4, [(0, 1), (0, 2), (0, 3)])
        mat = assemble_laplacian(g, np.full(3, 2.0)).matrix.toarray()
        assert mat[0, 0] == pytest.approx(6.0)

    def test_row_sums_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            g = random_connected_graph(rng, 30)
            w = rng.uniform(0.1, 5, g.m)
            sys = assemble_laplacian(g, w)
            rows = np.abs(np.asarray(sys.matrix.sum(axis=1))).max()
            assert rows < 1e-12

    def test_nonpositive_weight_rejected(self):
        g = build_graph(2, [(0, 1)])
        with pytest.raises(ValidationError):
            assemble_laplacian(g, np.zeros(1))


class TestSolveCg:
    def test_two_path_hand_solve(self):
        g = build_graph(2, [(0, 1)])
        sys = assemble_laplacian(g, np.ones(1))
        x, rep = solve_cg(sys, np.array([1.0, -1.0]))
        assert np.allclose(x, [0.5, -0.5], atol=1e-10)
        assert rep.converged

    def test_zero_rhs(self):
        g = build_graph(3, [(0, 1), (1, 2)])
        sys = assemble_laplacian(g, np.ones(2))
        x, rep = solve_cg(sys, np.zeros(3))
        assert np.allclose(x, 0.0)

    def test_nonfinite_rhs_rejected(self):
        g = build_graph(2, [(0, 1)])
        sys = assemble_laplacian(g, np.ones(1))
        with pytest.raises(ValidationError):
            solve_cg(sys, np.array([np.nan, 0.0]))

    def test_matches_dense_pseudoinverse(self):
        rng = np.random.default_rng(1)
        cfg = SolverConfig(cg_tol=1e-12, cg_max_iter=5000)
        for _ in range(50):
            n = int(rng.integers(4, 51))
            g = random_connected_graph(rng, n)
            w = rng.uniform(0.2, 3, g.m)
            sys = assemble_laplacian(g, w)
            b = rng.normal(size=n)
            x, rep = solve_cg(sys, b, cfg)
            dense = np.linalg.pinv(sys.matrix.toarray()) @ (b - b.mean())
            dense -= dense.mean()
            assert np.abs(x - dense).max() < 1e-6

    def test_residual_contract(self):
        rng = np.random.default_rng(2)
        cfg = SolverConfig(cg_tol=1e-10, cg_max_iter=2000)
        g = random_connected_graph(rng, 40)
        sys = assemble_laplacian(g, rng.uniform(0.5, 2, g.m))
        b = rng.normal(size=40)
        bt = b - b.mean()
        x, rep = solve_cg(sys, b, cfg)
        assert np.linalg.norm(sys.matrix @ x - bt) <= 1e-10 * np.linalg.norm(bt) * 10

    def test_disconnected_components_centered(self):
        g = build_graph(4, [(0, 1), (2, 3)])
        sys = assemble_laplacian(g, np.ones(2))
        assert sys.n_components == 2
        b = np.array([1.0, -1.0, 2.0, 0.0])
        x, _ = solve_cg(sys, b, SolverConfig(cg_tol=1e-12))
        assert abs(x[:2].sum()) < 1e-10
        assert abs(x[2:].sum()) < 1e-10


class TestOctree:
    def test_single_point(self):
        tree = build_octree(np.array([[1.0, 2.0, 3.0]]))
        assert tree.count[0] == 1
        assert np.allclose(tree.centroid[0], [1, 2, 3])

    def test_cube_corner_centroid(self):
        pts = np.array([[x, y, z] for x in (0.0, 2.0) for y in (0.0, 2.0)
                        for z in (0.0, 2.0)])
        tree = build_octree(pts)
        assert np.allclose(tree.centroid[0], [1, 1, 1])
        assert tree.count[0] == 8

    def test_coincident_points_share_leaf(self):
        pts = np.array([[1.0, 1, 1], [1.0, 1, 1]])
        tree = build_octree(pts)
        leaves = [k for k in range(tree.n_nodes) if tree.is_leaf(k) and tree.count[k]]
        assert len(leaves) == 1
        assert tree.count[leaves[0]] == 2

    def test_every_point_in_exactly_one_leaf(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-5, 5, (60, 3))
        tree = build_octree(pts)
        seen = np.zeros(60, dtype=int)
        for k in range(tree.n_nodes):
            if tree.is_leaf(k):
                for idx in tree.leaf_indices(k):
                    seen[idx] += 1
        assert np.all(seen == 1)

    def test_centroids_are_means(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(40, 3))
        tree = build_octree(pts)

        def collect(k):
            if tree.is_leaf(k):
                return list(tree.leaf_indices(k))
            out = []
            for c in tree.children[k]:
                if c >= 0:
                    out.extend(collect(c))
            return out

        for k in range(tree.n_nodes):
            idx = collect(k)
            assert len(idx) == tree.count[k]
            assert np.allclose(tree.centroid[k], pts[idx].mean(axis=0), atol=1e-12)


class TestEntropyForce:
    def test_single_point_zero(self):
        pts = np.zeros((1, 3))
        tree = build_octree(pts)
        assert np.allclose(entropy_force(tree, 0, pts, 0.0, 0.6), 0.0)

    def test_two_points_q0_closed_form(self):
        r = 2.0
        pts = np.array([[0.0, 0, 0], [r, 0, 0]])
        tree = build_octree(pts)
        f = entropy_force(tree, 0, pts, 0.0, 0.0)
        assert np.allclose(f, [-1.0 / r, 0, 0], atol=1e-12)

    def test_theta_zero_matches_oracle(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 10, (20, 3))
        tree = build_octree(pts)
        oracle = brute_force_entropy(pts, 0.0)
        got = np.array([entropy_force(tree, v, pts, 0.0, 0.0) for v in range(20)])
        assert np.abs(got - oracle).max() < 1e-9

    @pytest.mark.parametrize("q", [-0.5, 0.0, 0.8, 2.0])
    def test_batch_matches_single_and_oracle(self, q):
        rng = np.random.default_rng(6)
        pts = rng.uniform(0, 8, (25, 3))
        tree = build_octree(pts)
        batch = entropy_forces(tree, pts, q, 0.0)
        oracle = brute_force_entropy(pts, q)
        assert np.abs(batch - oracle).max() < 1e-9

    def test_pair_sum_is_zero(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(0, 10, (50, 3))
        tree = build_octree(pts)
        f = entropy_forces(tree, pts, 0.0, 0.0)
        assert np.abs(f.sum(axis=0)).max() < 1e-8

    def test_barnes_hut_accuracy_theta_05(self):
        # statistical: median per-vertex relative error under 5% at theta=0.5
        for seed in range(5):
            rng = np.random.default_rng(seed)
            pts = rng.uniform(0, 20, (100, 3))
            tree = build_octree(pts)
            exact = entropy_forces(tree, pts, 0.0, 0.0)
            approx = entropy_forces(tree, pts, 0.0, 0.5)
            rel = (np.linalg.norm(approx - exact, axis=1)
                   / np.linalg.norm(exact, axis=1))
            assert np.median(rel) < 0.05

    def test_invalid_q(self):
        pts = np.zeros((2, 3))
        tree = build_octree(pts)
        with pytest.raises(ValidationError):
            entropy_force(tree, 0, pts, -2.0, 0.5)

    def test_neighbor_subtraction_leaves_nonneighbor_sum(self):
        rng = np.random.default_rng(8)
        pts = rng.uniform(0, 6, (15, 3))
        g = random_connected_graph(rng, 15)
        adjacency = [set(g.neighbors[v].tolist()) for v in range(15)]
        tree = build_octree(pts)
        full = entropy_forces(tree, pts, 0.0, 0.0)
        corrected = full - neighbor_entropy_terms(g, pts, 0.0)
        oracle = brute_force_entropy(pts, 0.0, adjacency)
        assert np.abs(corrected - oracle).max() < 1e-9

    def test_coincident_pair_jitter_antisymmetric(self):
        j1 = pair_jitter(3, 7)
        j2 = pair_jitter(7, 3)
        assert np.allclose(j1, -j2)
        assert np.linalg.norm(j1) == pytest.approx(1.0)
        pts = np.array([[1.0, 1, 1], [1.0, 1, 1]])
        tree = build_octree(pts)
        f = entropy_forces(tree, pts, 0.0, 0.0)
        assert np.abs(f.sum(axis=0)).max() < 1e-12
        assert np.linalg.norm(f[0]) == pytest.approx(1e-3)
