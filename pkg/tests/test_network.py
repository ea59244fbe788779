import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnhpp.network import (
    LinearNetwork,
    NeighborConfig,
    Segment,
    WeightMatrix,
    build_network,
    build_weights,
    enumerate_walks,
    generation_neighbors,
    matrix_power_apply,
)
from cnhpp.simulate import gen_network

from conftest import chain_segments


class TestBuildNetwork:
    def test_chain_adjacency(self, chain3):
        assert chain3.adjacency == ((1,), (0, 2), (1,))
        assert chain3.n_segments == 3

    def test_single_segment(self):
        net = build_network([((0, 0), (1, 1))])
        assert net.adjacency == ((),)

    def test_star(self):
        # four spokes meeting at the origin
        segs = [((0, 0), (1, 0)), ((0, 0), (0, 1)), ((-1, 0), (0, 0)), ((0, -1), (0, 0))]
        net = build_network(segs)
        for i in range(4):
            assert set(net.adjacency[i]) == set(range(4)) - {i}

    def test_snap_tolerance(self):
        segs = [((0, 0), (1, 0)), ((1 + 5e-7, 0), (2, 0)), ((2.1, 0), (3, 0))]
        net = build_network(segs)
        assert net.adjacency == ((1,), (0,), ())
        loose = build_network(segs, NeighborConfig(snap_tolerance=0.2))
        assert loose.adjacency == ((1,), (0, 2), (1,))

    def test_duplicate_geometry_rejected(self):
        segs = [((0, 0), (1, 0)), ((1, 0), (2, 0)), ((2, 0), (1, 0))]
        with pytest.raises(ValueError, match=r"\(1, 2\)"):
            build_network(segs)

    def test_explicit_adjacency_overrides_snapping(self):
        net = build_network(chain_segments(3), adjacency=[(0, 2)])
        assert net.adjacency == ((2,), (), (0,))

    def test_segment_length_and_midpoint(self):
        s = Segment(0, (0, 0), (3, 4))
        assert s.length == pytest.approx(5.0, rel=1e-9)
        assert s.midpoint == (1.5, 2.0)

    def test_asymmetric_adjacency_rejected(self):
        segs = tuple(Segment(k, (k, 0), (k + 1, 0)) for k in range(2))
        with pytest.raises(ValueError, match="symmetric"):
            LinearNetwork(segs, ((1,), ()))

    @pytest.mark.parametrize("topology", ["chain", "tree", "lattice"])
    def test_generated_networks_symmetric(self, topology):
        net = gen_network(topology, 30, 1)
        for i, nbrs in enumerate(net.adjacency):
            for j in nbrs:
                assert i in net.adjacency[j]


class TestGenerationNeighbors:
    def test_zeroth_generation_is_self(self, chain3):
        for i in range(3):
            assert generation_neighbors(chain3, i, 0) == {i}

    def test_chain_generations(self, chain3):
        cfg = NeighborConfig(include_self=False)
        assert generation_neighbors(chain3, 1, 1, cfg) == {0, 2}
        assert generation_neighbors(chain3, 1, 2, cfg) == {1}

    def test_multiplicity_counts_walks(self, chain3):
        cfg = NeighborConfig(include_self=False)
        # two 2-step walks return to 1: via 0 and via 2
        assert generation_neighbors(chain3, 1, 2, cfg, multiplicity=True) == {1: 2}

    def test_reachability_matches_boolean_matrix_power(self):
        net = gen_network("lattice", 12, 0)
        cfg = NeighborConfig(include_self=False)
        A = build_weights(net, cfg).toarray() != 0
        P = np.eye(12, dtype=int)
        for m in range(4):
            for i in range(12):
                assert generation_neighbors(net, i, m, cfg) == set(np.flatnonzero(P[i]))
            P = (P @ A.astype(int) > 0).astype(int)


class TestBuildWeights:
    def test_equal_with_self(self, chain3):
        W = build_weights(chain3, NeighborConfig(include_self=True))
        assert W.rows[1] == [(0, 1 / 3), (1, 1 / 3), (2, 1 / 3)]

    def test_isolated_with_self(self):
        net = build_network([((0, 0), (1, 0)), ((5, 5), (6, 5))])
        W = build_weights(net, NeighborConfig(include_self=True))
        assert W.rows[1] == [(1, 1.0)]

    def test_isolated_without_self_is_zero_row(self):
        net = build_network([((0, 0), (1, 0)), ((5, 5), (6, 5))])
        W = build_weights(net, NeighborConfig(include_self=False))
        assert W.rows[1] == []

    def test_exponential_kernel(self):
        # midpoints at x = 0, 1, 2 so d_10 = d_12 = 1
        net = build_network([((-0.5, 0), (0.5, 0)), ((0.5, 0), (1.5, 0)), ((1.5, 0), (2.5, 0))])
        W = build_weights(net, NeighborConfig(include_self=False, scheme="exponential"))
        row = dict(W.rows[1])
        assert row[0] == pytest.approx(np.exp(-1) / 2, abs=1e-15)
        assert row[2] == pytest.approx(np.exp(-1) / 2, abs=1e-15)
        renorm = build_weights(net, NeighborConfig(include_self=False, scheme="exponential", renormalize=True))
        assert renorm.row_sums()[1] == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("topology", ["chain", "tree", "lattice"])
    @pytest.mark.parametrize("include_self", [True, False])
    def test_equal_rows_stochastic(self, topology, include_self):
        net = gen_network(topology, 40, 3)
        W = build_weights(net, NeighborConfig(include_self=include_self))
        sums = W.row_sums()
        for i in range(40):
            if net.neighbors(i, include_self):
                assert abs(sums[i] - 1.0) <= 1e-12

    def test_structural_sparsity(self):
        net = gen_network("lattice", 24, 0)
        cfg = NeighborConfig(include_self=True)
        W = build_weights(net, cfg)
        for i, row in enumerate(W.rows):
            assert {j for j, w in row} <= set(net.neighbors(i, True))

    def test_user_weights_checked(self, chain3):
        cfg = NeighborConfig(scheme="user", include_self=False)
        good = np.array([[0, 1.0, 0], [0.5, 0, 0.5], [0, 2.0, 0]])
        assert build_weights(chain3, cfg, good).toarray()[2, 1] == 2.0
        bad = good.copy()
        bad[0, 2] = 0.1
        with pytest.raises(ValueError, match=r"w\[0,2\]"):
            build_weights(chain3, cfg, bad)


class TestWalks:
    def test_identity_self_loop(self):
        net = build_network(chain_segments(4))
        assert enumerate_walks(net, WeightMatrix.identity(4), 2, 2, 3) == 1.0

    def test_empty_walk(self, chain3):
        W = build_weights(chain3)
        assert enumerate_walks(chain3, W, 1, 1, 0) == 1.0
        assert enumerate_walks(chain3, W, 0, 1, 0) == 0.0

    def test_chain_two_step(self, chain3):
        W = build_weights(chain3, NeighborConfig(include_self=False))
        # only walk 0 -> 1 -> 2: w[1,0] * w[2,1] = 1/2 * 1
        assert enumerate_walks(chain3, W, 0, 2, 2) == pytest.approx(0.5, abs=1e-15)
        assert abs(matrix_power_apply(W, 2, np.eye(3))[2, 0] - 0.5) <= 1e-12

    def test_disconnected(self):
        net = build_network([((0, 0), (1, 0)), ((5, 5), (6, 5))])
        W = build_weights(net)
        for k in range(1, 5):
            assert enumerate_walks(net, W, 0, 1, k) == 0.0

    def test_limits(self):
        net = gen_network("chain", 70, 0)
        W = build_weights(net)
        with pytest.raises(ValueError, match="limited"):
            enumerate_walks(net, W, 0, 1, 2)
        small = gen_network("chain", 5, 0)
        with pytest.raises(ValueError, match="limited"):
            enumerate_walks(small, build_weights(small), 0, 1, 7)

    def test_power_zero_and_identity(self):
        M = np.arange(12.0).reshape(4, 3)
        W = build_weights(build_network(chain_segments(4)))
        np.testing.assert_array_equal(matrix_power_apply(W, 0, M), M)
        np.testing.assert_array_equal(matrix_power_apply(WeightMatrix.identity(4), 1, M), M)

    def test_random_six_node_cube(self):
        rng = np.random.default_rng(5)
        net = gen_network("lattice", 6, 2)
        W = build_weights(net, NeighborConfig(scheme="exponential"))
        P = matrix_power_apply(W, 3, np.eye(6))
        for i in range(6):
            for j in range(6):
                assert abs(P[i, j] - enumerate_walks(net, W, j, i, 3)) <= 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from(["chain", "tree", "lattice"]), st.integers(2, 8), st.integers(1, 4),
           st.booleans(), st.integers(0, 10_000))
    def test_walk_identity_property(self, topology, n, k, include_self, seed):
        net = gen_network(topology, n, seed)
        W = build_weights(net, NeighborConfig(include_self=include_self, scheme="exponential"))
        P = matrix_power_apply(W, k, np.eye(n))
        for i in range(n):
            for j in range(n):
                assert abs(P[i, j] - enumerate_walks(net, W, j, i, k)) <= 1e-12

    def test_ancestor_consistency(self):
        # every m-th generation neighbour carries positive m-step walk weight back to i
        net = gen_network("tree", 15, 0)
        cfg = NeighborConfig(include_self=False)
        W = build_weights(net, cfg)
        for i in (0, 3, 9):
            for m in range(1, 4):
                for j in generation_neighbors(net, i, m, cfg):
                    assert enumerate_walks(net, W, j, i, m) > 0
