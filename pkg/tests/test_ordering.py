import numpy as np
import pytest

from stargp import ordering
from stargp.ordering import (
    build_ordering,
    max_pairwise_distance,
    maximin_order,
    neighbor_sets,
    nn_accelerated,
    time_order,
)


class TestMaximin:
    def test_unit_square(self):
        # centroid tie-break picks (0,0); then greedy max-min with
        # lowest-index ties gives (1,1), (1,0), (0,1)
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        perm, lmin = maximin_order(X)
        assert perm.tolist() == [0, 3, 1, 2]
        assert np.allclose(lmin[1:], [np.sqrt(2.0), 1.0, 1.0])

    def test_two_points(self):
        X = np.array([[0.0, 0.0], [2.0, 0.0]])
        perm, lmin = maximin_order(X)
        assert perm.tolist() == [0, 1]
        assert np.isclose(lmin[1], 2.0)

    def test_collinear(self):
        X = np.array([[0.0], [1.0], [2.0]])
        perm, lmin = maximin_order(X)
        assert perm.tolist() == [1, 0, 2]
        assert np.allclose(lmin[1:], [1.0, 1.0])

    def test_l_sequence_non_increasing(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            X = rng.normal(size=(rng.integers(5, 120), rng.integers(1, 5)))
            _, lmin = maximin_order(X)
            assert np.all(np.diff(lmin[1:]) <= 1e-12)


class TestTimeOrder:
    def test_sort_by_time(self):
        X = np.array([[0.0, 5.0], [1.0, 2.0]])
        assert time_order(X).tolist() == [1, 0]

    def test_single_frame_reduces_to_spatial_maximin(self):
        rng = np.random.default_rng(1)
        S = rng.normal(size=(25, 2))
        X = np.column_stack([S, np.zeros(25)])
        perm_t = time_order(X)
        perm_m, _ = maximin_order(S)
        assert np.array_equal(perm_t, perm_m)

    def test_two_frames(self):
        # frame-0 points come first, each frame in spatial maximin order
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        perm = time_order(X)
        assert perm.tolist() == [0, 1, 2, 3]

    def test_times_non_decreasing_and_frames_valid(self):
        rng = np.random.default_rng(2)
        S = rng.normal(size=(40, 2))
        t = rng.integers(0, 4, size=40).astype(float)
        X = np.column_stack([S, t])
        perm = time_order(X)
        tt = t[perm]
        assert np.all(np.diff(tt) >= 0)
        for tv in np.unique(t):
            frame = perm[tt == tv]
            sub_perm, _ = maximin_order(S[np.sort(frame)])
            assert np.array_equal(frame, np.sort(frame)[sub_perm])

    def test_distinct_times_pure_sort(self):
        rng = np.random.default_rng(3)
        X = np.column_stack([rng.normal(size=(30, 2)), rng.permutation(30).astype(float)])
        perm = time_order(X)
        assert np.array_equal(perm, np.argsort(X[:, -1]))


class TestNeighborSets:
    def test_first_empty_and_undersized(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(3, 2))
        perm, _ = maximin_order(X)
        nb, l = neighbor_sets(X, perm, m=5)
        assert np.all(nb[0] == -1)
        assert (nb[2] >= 0).sum() == 2  # both predecessors, m oversized
        d1 = np.linalg.norm(X[perm[1]] - X[perm[0]])
        assert np.isclose(l[1], d1)

    def test_sorted_ascending(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 3))
        perm, _ = maximin_order(X)
        nb, l = neighbor_sets(X, perm, m=6)
        Xo = X[perm]
        for i in range(1, 60):
            sel = nb[i][nb[i] >= 0]
            d = np.linalg.norm(Xo[sel] - Xo[i], axis=1)
            assert np.all(np.diff(d) >= -1e-12)
            assert np.all(sel < i)
            assert np.isclose(l[i], d[0])

    def test_3x3_grid_last_point_exhaustive(self):
        g = np.stack(np.meshgrid(np.arange(3.0), np.arange(3.0), indexing="ij"), -1)
        X = g.reshape(-1, 2)
        perm, _ = maximin_order(X)
        nb, _ = neighbor_sets(X, perm, m=2)
        Xo = X[perm]
        i = 8
        d = np.linalg.norm(Xo[:i] - Xo[i], axis=1)
        best = np.lexsort((perm[:i], d))[:2]
        assert set(nb[i].tolist()) == set(best.tolist())

    def test_l1_is_domain_diameter(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(40, 2))
        perm, _ = maximin_order(X)
        _, l = neighbor_sets(X, perm, m=3)
        D = np.linalg.norm(X[:, None] - X[None, :], axis=2)
        assert np.isclose(l[0], D.max())


class TestAccelerated:
    @pytest.mark.parametrize("trial", range(6))
    def test_matches_exhaustive_random(self, trial):
        rng = np.random.default_rng(100 + trial)
        N = int(rng.integers(20, 600))
        X = rng.normal(size=(N, int(rng.integers(1, 5))))
        perm, _ = maximin_order(X)
        m = int(rng.integers(1, 15))
        nb1, l1 = neighbor_sets(X, perm, m)
        nb2, l2 = nn_accelerated(X, perm, m, chunk=64)
        assert np.array_equal(nb1, nb2)
        assert np.array_equal(l1, l2)

    def test_matches_exhaustive_clustered(self):
        rng = np.random.default_rng(7)
        X = np.concatenate(
            [rng.normal(size=(150, 3)) * 0.01 + c for c in (0.0, 4.0, 50.0)]
        )
        perm, _ = maximin_order(X)
        nb1, l1 = neighbor_sets(X, perm, 9)
        nb2, l2 = nn_accelerated(X, perm, 9, chunk=70)
        assert np.array_equal(nb1, nb2)
        assert np.array_equal(l1, l2)

    def test_matches_exhaustive_grid_ties(self):
        g = np.stack(
            np.meshgrid(*[np.arange(7.0)] * 3, indexing="ij"), -1
        ).reshape(-1, 3)
        perm, _ = maximin_order(g)
        nb1, l1 = neighbor_sets(g, perm, 8)
        nb2, l2 = nn_accelerated(g, perm, 8, chunk=100)
        assert np.array_equal(nb1, nb2)
        assert np.array_equal(l1, l2)

    def test_matches_exhaustive_n2000(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(size=(2000, 4))
        perm, _ = maximin_order(X)
        nb1, l1 = neighbor_sets(X, perm, 10)
        nb2, l2 = nn_accelerated(X, perm, 10)
        assert np.array_equal(nb1, nb2)
        assert np.array_equal(l1, l2)


class TestOrderingObject:
    def test_build_and_validate(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(80, 3))
        o = build_ordering(X, "maximin", m=5)
        o.validate()
        assert o.kind == "maximin"
        assert o.neighbor_list(0).size == 0
        assert o.neighbor_list(3).size == 3

    def test_truncation(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(50, 2))
        o = build_ordering(X, "maximin", m=8)
        o4 = o.truncated(4)
        o4.validate()
        assert np.array_equal(o4.neighbors, o.neighbors[:, :4])
        assert np.array_equal(o4.l, o.l)
        with pytest.raises(ValueError):
            o.truncated(9)

    def test_rescaling_invariance(self):
        # common factor on both scales leaves perm and neighbors unchanged,
        # l scales by 1/c; power-of-two factor makes it exact
        rng = np.random.default_rng(11)
        X = rng.normal(size=(120, 3))
        c = 4.0
        o1 = build_ordering(X, "maximin", m=6)
        o2 = build_ordering(X / c, "maximin", m=6)
        assert np.array_equal(o1.perm, o2.perm)
        assert np.array_equal(o1.neighbors, o2.neighbors)
        assert np.allclose(o2.l, o1.l / c, rtol=1e-15)

    def test_engines_agree_through_builder(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(300, 3))
        o1 = build_ordering(X, "time", m=4, engine="exhaustive")
        o2 = build_ordering(X, "time", m=4, engine="kdtree")
        assert np.array_equal(o1.neighbors, o2.neighbors)
        assert np.array_equal(o1.l, o2.l)

    def test_time_ordering_neighbors_are_past(self, ):
        rng = np.random.default_rng(13)
        S = rng.normal(size=(60, 2))
        t = np.repeat(np.arange(6.0), 10)
        X = np.column_stack([S, t])
        o = build_ordering(X, "time", m=5)
        tt = X[o.perm, -1]
        for i in range(60):
            nb = o.neighbor_list(i)
            assert np.all(tt[nb] <= tt[i])


class TestDiameter:
    def test_exact_matches_bruteforce(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(300, 3))
        D = np.linalg.norm(X[:, None] - X[None, :], axis=2)
        assert np.isclose(max_pairwise_distance(X), D.max(), rtol=1e-14)

    def test_heuristic_reasonable(self):
        rng = np.random.default_rng(15)
        X = rng.uniform(size=(500, 3))
        exact = max_pairwise_distance(X)
        heur = max_pairwise_distance(X, exact_limit=10)
        assert heur <= exact + 1e-12
        assert heur >= 0.9 * exact
