import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from veriloop import sampler
from veriloop.domainspace import DomainSpace, cosine_distances
from veriloop.errors import VeriloopError


def make_space(assignments: dict[str, int], k: int, dim: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    return DomainSpace(k=k, centroids=rng.standard_normal((k, dim)), assignments=assignments, silhouette=0.5)


class TestClusterWeights:
    def test_equal_sizes_give_half_half(self):
        space = make_space({f"r{i}": i % 2 for i in range(20)}, k=2)
        w = sampler.cluster_weights(space, [f"r{i}" for i in range(20)], epsilon=1e-6)
        assert np.allclose(w, [0.5, 0.5], atol=1e-6)

    def test_hand_worked_90_10(self):
        assignments = {f"a{i}": 0 for i in range(90)} | {f"b{i}": 1 for i in range(10)}
        space = make_space(assignments, k=2)
        w = sampler.cluster_weights(space, list(assignments), epsilon=1e-6)
        assert abs(w[0] - 0.1) < 1e-6
        assert abs(w[1] - 0.9) < 1e-6

    def test_normalized(self):
        assignments = {f"r{i}": i % 3 for i in range(37)}
        space = make_space(assignments, k=3)
        w = sampler.cluster_weights(space, list(assignments), epsilon=1e-6)
        assert abs(w.sum() - 1.0) < 1e-12

    def test_monotone_bias(self):
        # strictly smaller pool share -> strictly larger weight
        assignments = {f"a{i}": 0 for i in range(30)} | {f"b{i}": 1 for i in range(10)} | {"c0": 2}
        space = make_space(assignments, k=3)
        w = sampler.cluster_weights(space, list(assignments), epsilon=1e-6)
        assert w[2] > w[1] > w[0]

    def test_empty_pool_rejected(self):
        space = make_space({}, k=2)
        with pytest.raises(VeriloopError, match="empty pool"):
            sampler.cluster_weights(space, [], epsilon=1e-6)


class TestAllocate:
    def test_hand_worked_one_nine(self):
        alloc = sampler.allocate(10, np.array([0.1, 0.9]), [50, 50])
        assert alloc.per_cluster == {0: 1, 1: 9}
        assert alloc.total == 10

    def test_symmetric(self):
        alloc = sampler.allocate(10, np.array([0.5, 0.5]), [50, 50])
        assert alloc.per_cluster == {0: 5, 1: 5}

    def test_hand_worked_repair(self):
        # ceilings (4,4,4) shed to (4,3,3): ties prefer the larger cluster
        alloc = sampler.allocate(10, np.array([0.34, 0.33, 0.33]), [29, 30, 30])
        assert alloc.per_cluster == {0: 4, 1: 3, 2: 3}

    def test_budget_exceeds_capacity(self):
        with pytest.raises(VeriloopError, match="capacity"):
            sampler.allocate(11, np.array([0.5, 0.5]), [5, 5])

    def test_capacity_clamp_refills(self):
        # cluster 1 wants 9 but holds 4; the shortfall refills cluster 0
        alloc = sampler.allocate(10, np.array([0.1, 0.9]), [50, 4])
        assert alloc.per_cluster == {0: 6, 1: 4}
        assert alloc.total == 10

    @given(
        m=st.integers(min_value=0, max_value=60),
        sizes=st.lists(st.integers(min_value=0, max_value=40), min_size=2, max_size=6),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=80, deadline=None)
    def test_repair_properties(self, m, sizes, seed):
        total_cap = sum(sizes)
        if m > total_cap:
            with pytest.raises(VeriloopError):
                sampler.allocate(m, _random_weights(len(sizes), seed), sizes)
            return
        alloc = sampler.allocate(m, _random_weights(len(sizes), seed), sizes)
        quotas = [alloc.per_cluster[j] for j in range(len(sizes))]
        assert sum(quotas) == m
        assert all(0 <= q <= cap for q, cap in zip(quotas, sizes))


def _random_weights(k, seed):
    rng = np.random.default_rng(seed)
    w = rng.random(k) + 1e-3
    return w / w.sum()


def _clustered_pool(seed=0, k=3, per_cluster=40, dim=6):
    rng = np.random.default_rng(seed)
    centroids = rng.standard_normal((k, dim)) * 3
    ids, vecs, assignments = [], {}, {}
    for j in range(k):
        for i in range(per_cluster):
            rid = f"c{j}-{i:03d}"
            vec = centroids[j] + rng.normal(scale=0.3, size=dim)
            ids.append(rid)
            vecs[rid] = vec / np.linalg.norm(vec)
            assignments[rid] = j
    space = DomainSpace(k=k, centroids=centroids, assignments=assignments, silhouette=0.5)
    return space, ids, vecs


class TestColdStart:
    def test_single_pick_is_nearest(self):
        space, ids, vecs = _clustered_pool(seed=1)
        alloc = sampler.Allocation(per_cluster={0: 1, 1: 0, 2: 0}, total=1)
        result = sampler.cold_start_select(space, ids, vecs, alloc)
        members = [r for r in ids if space.assignments[r] == 0]
        dists = {r: float(cosine_distances(vecs[r][None, :], space.centroids[0:1])[0, 0]) for r in members}
        assert result.selected_ids == [min(members, key=lambda r: (dists[r], r))]

    def test_full_cluster_exhaustion(self):
        space, ids, vecs = _clustered_pool(seed=2, per_cluster=5)
        alloc = sampler.Allocation(per_cluster={0: 5, 1: 0, 2: 0}, total=5)
        result = sampler.cold_start_select(space, ids, vecs, alloc)
        assert sorted(result.selected_ids) == [r for r in ids if space.assignments[r] == 0]

    def test_matches_bruteforce_everywhere(self):
        space, ids, vecs = _clustered_pool(seed=3)
        alloc = sampler.Allocation(per_cluster={0: 7, 1: 3, 2: 5}, total=15)
        result = sampler.cold_start_select(space, ids, vecs, alloc)
        assert len(result.selected_ids) == len(set(result.selected_ids)) == 15
        for j, quota in alloc.per_cluster.items():
            members = [r for r in ids if space.assignments[r] == j]
            dists = {
                r: float(cosine_distances(vecs[r][None, :], space.centroids[j : j + 1])[0, 0])
                for r in members
            }
            expected = sorted(members, key=lambda r: (dists[r], r))[:quota]
            got = [r for r in result.selected_ids if space.assignments[r] == j]
            assert got == expected


class TestEntropy:
    def test_entropy_values(self):
        assert abs(sampler.binary_entropy(0.5) - math.log(2)) < 1e-12
        assert sampler.binary_entropy(0.0) == 0.0
        assert sampler.binary_entropy(1.0) == 0.0
        with pytest.raises(VeriloopError):
            sampler.binary_entropy(1.2)

    def test_picks_most_uncertain(self):
        space = make_space({"a": 0, "b": 0, "c": 0}, k=1)
        alloc = sampler.Allocation(per_cluster={0: 2}, total=2)
        result = sampler.entropy_select(space, ["a", "b", "c"], alloc, {"a": 0.5, "b": 0.9, "c": 0.55})
        assert sorted(result.selected_ids) == ["a", "c"]

    def test_matches_bruteforce_ranking(self):
        space, ids, _ = _clustered_pool(seed=4)
        rng = np.random.default_rng(8)
        probs = {r: float(rng.random()) for r in ids}
        alloc = sampler.Allocation(per_cluster={0: 6, 1: 2, 2: 9}, total=17)
        result = sampler.entropy_select(space, ids, alloc, probs)
        for j, quota in alloc.per_cluster.items():
            members = [r for r in ids if space.assignments[r] == j]
            expected = sorted(members, key=lambda r: (-sampler.binary_entropy(probs[r]), r))[:quota]
            got = [r for r in result.selected_ids if space.assignments[r] == j]
            assert got == expected

    def test_missing_probs_rejected(self):
        space = make_space({"a": 0, "b": 0}, k=1)
        alloc = sampler.Allocation(per_cluster={0: 1}, total=1)
        with pytest.raises(VeriloopError, match="missing"):
            sampler.entropy_select(space, ["a", "b"], alloc, {"a": 0.5})


class TestBaselines:
    def test_random_reproducible(self):
        ids = [f"r{i}" for i in range(50)]
        a = sampler.baseline_select("random", ids, 10, seed=4)
        b = sampler.baseline_select("random", ids, 10, seed=4)
        assert a.selected_ids == b.selected_ids
        assert len(set(a.selected_ids)) == 10

    def test_max_entropy_equals_least_confidence_ranking(self):
        rng = np.random.default_rng(11)
        ids = [f"r{i}" for i in range(40)]
        probs = {r: float(rng.random()) for r in ids}
        me = sampler.baseline_select("max_entropy", ids, 40, probs=probs)
        lc = sampler.baseline_select("least_confidence", ids, 40, probs=probs)
        assert me.selected_ids == lc.selected_ids

    def test_kmeans_diversity_near_centroids(self):
        space, ids, vecs = _clustered_pool(seed=5, k=4, per_cluster=10)
        m = 4
        result = sampler.baseline_select("kmeans_diversity", ids, m, embeddings=vecs, seed=3)
        assert len(set(result.selected_ids)) == m
        # every pick is its own cluster's closest member under a brute-force scan
        points = np.vstack([vecs[r] for r in sorted(ids)])
        from veriloop.domainspace import kmeans_cosine

        labels, centroids, _ = kmeans_cosine(points, m, seed=3, restarts=1)
        ordered = sorted(ids)
        for j in range(m):
            members = [i for i in range(len(ordered)) if labels[i] == j]
            dists = cosine_distances(points[members], centroids[j : j + 1])[:, 0]
            best = members[int(np.lexsort((np.asarray(members), dists))[0])]
            assert ordered[best] in result.selected_ids

    def test_strategies_need_probs(self):
        with pytest.raises(VeriloopError):
            sampler.baseline_select("max_entropy", ["a"], 1)

    def test_unknown_strategy(self):
        with pytest.raises(VeriloopError, match="unknown strategy"):
            sampler.baseline_select("zigzag", ["a"], 1)

    def test_m_clamped_to_pool(self):
        result = sampler.baseline_select("random", ["a", "b"], 10, seed=0)
        assert sorted(result.selected_ids) == ["a", "b"]
