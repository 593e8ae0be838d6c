import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ossroles.cluster import (
    ACTIVE,
    DEFAULT_ROLE_RULES,
    SUPPORTING,
    Dendrogram,
    LabelRule,
    apply_label_rules,
    build_role_model,
    cut_roles,
    silhouette_samples,
    split_groups,
    ward_cluster,
)
from ossroles.errors import InvalidCandidateRange, LabelRuleConflict

from oracles import naive_ward, silhouette_bruteforce


def merge_sets(d: Dendrogram):
    return [(frozenset(d.members(l).tolist()), frozenset(d.members(r).tolist()), h)
            for l, r, h in zip(d.left, d.right, d.height)]


def same_merges(d, oracle, tol=1e-9):
    ours = merge_sets(d)
    if len(ours) != len(oracle):
        return False
    for (a, b, h), (oa, ob, oh) in zip(ours, oracle):
        if {a, b} != {oa, ob} or abs(h - oh) > tol:
            return False
    return True


class TestWard:
    def test_two_points(self):
        d = ward_cluster(np.array([[0.0], [2.0]]))
        assert d.height.tolist() == [2.0] and d.size.tolist() == [2]

    def test_duplicate_points_merge_at_zero(self):
        x = np.array([[1.0, 2.0], [1.0, 2.0], [5.0, 5.0]])
        assert ward_cluster(x).height[0] == 0.0

    def test_eight_points_match_oracle(self):
        X = np.random.default_rng(0).normal(size=(8, 3))
        assert same_merges(ward_cluster(X), naive_ward(X))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 10), st.integers(1, 4))
    def test_oracle_equivalence(self, seed, n, k):
        X = np.random.default_rng(seed).normal(size=(n, k))
        assert same_merges(ward_cluster(X), naive_ward(X))

    def test_matches_scipy(self):
        hierarchy = pytest.importorskip("scipy.cluster.hierarchy")
        X = np.random.default_rng(3).normal(size=(300, 3))
        Z = hierarchy.linkage(X, method="ward")
        d = ward_cluster(X)
        # scipy reports sqrt(2 * ESS increase)
        assert np.allclose(np.sqrt(2 * d.height), Z[:, 2], atol=1e-9)

    def test_ess_decomposition(self):
        X = np.random.default_rng(1).normal(size=(1000, 4)) * [1, 2, 3, 4]
        d = ward_cluster(X)
        total_ss = float(np.sum((X - X.mean(axis=0)) ** 2))
        assert abs(d.height.sum() - total_ss) < 1e-6

    def test_monotone_and_consumed_once(self):
        X = np.random.default_rng(2).normal(size=(200, 2))
        d = ward_cluster(X)
        assert np.all(np.diff(d.height) >= 0)
        used = np.concatenate([d.left, d.right])
        assert len(set(used.tolist())) == len(used) == 2 * (len(X) - 1)
        assert d.size[-1] == len(X)

    def test_json_round_trip(self):
        X = np.random.default_rng(5).normal(size=(20, 2))
        d = ward_cluster(X, leaf_keys=[f"k{i}" for i in range(20)])
        e = Dendrogram.from_json(d.to_json())
        assert np.array_equal(d.left, e.left) and np.array_equal(d.height, e.height)
        assert e.leaf_keys == d.leaf_keys

    def test_cut_partitions(self):
        X = np.random.default_rng(6).normal(size=(50, 2))
        d = ward_cluster(X)
        for k in (1, 2, 5, 50):
            parts = d.cut(k)
            assert len(parts) == k
            assert sorted(np.concatenate(parts).tolist()) == list(range(50))


class TestSilhouette:
    def test_hand_check(self):
        s = silhouette_samples(np.array([0.0, 1.0, 10.0, 11.0]), [0, 0, 1, 1])
        assert s[0] == pytest.approx(0.904762, abs=1e-6)

    def test_a_equals_b_is_zero(self):
        # point 1 sits at distance 1 from its mate and 1 from the other cluster's only point
        s = silhouette_samples(np.array([0.0, 1.0, 2.0]), [0, 0, 1])
        assert s[1] == 0.0

    def test_singleton_is_zero(self):
        s = silhouette_samples(np.array([0.0, 5.0, 6.0]), [0, 1, 1])
        assert s[0] == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 30), st.integers(2, 4))
    def test_matches_bruteforce_and_bounded(self, seed, n, k):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, 2))
        labels = rng.integers(0, k, size=n)
        if len(set(labels.tolist())) < 2:
            return
        s = silhouette_samples(X, labels)
        assert np.all((s >= -1) & (s <= 1))
        assert np.allclose(s, silhouette_bruteforce(X, labels), atol=1e-9)

    def test_matches_sklearn(self):
        metrics = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(8)
        X = rng.normal(size=(400, 3))
        labels = rng.integers(0, 4, size=400)
        assert np.allclose(silhouette_samples(X, labels), metrics.silhouette_samples(X, labels), atol=1e-9)


def blobs(centers, n, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    return np.vstack([rng.normal(c, scale, size=(n, len(c))) for c in centers])


class TestCutRoles:
    def test_selects_true_k(self):
        X = blobs([(0, 0), (5, 0), (0, 5)], 40)
        d = ward_cluster(X)
        cut = cut_roles(d, d.root, range(2, 7), X)
        assert cut.k == 3
        assert set(cut.report.mean_by_k) == set(range(2, 7))

    def test_k1_skipped_with_warning(self, caplog):
        X = blobs([(0, 0), (5, 0)], 20)
        d = ward_cluster(X)
        with caplog.at_level("WARNING"):
            cut = cut_roles(d, d.root, [1, 2, 3], X)
        assert 1 not in cut.report.mean_by_k and "k=1" in caplog.text

    def test_invalid_range(self):
        X = blobs([(0, 0)], 5)
        d = ward_cluster(X)
        with pytest.raises(InvalidCandidateRange):
            cut_roles(d, d.root, [2, 9], X)

    def test_force_k(self):
        X = blobs([(0, 0), (5, 0), (0, 5)], 30)
        d = ward_cluster(X)
        assert cut_roles(d, d.root, range(2, 6), X, force_k=5).k == 5

    def test_sampled_is_seeded(self):
        X = blobs([(0, 0), (6, 0), (0, 6)], 200)
        d = ward_cluster(X)
        a = cut_roles(d, d.root, range(2, 5), X, max_exact=100, sample_size=100, seed=3)
        b = cut_roles(d, d.root, range(2, 5), X, max_exact=100, sample_size=100, seed=3)
        assert a.report.sampled and a.k == 3
        assert a.report.mean_by_k == b.report.mean_by_k


class TestGroups:
    def test_far_blob_is_active(self):
        X = np.vstack([blobs([(0.1, 0.1)], 50), blobs([(8, 8)], 10, seed=1)])
        d = ward_cluster(X)
        g = split_groups(d, X)
        assert set(g.active_members.tolist()) == set(range(50, 60))

    def test_mirror_invariant(self):
        X = np.vstack([blobs([(0.1, 0.1)], 50), blobs([(8, 8)], 10, seed=1)])
        d = ward_cluster(X)
        g1, g2 = split_groups(d, X), split_groups(d, -X)
        assert np.array_equal(g1.active_members, g2.active_members)


class TestRoleModel:
    labels = ["Code Contribution", "Issue Coordination", "Code Tweaking"]

    def model(self, rules=DEFAULT_ROLE_RULES):
        X = np.vstack([
            blobs([(9, 0, 0)], 5, seed=1),    # code heavy
            blobs([(0, 9, 0)], 5, seed=2),    # coordination heavy
            blobs([(-1, -1, -1)], 20, seed=3),
            blobs([(0, 0, 3)], 10, seed=4),
        ])
        parts = {ACTIVE: [np.arange(0, 5), np.arange(5, 10)], SUPPORTING: [np.arange(10, 30), np.arange(30, 40)]}
        return build_role_model(parts, X, self.labels, rules), X

    def test_default_rules(self):
        m, _ = self.model()
        names = {c.label for c in m.clusters}
        assert {"Intense Code Contributor", "Coordinator", "Rare Contributor", "Issue Fixer"} <= names
        assert m.cluster(m.rare_role()).size == 20

    def test_fallback_names(self):
        m, _ = self.model(rules=())
        assert [c.label for c in m.clusters] == ["Role-1", "Role-2", "Role-3", "Role-4"]

    def test_centroids_and_assignment(self):
        m, X = self.model()
        for c in m.clusters:
            assert np.allclose(c.centroid, X[c.members].mean(axis=0), atol=1e-9)
        assert np.all(m.assignment >= 1)
        assert {c.group for c in m.clusters} == {ACTIVE, SUPPORTING}

    def test_singleton_centroid(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        m = build_role_model({ACTIVE: [np.array([2])], SUPPORTING: [np.array([0, 1])]}, X, ["a", "b"])
        assert np.array_equal(m.clusters[0].centroid, X[2])

    def test_equal_priority_conflict(self):
        rules = [LabelRule("A", "max", "Code Contribution", ACTIVE, priority=1),
                 LabelRule("B", "max", "Code Contribution", ACTIVE, priority=1)]
        with pytest.raises(LabelRuleConflict):
            self.model(rules)

    def test_priority_orders_claims(self):
        rules = [LabelRule("A", "max", "Code Contribution", ACTIVE, priority=1),
                 LabelRule("B", "max", "Code Contribution", ACTIVE, priority=2)]
        m, _ = self.model(rules)
        assert [c.label for c in m.clusters][:2].count("A") == 1
        assert "B" in [c.label for c in m.clusters]

    def test_threshold_rules(self):
        clusters, _ = self.model(rules=())
        named = apply_label_rules(clusters.clusters, [LabelRule("big", "above", "norm", value=5.0)], self.labels)
        assert set(named) == {1, 2}

    def test_overlap_rejected(self):
        X = np.zeros((3, 2))
        with pytest.raises(ValueError):
            build_role_model({ACTIVE: [np.array([0, 1])], SUPPORTING: [np.array([1, 2])]}, X, ["a", "b"])
