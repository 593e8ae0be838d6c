"""The eleven acceptance criteria, each at its stated tolerance.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL <title>`` line to the
terminal, so ``pytest tests/test_acceptance.py`` doubles as a checklist.
"""

import contextlib
import json
import time

import httpx
import numpy as np
import pytest

from ossroles.cluster import silhouette_samples, ward_cluster
from ossroles.dynamics import RoleTrajectory, rci, transition_matrix
from ossroles.events import ProjectRef, TimeWindow
from ossroles.factor import fit_factor_model, paf, standardize
from ossroles.github import GitHubClient, TokenBucket, fetch_project
from ossroles.metrics import compute_metrics
from ossroles.pipeline import ARTIFACTS, analyze
from ossroles.rotation import rotate_oblimin
from ossroles.store import EventStore, load_aliases, load_events

from conftest import FIXTURES
from oracles import best_match_congruence, naive_ward, planted_factor_data
from replay import Replay

P = ProjectRef("o", "r")


@pytest.fixture
def criterion(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    @contextlib.contextmanager
    def run(number, title):
        try:
            yield
        except BaseException:
            reporter.write_line(f"ACCEPTANCE {number:>2} FAIL {title}")
            raise
        reporter.write_line(f"ACCEPTANCE {number:>2} PASS {title}")

    return run


def test_01_standardization(criterion):
    with criterion(1, "standardization moments, constant pruning, n=50,000 in < 1 s"):
        rng = np.random.default_rng(1)
        for trial in range(50):
            n, p = int(rng.integers(2, 300)), int(rng.integers(3, 20))
            X = rng.gamma(rng.uniform(0.2, 3.0), rng.uniform(0.1, 100.0), size=(n, p))
            X[:, 0] = 7.0
            z = standardize(X)
            assert 0 in z.pruned and 0 not in z.kept_columns
            assert np.all(np.abs(z.values.mean(axis=0)) < 1e-9)
            assert np.all(np.abs(z.values.var(axis=0) - 1.0) < 1e-9)
        big = rng.poisson(3.0, size=(50_000, 19)).astype(float)
        t0 = time.perf_counter()
        standardize(big)
        assert time.perf_counter() - t0 < 1.0


def test_02_paf_analytic(criterion):
    with criterion(2, "PAF on equicorrelated rho=0.64"):
        R = np.full((3, 3), 0.64)
        np.fill_diagonal(R, 1.0)
        res = paf(R)
        assert res.k == 1
        assert np.all(np.abs(np.abs(res.loadings[:, 0]) - 0.8) <= 0.01)
        assert np.all(np.abs(res.communalities - 0.64) <= 0.01)


def test_03_paf_recovery(criterion):
    with criterion(3, "planted 3-factor oblique model, n=10,000, p=19"):
        X, pattern, _ = planted_factor_data(10_000, p=19, k=3, seed=11)
        t0 = time.perf_counter()
        model = fit_factor_model(standardize(X))
        elapsed = time.perf_counter() - t0
        assert model.k == 3
        assert min(best_match_congruence(model.loadings, pattern)) >= 0.95
        assert elapsed < 30.0


def test_04_rotation_invariant(criterion):
    with criterion(4, "rotation keeps communalities on 100 models, diag(phi)=1"):
        rng = np.random.default_rng(4)
        for _ in range(100):
            p, k = int(rng.integers(4, 20)), int(rng.integers(2, 6))
            A = rng.uniform(-0.9, 0.9, size=(p, k)) / np.sqrt(k)
            res = rotate_oblimin(A)
            implied = np.einsum("ij,jk,ik->i", res.pattern, res.phi, res.pattern)
            assert np.max(np.abs(implied - np.sum(A**2, axis=1))) < 1e-6
            assert np.all(np.diag(res.phi) == 1.0)


def test_05_ward_oracle(criterion):
    with criterion(5, "Ward matches naive agglomeration on 200 instances; ESS decomposition"):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n, k = int(rng.integers(2, 11)), int(rng.integers(1, 5))
            X = rng.normal(size=(n, k))
            d = ward_cluster(X)
            oracle = naive_ward(X)
            assert len(oracle) == n - 1
            for l, r, h, (a, b, oh) in zip(d.left, d.right, d.height, oracle):
                assert {frozenset(d.members(l).tolist()), frozenset(d.members(r).tolist())} == {a, b}
                assert abs(h - oh) <= 1e-9
        for n in (10, 100, 1000):
            X = rng.normal(size=(n, 3)) * [1.0, 2.0, 5.0]
            total = float(np.sum((X - X.mean(axis=0)) ** 2))
            assert abs(ward_cluster(X).height.sum() - total) <= 1e-6


def test_06_silhouette(criterion):
    with criterion(6, "silhouette hand-check 0.904762 and bounds"):
        s = silhouette_samples(np.array([0.0, 1.0, 10.0, 11.0]), [0, 0, 1, 1])
        assert abs(s[0] - 0.904762) <= 1e-6
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(3, 200))
            labels = rng.integers(0, int(rng.integers(2, 6)), size=n)
            if len(set(labels.tolist())) < 2:
                continue
            s = silhouette_samples(rng.normal(size=(n, 3)), labels)
            assert np.all((s >= -1.0) & (s <= 1.0))


def test_07_rci(criterion):
    with criterion(7, "RCI exact values, constant trajectory, reversal on 1,000 trajectories"):
        cents = {1: np.array([0.0, 0.0]), 2: np.array([6.0, 8.0]), 3: np.array([3.0, 4.0])}
        assert rci(RoleTrajectory("a", P, (1, 1, 2, 2)), cents).value == 1.0
        assert rci(RoleTrajectory("a", P, (1, 3, 2)), cents).value == 1.0
        assert rci(RoleTrajectory("a", P, (2, 2, 2)), cents).value is None
        rng = np.random.default_rng(7)
        for _ in range(1000):
            seq = tuple(rng.integers(0, 4, size=int(rng.integers(2, 13))).tolist())
            a = rci(RoleTrajectory("a", P, seq), cents)
            b = rci(RoleTrajectory("a", P, seq[::-1]), cents)
            assert a.total_distance == pytest.approx(b.total_distance, abs=1e-12)
            assert (a.value is None) == (b.value is None)


def test_08_transitions(criterion):
    with criterion(8, "transition marginals on 1,000 sets; worked example"):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            T, n_roles = int(rng.integers(2, 13)), int(rng.integers(1, 9))
            seqs = rng.integers(0, n_roles + 1, size=(int(rng.integers(0, 20)), T))
            m = transition_matrix([RoleTrajectory(str(i), P, tuple(s.tolist())) for i, s in enumerate(seqs)],
                                  n_roles).counts
            assert np.array_equal(m.sum(axis=1), np.bincount(seqs[:, :-1].ravel(), minlength=n_roles + 1))
            assert np.array_equal(m.sum(axis=0), np.bincount(seqs[:, 1:].ravel(), minlength=n_roles + 1))
        m = transition_matrix([RoleTrajectory("a", P, (0, 1, 1, 0))], 2).counts
        expected = np.zeros((3, 3), dtype=int)
        expected[0, 1] = expected[1, 1] = expected[1, 0] = 1
        assert np.array_equal(m, expected)


def test_09_metrics_fixture(criterion):
    with criterion(9, "hand-authored store reproduces every metric"):
        events = load_events(EventStore(FIXTURES / "store_small"), TimeWindow(), denylist=["homu"],
                             aliases=load_aliases(FIXTURES / "aliases.json"))
        m = compute_metrics(events, TimeWindow())
        rows = {(r.login, r.project.slug, r.period): {k: v for k, v in r.as_dict().items() if v} for r in m.rows}
        assert rows == {
            ("alice", "acme/widget", 1): {
                "commits_made": 3, "loc_changed": 120, "files_worked_on": 2, "prs_made": 2,
                "avg_pr_desc_len": 15.0, "mentioned_in_issue_comments": 1, "mentioned_in_pr_comments": 1,
                "prs_closed": 1},
            ("alice", "acme/widget", 2): {"commits_made": 1, "loc_changed": 7, "files_worked_on": 1},
            ("alice", "acme/widget", 12): {"prs_closed": 1},
            ("bob", "acme/widget", 1): {
                "issues_reported": 1, "avg_issue_desc_len": 14.0, "issue_comments": 2,
                "avg_issue_comment_len": 44.0, "pr_comments": 1, "avg_pr_comment_len": 44.0,
                "refs_in_issue_comments": 2, "refs_in_pr_comments": 2, "issues_closed": 1},
            ("carol", "acme/widget", 1): {"issue_label_changes": 1, "pr_label_changes": 1},
            ("dave", "acme/widget", 1): {"mentioned_in_issue_comments": 2},
            ("dave", "acme/gadget", 7): {"commits_made": 1, "loc_changed": 5, "files_worked_on": 1},
        }


def test_10_end_to_end(criterion, synth_run, synth_config, tmp_path):
    with criterion(10, "synthetic analyze < 60 s, 3 factors, 5 roles, byte-identical rerun"):
        result, seconds = synth_run
        assert seconds < 60.0
        assert result.k_factors == 3 and result.n_roles == 5
        summary = json.loads((result.output / "summary.json").read_text())
        assert summary["metadata"]["config"]["cluster"]["select_by_silhouette"] is True
        again = analyze(synth_config.model_copy(update={"output": str(tmp_path / "again")}))
        for name in ARTIFACTS:
            assert (again.output / name).read_bytes() == (result.output / name).read_bytes(), name


def test_11_ingestion_replay(criterion, tmp_path):
    with criterion(11, "replay counts, zero duplicates on refetch, bot and denylist filtering"):
        demo = ProjectRef("octo", "demo")

        def client():
            replay = Replay("octo_demo.json")
            return GitHubClient("t", api_base=replay.base, client=httpx.Client(transport=replay.transport()),
                                limiter=TokenBucket(rate=1e9), sleep=lambda s: None)

        first = fetch_project(demo, TimeWindow(), EventStore(tmp_path), client())
        assert first.new_events == {"IssueOpened": 2, "PrOpened": 1, "IssueComment": 1, "PrComment": 2,
                                    "IssueLabelChange": 1, "PrLabelChange": 1, "PrClosed": 1, "Commit": 3}
        size = len(EventStore(tmp_path))
        assert size == 12
        assert fetch_project(demo, TimeWindow(), EventStore(tmp_path), client()).total == 0
        assert len(EventStore(tmp_path)) == size
        raw = {r["actor_login"] for r in EventStore(tmp_path).records()}
        assert {"dependabot[bot]", "renovate[bot]", "carol"} <= raw
        kept = {e.actor_login for e in load_events(EventStore(tmp_path), TimeWindow(), denylist=["carol"],
                                                   aliases={"bob@example.org": "bob"})}
        assert kept == {"alice", "bob"}
