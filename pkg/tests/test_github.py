"""Ingest against recorded GitHub responses (tests/fixtures/github)."""

import httpx
import pytest

from ossroles.errors import AuthError, NotFound, PartialFetch
from ossroles.events import EventKind, ProjectRef, TimeWindow
from ossroles.github import GitHubClient, TokenBucket, fetch_project
from ossroles.metrics import compute_metrics
from ossroles.store import EventStore, load_events

from replay import Replay

DEMO = ProjectRef("octo", "demo")
EXPECTED = {
    "IssueOpened": 2,
    "PrOpened": 1,
    "IssueComment": 1,
    "PrComment": 2,
    "IssueLabelChange": 1,
    "PrLabelChange": 1,
    "PrClosed": 1,
    "Commit": 3,
}


def client_for(replay, sleeps=None, token="t"):
    return GitHubClient(
        token,
        api_base=replay.base,
        client=httpx.Client(transport=replay.transport()),
        limiter=TokenBucket(rate=1e9),
        sleep=(sleeps.append if sleeps is not None else lambda s: None),
    )


@pytest.fixture
def fetched(tmp_path):
    replay = Replay("octo_demo.json")
    sleeps = []
    store = EventStore(tmp_path / "store")
    result = fetch_project(DEMO, TimeWindow(), store, client_for(replay, sleeps))
    return store, result, replay, sleeps


def test_replay_counts(fetched):
    store, result, _, _ = fetched
    assert result.new_events == EXPECTED
    kinds = {}
    for r in store.records():
        kinds[r["kind"]] = kinds.get(r["kind"], 0) + 1
    assert kinds == EXPECTED


def test_pagination_followed(fetched):
    _, _, replay, _ = fetched
    assert ("/repos/octo/demo/issues", 2, 200) in replay.log


def test_rate_limit_sleeps_then_retries(fetched):
    _, _, replay, sleeps = fetched
    assert ("/repos/octo/demo/issues/comments", 1, 403) in replay.log
    assert ("/repos/octo/demo/issues/comments", 1, 200) in replay.log
    assert len(sleeps) == 1 and sleeps[0] >= 0


def test_out_of_window_dropped(fetched):
    store, _, _, _ = fetched
    assert "I_4" not in {r["source_id"] for r in store.records()}


def test_refetch_adds_nothing(fetched):
    store, _, _, _ = fetched
    before = len(store)
    again = fetch_project(DEMO, TimeWindow(), EventStore(store.root), client_for(Replay("octo_demo.json")))
    assert again.total == 0
    assert len(EventStore(store.root)) == before


def test_commit_details(fetched):
    store, _, _, _ = fetched
    commits = {r["source_id"]: r for r in store.records() if r["kind"] == "Commit"}
    assert commits["C_1"]["loc_changed"] == 42
    assert commits["C_1"]["files"] == ["README.md", "src/app.py"]
    assert commits["C_2"]["loc_changed"] == 5
    assert commits["C_2"]["actor_login"] is None and commits["C_2"]["author_email"] == "bob@example.org"


def test_comment_classification(fetched):
    store, _, _, _ = fetched
    by_id = {r["source_id"]: r["kind"] for r in store.records()}
    assert by_id["IC_1"] == "IssueComment"
    assert by_id["IC_2"] == "PrComment"
    assert by_id["RC_1"] == "PrComment"
    assert "SE_13" not in by_id


def test_bot_and_denylist_filtering(fetched):
    store, _, _, _ = fetched
    events = load_events(store, TimeWindow(), denylist=["carol"], aliases={"bob@example.org": "bob"})
    actors = {e.actor_login for e in events}
    assert actors == {"alice", "bob"}
    raw_actors = {r["actor_login"] for r in store.records()}
    assert {"dependabot[bot]", "renovate[bot]", "github-actions[bot]", "carol"} <= raw_actors
    m = compute_metrics(events, TimeWindow())
    alice = [r for r in m.rows if r.login == "alice"][0]
    assert alice["mentioned_in_issue_comments"] == 1


def test_private_repo_auth_error(tmp_path):
    replay = Replay("octo_secret.json")
    with pytest.raises(AuthError):
        fetch_project(ProjectRef("octo", "secret"), TimeWindow(), EventStore(tmp_path), client_for(replay, token=None))


def test_empty_repository(tmp_path):
    replay = Replay("octo_empty.json")
    result = fetch_project(ProjectRef("octo", "empty"), TimeWindow(), EventStore(tmp_path), client_for(replay))
    assert result.total == 0


def test_missing_repository(tmp_path):
    replay = Replay("octo_demo.json")
    with pytest.raises(NotFound):
        fetch_project(ProjectRef("octo", "gone"), TimeWindow(), EventStore(tmp_path), client_for(replay))


def test_partial_fetch_resumes(tmp_path):
    store = EventStore(tmp_path)
    replay = Replay("octo_demo.json", fail_at=("/repos/octo/demo/issues", 2))
    with pytest.raises(PartialFetch):
        fetch_project(DEMO, TimeWindow(), store, client_for(replay))
    cursor = EventStore(tmp_path).cursor(DEMO, "issues")
    assert cursor is not None and "page=2" in cursor
    resumed = Replay("octo_demo.json")
    fetch_project(DEMO, TimeWindow(), EventStore(tmp_path), client_for(resumed))
    # the resumed run starts at the saved page instead of page 1
    assert resumed.log[0] == ("/repos/octo/demo/issues", 2, 200)
    assert len(EventStore(tmp_path)) == sum(EXPECTED.values())


def test_token_bucket_throttles():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    bucket = TokenBucket(rate=2.0, capacity=1.0, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        bucket.acquire()
    assert sum(slept) == pytest.approx(1.0)


def test_authorization_header_sent():
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("Authorization")
        return httpx.Response(200, json=[])

    c = GitHubClient("secret-token", client=httpx.Client(transport=httpx.MockTransport(handler)),
                     limiter=TokenBucket(1e9))
    c.get(c.url("/rate_limit"))
    assert seen["auth"] == "Bearer secret-token"
