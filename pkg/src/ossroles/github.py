"""GitHub REST v3 client: pagination, rate-limit handling and per-project fetch."""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Iterator

import httpx

from .errors import AuthError, NotFound, PartialFetch
from .events import EventKind, ProjectRef, TimeWindow, format_timestamp, parse_timestamp
from .store import EventStore, make_record

log = logging.getLogger(__name__)

DEFAULT_API = "https://api.github.com"
PER_PAGE = 100


class TokenBucket:
    """Thread-safe token bucket shared by all workers of one client."""

    def __init__(
        self,
        rate: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(rate, 1.0)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class GitHubClient:
    def __init__(
        self,
        token: str | None = None,
        api_base: str = DEFAULT_API,
        client: httpx.Client | None = None,
        limiter: TokenBucket | None = None,
        sleep: Callable[[float], None] = time.sleep,
        max_rate_waits: int = 5,
    ) -> None:
        headers = {"Accept": "application/vnd.github+json", "X-GitHub-Api-Version": "2022-11-28"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self.api_base = api_base.rstrip("/")
        self._client = client or httpx.Client(timeout=30.0)
        self._client.headers.update(headers)
        self._limiter = limiter or TokenBucket(rate=10.0)
        self._sleep = sleep
        self._max_rate_waits = max_rate_waits

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "GitHubClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def url(self, path: str) -> str:
        return f"{self.api_base}{path}"

    def _rate_limit_wait(self, resp: httpx.Response) -> float | None:
        if resp.status_code not in (403, 429):
            return None
        retry_after = resp.headers.get("Retry-After")
        if retry_after is not None:
            return float(retry_after)
        if resp.headers.get("X-RateLimit-Remaining") == "0":
            reset = float(resp.headers.get("X-RateLimit-Reset", "0"))
            return max(reset - time.time(), 0.0) + 1.0
        if resp.status_code == 429:
            return 60.0
        return None

    def get(self, url: str, params: dict[str, Any] | None = None) -> httpx.Response:
        """GET with rate-limit sleeps; maps 401/404 to typed errors."""
        for _ in range(self._max_rate_waits + 1):
            self._limiter.acquire()
            resp = self._client.get(url, params=params)
            wait = self._rate_limit_wait(resp)
            if wait is not None:
                log.info("rate limited on %s, sleeping %.0fs", url, wait)
                self._sleep(wait)
                continue
            if resp.status_code == 401:
                raise AuthError(f"401 from {url}: bad or missing credentials")
            if resp.status_code == 403:
                raise AuthError(f"403 from {url}: access forbidden")
            if resp.status_code == 404:
                raise NotFound(f"404 from {url}: repository renamed, deleted or private")
            if resp.status_code == 409:
                # empty repository
                return resp
            resp.raise_for_status()
            return resp
        raise PartialFetch(f"rate limit persisted after {self._max_rate_waits} waits on {url}")

    def pages(
        self, url: str, params: dict[str, Any] | None = None
    ) -> Iterator[tuple[list[dict[str, Any]], str | None]]:
        """Yield ``(items, next_url)`` per page; ``next_url`` is None on the last page.

        A ``url`` carrying its own query string (a saved cursor) is used verbatim.
        """
        next_url: str | None = url
        first = True
        while next_url:
            resp = self.get(next_url, params=params if first and "?" not in next_url else None)
            first = False
            if resp.status_code == 409 or not resp.content:
                yield [], None
                return
            items = resp.json()
            next_url = resp.links.get("next", {}).get("url")
            yield items, next_url


@dataclass
class FetchResult:
    project: ProjectRef
    new_events: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.new_events.values())


def _user(obj: dict[str, Any] | None) -> tuple[str | None, str | None]:
    if not obj:
        return None, None
    return obj.get("login"), obj.get("type")


class ProjectFetcher:
    """Fetch all in-window actions of one project into an :class:`EventStore`."""

    endpoints = ("issues", "issue_comments", "review_comments", "issue_events", "commits")

    def __init__(
        self,
        client: GitHubClient,
        store: EventStore,
        project: ProjectRef,
        window: TimeWindow,
        max_workers: int = 4,
        clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc),
    ) -> None:
        self.client = client
        self.store = store
        self.project = project
        self.window = window
        self.max_workers = max_workers
        self.clock = clock
        self.result = FetchResult(project)

    def _in_window(self, ts: str | None) -> bool:
        return ts is not None and self.window.contains(parse_timestamp(ts))

    def _repo(self, suffix: str) -> str:
        return self.client.url(f"/repos/{self.project.owner}/{self.project.name}{suffix}")

    def _save(self, kind: EventKind, records: list[dict[str, Any]]) -> None:
        n = self.store.add(self.project, kind, records)
        self.result.new_events[kind.value] = self.result.new_events.get(kind.value, 0) + n

    def _paginate(
        self, endpoint: str, url: str, params: dict[str, Any], handle: Callable[[list[dict]], None]
    ) -> None:
        cursor = self.store.cursor(self.project, endpoint)
        start = cursor or url
        if cursor:
            log.info("%s %s: resuming from %s", self.project, endpoint, cursor)
        current = start
        try:
            for items, next_url in self.client.pages(start, params):
                handle(items)
                current = next_url or current
                self.store.set_cursor(self.project, endpoint, next_url)
        except httpx.TransportError as exc:
            self.store.set_cursor(self.project, endpoint, current)
            raise PartialFetch(f"{self.project} {endpoint}: {exc}; progress saved") from exc
        self.store.set_cursor(self.project, endpoint, None, fetched_at=format_timestamp(self.clock()))

    def _since(self) -> str:
        return format_timestamp(self.window.start)

    def fetch_issues(self) -> None:
        def handle(items: list[dict]) -> None:
            by_kind: dict[EventKind, list[dict]] = {EventKind.ISSUE_OPENED: [], EventKind.PR_OPENED: []}
            for it in items:
                if not self._in_window(it.get("created_at")):
                    continue
                kind = EventKind.PR_OPENED if "pull_request" in it else EventKind.ISSUE_OPENED
                login, typ = _user(it.get("user"))
                by_kind[kind].append(
                    make_record(
                        source_id=it["node_id"],
                        project=self.project,
                        kind=kind,
                        timestamp=it["created_at"],
                        actor_login=login,
                        actor_type=typ,
                        number=it.get("number"),
                        body=it.get("body") or "",
                    )
                )
            for kind, recs in by_kind.items():
                self._save(kind, recs)

        params = {"state": "all", "since": self._since(), "per_page": PER_PAGE,
                  "sort": "created", "direction": "asc"}
        self._paginate("issues", self._repo("/issues"), params, handle)

    def _comment_handler(self, default_kind: EventKind) -> Callable[[list[dict]], None]:
        def handle(items: list[dict]) -> None:
            by_kind: dict[EventKind, list[dict]] = {EventKind.ISSUE_COMMENT: [], EventKind.PR_COMMENT: []}
            for it in items:
                if not self._in_window(it.get("created_at")):
                    continue
                kind = default_kind
                if kind is EventKind.ISSUE_COMMENT and "/pull/" in (it.get("html_url") or ""):
                    kind = EventKind.PR_COMMENT
                login, typ = _user(it.get("user"))
                by_kind[kind].append(
                    make_record(
                        source_id=it["node_id"],
                        project=self.project,
                        kind=kind,
                        timestamp=it["created_at"],
                        actor_login=login,
                        actor_type=typ,
                        body=it.get("body") or "",
                    )
                )
            for kind, recs in by_kind.items():
                self._save(kind, recs)

        return handle

    def fetch_comments(self) -> None:
        params = {"since": self._since(), "per_page": PER_PAGE, "sort": "created", "direction": "asc"}
        self._paginate("issue_comments", self._repo("/issues/comments"), params,
                       self._comment_handler(EventKind.ISSUE_COMMENT))
        self._paginate("review_comments", self._repo("/pulls/comments"), params,
                       self._comment_handler(EventKind.PR_COMMENT))

    def fetch_issue_events(self) -> None:
        kinds = {
            ("labeled", False): EventKind.ISSUE_LABEL_CHANGE,
            ("unlabeled", False): EventKind.ISSUE_LABEL_CHANGE,
            ("closed", False): EventKind.ISSUE_CLOSED,
            ("labeled", True): EventKind.PR_LABEL_CHANGE,
            ("unlabeled", True): EventKind.PR_LABEL_CHANGE,
            ("closed", True): EventKind.PR_CLOSED,
        }

        def handle(items: list[dict]) -> None:
            grouped: dict[EventKind, list[dict]] = {}
            for it in items:
                is_pr = "pull_request" in (it.get("issue") or {})
                kind = kinds.get((it.get("event"), is_pr))
                if kind is None or not self._in_window(it.get("created_at")):
                    continue
                login, typ = _user(it.get("actor"))
                grouped.setdefault(kind, []).append(
                    make_record(
                        source_id=it.get("node_id") or f"event:{it['id']}",
                        project=self.project,
                        kind=kind,
                        timestamp=it["created_at"],
                        actor_login=login,
                        actor_type=typ,
                        number=(it.get("issue") or {}).get("number"),
                    )
                )
            for kind, recs in grouped.items():
                self._save(kind, recs)

        self._paginate("issue_events", self._repo("/issues/events"), {"per_page": PER_PAGE}, handle)

    def _commit_record(self, item: dict[str, Any]) -> dict[str, Any]:
        detail = self.client.get(self._repo(f"/commits/{item['sha']}")).json()
        stats = detail.get("stats") or {}
        loc = stats.get("total", stats.get("additions", 0) + stats.get("deletions", 0))
        files = [f["filename"] for f in detail.get("files") or ()]
        login, typ = _user(detail.get("author") or item.get("author"))
        commit_author = (item.get("commit") or {}).get("author") or {}
        return make_record(
            source_id=item.get("node_id") or item["sha"],
            project=self.project,
            kind=EventKind.COMMIT,
            timestamp=commit_author.get("date"),
            actor_login=login,
            actor_type=typ,
            author_email=commit_author.get("email"),
            loc_changed=loc,
            files=files,
        )

    def fetch_commits(self) -> None:
        known = self.store.known_ids(self.project, EventKind.COMMIT)

        def handle(items: list[dict]) -> None:
            todo = [
                it for it in items
                if (it.get("node_id") or it["sha"]) not in known
                and self._in_window(((it.get("commit") or {}).get("author") or {}).get("date"))
            ]
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                records = list(pool.map(self._commit_record, todo))
            self._save(EventKind.COMMIT, records)

        params = {"since": self._since(), "until": format_timestamp(self.window.end), "per_page": PER_PAGE}
        self._paginate("commits", self._repo("/commits"), params, handle)

    def run(self) -> FetchResult:
        self.fetch_issues()
        self.fetch_comments()
        self.fetch_issue_events()
        self.fetch_commits()
        self.store.compact()
        return self.result


def fetch_project(
    project: ProjectRef,
    window: TimeWindow,
    store: EventStore,
    client: GitHubClient,
    max_workers: int = 4,
) -> FetchResult:
    """Fetch one project's in-window actions into ``store``; returns per-kind new-event counts."""
    return ProjectFetcher(client, store, project, window, max_workers=max_workers).run()
