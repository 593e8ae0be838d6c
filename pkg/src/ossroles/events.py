"""Core ingest types: projects, quarterly windows, action events, body parsing."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import OutOfWindow


@dataclass(frozen=True, order=True)
class ProjectRef:
    owner: str
    name: str

    def __post_init__(self) -> None:
        if not self.owner or not self.name:
            raise ValueError("ProjectRef owner and name must be non-empty")

    @classmethod
    def parse(cls, text: str) -> "ProjectRef":
        owner, sep, name = text.strip().partition("/")
        if not sep:
            raise ValueError(f"expected 'owner/name', got {text!r}")
        return cls(owner, name)

    @property
    def slug(self) -> str:
        return f"{self.owner}/{self.name}"

    def __str__(self) -> str:
        return self.slug


def _utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp (``Z`` suffix allowed) into an aware UTC datetime."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return _utc(datetime.fromisoformat(text))


def format_timestamp(ts: datetime) -> str:
    return _utc(ts).strftime("%Y-%m-%dT%H:%M:%SZ")


def _quarter_ordinal(ts: datetime) -> int:
    return ts.year * 4 + (ts.month - 1) // 3


def _on_quarter_boundary(ts: datetime) -> bool:
    return (
        ts.month in (1, 4, 7, 10)
        and ts.day == 1
        and ts.hour == ts.minute == ts.second == ts.microsecond == 0
    )


@dataclass(frozen=True)
class TimeWindow:
    """Half-open ``[start, end)`` span made of whole calendar quarters."""

    start: datetime = datetime(2015, 1, 1, tzinfo=timezone.utc)
    end: datetime = datetime(2018, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _utc(self.start))
        object.__setattr__(self, "end", _utc(self.end))
        if not self.start < self.end:
            raise ValueError("window start must precede end")
        for ts in (self.start, self.end):
            if not _on_quarter_boundary(ts):
                raise ValueError(f"{ts.isoformat()} is not a quarter boundary")

    @property
    def periods(self) -> int:
        return _quarter_ordinal(self.end) - _quarter_ordinal(self.start)

    def contains(self, ts: datetime) -> bool:
        return self.start <= _utc(ts) < self.end


def assign_quarter(ts: datetime, window: TimeWindow) -> int:
    """Return the 1-based quarter index of ``ts`` inside ``window``.

    Boundary instants belong to the quarter they open.
    """
    ts = _utc(ts)
    if not window.contains(ts):
        raise OutOfWindow(f"{format_timestamp(ts)} outside [{window.start}, {window.end})")
    return _quarter_ordinal(ts) - _quarter_ordinal(window.start) + 1


class EventKind(str, enum.Enum):
    COMMIT = "Commit"
    ISSUE_OPENED = "IssueOpened"
    ISSUE_COMMENT = "IssueComment"
    PR_OPENED = "PrOpened"
    PR_COMMENT = "PrComment"
    ISSUE_LABEL_CHANGE = "IssueLabelChange"
    PR_LABEL_CHANGE = "PrLabelChange"
    ISSUE_CLOSED = "IssueClosed"
    PR_CLOSED = "PrClosed"


BODY_KINDS = frozenset(
    {EventKind.ISSUE_OPENED, EventKind.ISSUE_COMMENT, EventKind.PR_OPENED, EventKind.PR_COMMENT}
)


@dataclass(frozen=True)
class ActionEvent:
    project: ProjectRef
    actor_login: str
    timestamp: datetime
    kind: EventKind
    source_id: str = ""
    actor_is_bot: bool = False
    loc_changed: int = 0
    files_touched: frozenset[str] = field(default_factory=frozenset)
    body_length: int = 0
    mentions: tuple[str, ...] = ()
    references: int = 0

    def __post_init__(self) -> None:
        if not self.actor_login:
            raise ValueError("actor_login must be non-empty")
        if self.loc_changed < 0 or self.body_length < 0 or self.references < 0:
            raise ValueError("event counts must be non-negative")


# A login is alphanumeric with single inner hyphens; the '@' must not follow a
# token character, which keeps e-mail addresses out.
_MENTION_RE = re.compile(r"(?<![\w@./+-])@([A-Za-z0-9](?:[A-Za-z0-9-]*[A-Za-z0-9])?)(?![\w-])")
_SHORT_REF_RE = re.compile(r"(?<![\w&#/])(?:[\w.-]+/[\w.-]+)?#\d+\b")


def _url_ref_re(host: str) -> re.Pattern[str]:
    return re.compile(
        r"https?://" + re.escape(host) + r"/[\w.-]+/[\w.-]+/(?:issues|pull)/\d+\b"
    )


_URL_REF_CACHE: dict[str, re.Pattern[str]] = {}


class LoginIndex(dict):
    """Case-folded login -> canonical spelling, reusable across many ``parse_body`` calls."""

    def __init__(self, logins: Iterable[str] = ()) -> None:
        super().__init__((login.lower(), login) for login in logins)


def parse_body(
    body: str | None, known_logins: Iterable[str], host: str = "github.com"
) -> tuple[list[str], int, int]:
    """Extract ``(mentions, references, body_length)`` from an issue/PR/comment body.

    Mentions are ``@login`` tokens naming a known login (case-insensitive,
    returned in the known spelling), one entry per occurrence. References count
    ``#N`` / ``owner/repo#N`` tokens plus full issue or pull URLs on ``host``.
    """
    if not body:
        return [], 0, 0
    if isinstance(known_logins, LoginIndex):
        canonical = known_logins
    else:
        canonical = LoginIndex(known_logins)
    mentions = [
        canonical[m.group(1).lower()]
        for m in _MENTION_RE.finditer(body)
        if m.group(1).lower() in canonical
    ]
    url_re = _URL_REF_CACHE.get(host)
    if url_re is None:
        url_re = _URL_REF_CACHE[host] = _url_ref_re(host)
    urls = url_re.findall(body)
    stripped = url_re.sub(" ", body)
    references = len(urls) + len(_SHORT_REF_RE.findall(stripped))
    return mentions, references, len(body)


def is_bot(login: str, actor_is_bot: bool = False, denylist: Iterable[str] = ()) -> bool:
    return actor_is_bot or login.endswith("[bot]") or login in set(denylist)


def filter_bots(events: Sequence[ActionEvent], denylist: Iterable[str] = ()) -> list[ActionEvent]:
    """Drop events performed by bots; everything else passes through in order."""
    deny = set(denylist)
    return [e for e in events if not is_bot(e.actor_login, e.actor_is_bot, deny)]
