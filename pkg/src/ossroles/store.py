"""On-disk event store: one JSON-lines file per (project, kind).

Layout::

    <root>/<owner>__<name>/<Kind>.jsonl   records, one JSON object per line
    <root>/sync.json                      pagination cursors and fetch times

Every record carries ``schema_version``. Record identity is the API node id
(``source_id``); appending a record whose id is already present is a no-op.
"""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .errors import SchemaError
from .events import (
    BODY_KINDS,
    ActionEvent,
    EventKind,
    LoginIndex,
    ProjectRef,
    TimeWindow,
    filter_bots,
    parse_body,
    parse_timestamp,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

RECORD_FIELDS = (
    "schema_version",
    "source_id",
    "project",
    "kind",
    "timestamp",
    "actor_login",
    "actor_type",
    "author_email",
    "number",
    "body",
    "loc_changed",
    "files",
)


def make_record(
    *,
    source_id: str,
    project: ProjectRef,
    kind: EventKind,
    timestamp: str,
    actor_login: str | None,
    actor_type: str | None = None,
    author_email: str | None = None,
    number: int | None = None,
    body: str | None = None,
    loc_changed: int = 0,
    files: Iterable[str] = (),
) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "source_id": source_id,
        "project": project.slug,
        "kind": EventKind(kind).value,
        "timestamp": timestamp,
        "actor_login": actor_login,
        "actor_type": actor_type,
        "author_email": author_email,
        "number": number,
        "body": body,
        "loc_changed": int(loc_changed),
        "files": sorted(set(files)),
    }


def _sort_key(record: Mapping[str, Any]) -> tuple[str, str]:
    return record["timestamp"], record["source_id"]


def _dumps(record: Mapping[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


class EventStore:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._ids: dict[Path, set[str]] = {}

    def _dir(self, project: ProjectRef) -> Path:
        return self.root / f"{project.owner}__{project.name}"

    def _file(self, project: ProjectRef, kind: EventKind) -> Path:
        return self._dir(project) / f"{EventKind(kind).value}.jsonl"

    def _read(self, path: Path) -> list[dict[str, Any]]:
        if not path.exists():
            return []
        records = []
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec.get("schema_version") != SCHEMA_VERSION:
                    raise SchemaError(
                        f"{path}:{lineno}: schema_version {rec.get('schema_version')!r}, "
                        f"expected {SCHEMA_VERSION}"
                    )
                records.append(rec)
        return records

    def known_ids(self, project: ProjectRef, kind: EventKind) -> set[str]:
        path = self._file(project, kind)
        if path not in self._ids:
            self._ids[path] = {r["source_id"] for r in self._read(path)}
        return self._ids[path]

    def add(self, project: ProjectRef, kind: EventKind, records: Iterable[Mapping[str, Any]]) -> int:
        """Append records not already present; return how many were new."""
        path = self._file(project, kind)
        seen = self.known_ids(project, kind)
        fresh = []
        for rec in records:
            if rec["source_id"] in seen:
                continue
            seen.add(rec["source_id"])
            fresh.append(rec)
        if fresh:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as fh:
                for rec in fresh:
                    fh.write(_dumps(rec) + "\n")
        return len(fresh)

    def compact(self) -> None:
        """Rewrite every record file in canonical (timestamp, source_id) order."""
        for path in sorted(self.root.glob("*/*.jsonl")):
            records = sorted(self._read(path), key=_sort_key)
            tmp = path.with_suffix(".jsonl.tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(_dumps(rec) + "\n")
            tmp.replace(path)

    def projects(self) -> list[ProjectRef]:
        out = []
        for d in sorted(p for p in self.root.glob("*__*") if p.is_dir()):
            owner, _, name = d.name.partition("__")
            out.append(ProjectRef(owner, name))
        return out

    def records(self, project: ProjectRef | None = None) -> list[dict[str, Any]]:
        projects = [project] if project is not None else self.projects()
        out: list[dict[str, Any]] = []
        for proj in projects:
            for kind in EventKind:
                out.extend(self._read(self._file(proj, kind)))
        out.sort(key=lambda r: (r["project"], *_sort_key(r)))
        return out

    def __len__(self) -> int:
        return len(self.records())

    # sync metadata -------------------------------------------------------

    @property
    def _sync_path(self) -> Path:
        return self.root / "sync.json"

    def sync_state(self) -> dict[str, dict[str, Any]]:
        if not self._sync_path.exists():
            return {}
        return json.loads(self._sync_path.read_text(encoding="utf-8"))

    def cursor(self, project: ProjectRef, endpoint: str) -> str | None:
        return self.sync_state().get(project.slug, {}).get(endpoint, {}).get("cursor")

    def set_cursor(
        self, project: ProjectRef, endpoint: str, cursor: str | None, fetched_at: str | None = None
    ) -> None:
        state = self.sync_state()
        entry = state.setdefault(project.slug, {}).setdefault(endpoint, {})
        entry["cursor"] = cursor
        if fetched_at is not None:
            entry["fetched_at"] = fetched_at
        self.root.mkdir(parents=True, exist_ok=True)
        self._sync_path.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_aliases(path: str | Path | None) -> dict[str, str]:
    """Read an e-mail -> login alias map (JSON object). Keys are matched case-insensitively."""
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {str(k).lower(): str(v) for k, v in data.items()}


def load_events(
    store: EventStore,
    window: TimeWindow,
    denylist: Iterable[str] = (),
    aliases: Mapping[str, str] | None = None,
    host: str = "github.com",
) -> list[ActionEvent]:
    """Normalize stored records into bot-filtered, in-window :class:`ActionEvent` objects.

    Commit authors without a login are resolved through ``aliases`` (e-mail to
    login); unresolved commits are dropped with a warning. Mentions are resolved
    against every non-bot login acting anywhere in the store plus alias targets,
    so a contributor can be credited for mentions in a project they never acted in.
    """
    aliases = aliases or {}
    projects: dict[str, ProjectRef] = {}
    raw: list[tuple[dict[str, Any], str]] = []
    events = []
    dropped = 0
    for rec in store.records():
        login = rec.get("actor_login")
        if not login and rec["kind"] == EventKind.COMMIT.value:
            login = aliases.get((rec.get("author_email") or "").lower())
        if not login:
            dropped += 1
            continue
        ts = parse_timestamp(rec["timestamp"])
        if not window.contains(ts):
            continue
        project = projects.get(rec["project"])
        if project is None:
            project = projects[rec["project"]] = ProjectRef.parse(rec["project"])
        raw.append((rec, login))
        events.append(
            ActionEvent(
                project=project,
                actor_login=login,
                timestamp=ts,
                kind=EventKind(rec["kind"]),
                source_id=rec["source_id"],
                actor_is_bot=rec.get("actor_type") == "Bot",
                loc_changed=rec.get("loc_changed") or 0,
                files_touched=frozenset(rec.get("files") or ()),
            )
        )
    if dropped:
        log.warning("dropped %d records with unresolvable actor", dropped)

    kept = filter_bots(events, denylist)
    kept_ids = {e.source_id for e in kept}

    known = LoginIndex(sorted({e.actor_login for e in kept} | set(aliases.values())))

    bodies = {rec["source_id"]: rec.get("body") for rec, _ in raw if rec["source_id"] in kept_ids}
    out = []
    for e in kept:
        if e.kind in BODY_KINDS:
            mentions, refs, length = parse_body(bodies.get(e.source_id), known, host)
            e = replace(e, body_length=length, mentions=tuple(mentions), references=refs)
        out.append(e)
    return out


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)
