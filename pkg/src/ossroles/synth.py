"""Seeded synthetic event stores with a planted activity and role structure.

Three latent activities (code, discussion, administration) drive the
metrics; five planted roles (three active, two supporting) set per-quarter
activity intensities. Used as the bundled end-to-end fixture.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .events import EventKind, ProjectRef, TimeWindow, format_timestamp
from .store import EventStore, make_record

# intensity of (code, discussion, admin) per planted role
PLANTED_ROLES: dict[str, tuple[float, float, float]] = {
    "heavy-coder": (24.0, 5.0, 2.0),
    "maintainer": (5.0, 5.0, 24.0),
    "reporter": (0.3, 8.0, 0.3),
    "fixer": (8.0, 0.5, 0.3),
    "rare": (0.25, 0.25, 0.1),
}
ACTIVE_PLANTED = ("heavy-coder", "maintainer", "reporter")

# contributor type -> (probability of acting in a quarter, role mix)
CONTRIBUTOR_TYPES: dict[str, tuple[float, dict[str, float]]] = {
    "casual": (0.3, {"rare": 1.0}),
    "supporter": (0.5, {"rare": 0.3, "reporter": 0.35, "fixer": 0.35}),
    "core": (0.8, {"heavy-coder": 0.3, "maintainer": 0.3, "reporter": 0.15, "fixer": 0.15, "rare": 0.1}),
}
TYPE_MIX = {"casual": 0.5, "supporter": 0.35, "core": 0.15}
PROJECTS = (ProjectRef("synth", "alpha"), ProjectRef("synth", "beta"), ProjectRef("synth", "gamma"))
BOT_LOGIN = "dependabot[bot]"

_WORDS = "the a fix bug when we should this test build error docs see about crash update".split()


@dataclass
class SynthResult:
    store: EventStore
    planted: dict[tuple[str, str, int], str]
    n_records: int


def _text(rng: np.random.Generator, length: int) -> str:
    if length <= 0:
        return ""
    words = rng.choice(_WORDS, size=length // 3 + 2)
    return " ".join(words)[:length]


class _Builder:
    def __init__(self, rng: np.random.Generator, window: TimeWindow) -> None:
        self.rng = rng
        self.window = window
        self.records: dict[tuple[ProjectRef, EventKind], list[dict]] = defaultdict(list)
        self.comments: dict[tuple[ProjectRef, int, EventKind], list[dict]] = defaultdict(list)
        self.counter = 0

    def _quarter_bounds(self, period: int) -> tuple[datetime, datetime]:
        start = self.window.start
        months = start.month - 1 + 3 * (period - 1)
        lo = start.replace(year=start.year + months // 12, month=months % 12 + 1)
        months += 3
        hi = start.replace(year=start.year + months // 12, month=months % 12 + 1)
        return lo, hi

    def _ts(self, period: int) -> str:
        lo, hi = self._quarter_bounds(period)
        span = int((hi - lo).total_seconds())
        return format_timestamp(lo + timedelta(seconds=int(self.rng.integers(0, span))))

    def add(self, project: ProjectRef, period: int, kind: EventKind, login: str, **kw) -> dict:
        self.counter += 1
        rec = make_record(
            source_id=f"SYN_{self.counter:08d}",
            project=project,
            kind=kind,
            timestamp=self._ts(period),
            actor_login=login,
            actor_type="Bot" if login.endswith("[bot]") else "User",
            **kw,
        )
        self.records[(project, kind)].append(rec)
        if kind in (EventKind.ISSUE_COMMENT, EventKind.PR_COMMENT):
            self.comments[(project, period, kind)].append(rec)
        return rec


def _emit_row(b: _Builder, project: ProjectRef, period: int, login: str,
              intensity: np.ndarray, mention_queue: list) -> None:
    rng = b.rng
    code, disc, admin = intensity
    pois = lambda lam: int(rng.poisson(max(lam, 0.0)))
    counts = {
        "commits": pois(2.0 * code),
        "prs": pois(0.8 * code),
        "issues": pois(0.8 * disc),
        "issue_comments": pois(2.5 * disc),
        "pr_comments": pois(2.0 * disc),
        "issue_labels": pois(1.5 * admin),
        "pr_labels": pois(1.0 * admin),
        "issues_closed": pois(1.0 * admin),
        "prs_closed": pois(1.0 * admin),
    }
    if not any(counts.values()):
        counts[rng.choice(["commits", "issues", "issue_comments"])] = 1
    pool = [f"src/module_{i:03d}.py" for i in range(400)]
    for _ in range(counts["commits"]):
        files = rng.choice(pool, size=int(rng.integers(1, 2 + int(code // 3) + 1)), replace=False)
        b.add(project, period, EventKind.COMMIT, login, loc_changed=pois(15.0 * (1 + code)) + 1,
              files=[str(f) for f in files])
    for _ in range(counts["prs"]):
        b.add(project, period, EventKind.PR_OPENED, login, body=_text(rng, pois(40.0 * (1 + code))))
    for _ in range(counts["issues"]):
        b.add(project, period, EventKind.ISSUE_OPENED, login, body=_text(rng, pois(40.0 * (1 + disc))))
    for kind, n in ((EventKind.ISSUE_COMMENT, counts["issue_comments"]), (EventKind.PR_COMMENT, counts["pr_comments"])):
        refs = pois(0.6 * admin * max(n, 1)) if n else 0
        bodies = [_text(rng, pois(25.0 * (1 + disc))) for _ in range(n)]
        for _ in range(refs):
            j = int(rng.integers(0, n))
            bodies[j] += f" #{int(rng.integers(1, 5000))}"
        for body in bodies:
            b.add(project, period, kind, login, body=body)
        mention_queue.append((project, period, kind, login, pois(1.2 * disc)))
    for kind, n in ((EventKind.ISSUE_LABEL_CHANGE, counts["issue_labels"]),
                    (EventKind.PR_LABEL_CHANGE, counts["pr_labels"]),
                    (EventKind.ISSUE_CLOSED, counts["issues_closed"]),
                    (EventKind.PR_CLOSED, counts["prs_closed"])):
        for _ in range(n):
            b.add(project, period, kind, login)


def generate_store(
    root: str | Path,
    seed: int = 0,
    contributors: int = 1000,
    window: TimeWindow | None = None,
    spread: float = 0.2,
) -> SynthResult:
    """Write a synthetic store under ``root`` and return the planted role of every active row."""
    window = window or TimeWindow()
    rng = np.random.default_rng(seed)
    b = _Builder(rng, window)
    planted: dict[tuple[str, str, int], str] = {}
    mention_queue: list = []
    types = list(TYPE_MIX)
    type_p = np.array([TYPE_MIX[t] for t in types])
    for i in range(contributors):
        login = f"dev{i:04d}"
        project = PROJECTS[i % len(PROJECTS)]
        ctype = types[int(rng.choice(len(types), p=type_p))]
        p_act, mix = CONTRIBUTOR_TYPES[ctype]
        roles = list(mix)
        role_p = np.array([mix[r] for r in roles])
        for period in range(1, window.periods + 1):
            if rng.random() >= p_act:
                continue
            role = roles[int(rng.choice(len(roles), p=role_p))]
            intensity = np.array(PLANTED_ROLES[role]) * rng.lognormal(0.0, spread, size=3)
            planted[(login, project.slug, period)] = role
            _emit_row(b, project, period, login, intensity, mention_queue)

    # mentions of a login are appended to comments written by others in the same quarter
    for project, period, kind, login, n in mention_queue:
        others = [c for c in b.comments[(project, period, kind)] if c["actor_login"] != login]
        if not others:
            continue
        for j in rng.integers(0, len(others), size=n):
            others[int(j)]["body"] += f" @{login}"

    for project in PROJECTS:
        for period in range(1, window.periods + 1, 3):
            b.add(project, period, EventKind.PR_OPENED, BOT_LOGIN, body="Bump dependency from 1.0 to 1.1")

    store = EventStore(root)
    total = 0
    for (project, kind), recs in sorted(b.records.items(), key=lambda kv: (kv[0][0].slug, kv[0][1].value)):
        total += store.add(project, kind, recs)
    store.compact()
    return SynthResult(store, planted, total)
