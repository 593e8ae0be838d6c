"""The 19 per-quarter action metrics and their CSV hand-off format."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .events import ActionEvent, EventKind, ProjectRef, TimeWindow, assign_quarter

METRIC_COLUMNS = (
    "commits_made",
    "loc_changed",
    "files_worked_on",
    "prs_made",
    "avg_pr_desc_len",
    "issues_reported",
    "avg_issue_desc_len",
    "issue_comments",
    "avg_issue_comment_len",
    "pr_comments",
    "avg_pr_comment_len",
    "mentioned_in_issue_comments",
    "mentioned_in_pr_comments",
    "refs_in_issue_comments",
    "refs_in_pr_comments",
    "issue_label_changes",
    "pr_label_changes",
    "issues_closed",
    "prs_closed",
)

METRIC_DESCRIPTIONS = (
    "# of commits made",
    "# of line of code changed in the codebase",
    "# of files worked on",
    "# of pull requests (PRs) made",
    "Avg. length of PR descriptions",
    "# of issues reported",
    "Avg. length of issue descriptions",
    "# of comments made in issue discussions",
    "Avg. length of issue comments",
    "# of comments made in PR discussions",
    "Avg. length of PR comments",
    "# of times being mentioned in issue comments",
    "# of times being mentioned in PR comments",
    "# of times referred other issues/PRs in issue comments",
    "# of times referred other issues/PRs in PR comments",
    "# of times applied or removed labels on issues",
    "# of times applied or removed labels on PRs",
    "# of times closed issues",
    "# of times closed pull requests",
)

AVERAGE_COLUMNS = frozenset(
    {"avg_pr_desc_len", "avg_issue_desc_len", "avg_issue_comment_len", "avg_pr_comment_len"}
)
KEY_COLUMNS = ("project", "login", "period")

RowKey = tuple[str, ProjectRef, int]


@dataclass(frozen=True)
class MetricsRow:
    login: str
    project: ProjectRef
    period: int
    values: tuple[float, ...]

    @property
    def key(self) -> RowKey:
        return self.login, self.project, self.period

    def __getitem__(self, column: str) -> float:
        return self.values[METRIC_COLUMNS.index(column)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(METRIC_COLUMNS, self.values))


def _sort_key(row: MetricsRow) -> tuple[str, str, int]:
    return row.project.slug, row.login, row.period


@dataclass
class MetricsMatrix:
    rows: list[MetricsRow] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.rows = sorted(self.rows, key=_sort_key)
        keys = [r.key for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (login, project, period) keys")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def keys(self) -> list[RowKey]:
        return [r.key for r in self.rows]

    def to_array(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(METRIC_COLUMNS)))
        return np.array([r.values for r in self.rows], dtype=float)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetricsMatrix):
            return NotImplemented
        return self.rows == other.rows


class _Acc:
    __slots__ = ("counts", "lengths", "files")

    def __init__(self) -> None:
        self.counts: dict[str, int] = defaultdict(int)
        self.lengths: dict[str, int] = defaultdict(int)
        self.files: set[str] = set()


_COUNT_FOR_KIND = {
    EventKind.COMMIT: "commits_made",
    EventKind.PR_OPENED: "prs_made",
    EventKind.ISSUE_OPENED: "issues_reported",
    EventKind.ISSUE_COMMENT: "issue_comments",
    EventKind.PR_COMMENT: "pr_comments",
    EventKind.ISSUE_LABEL_CHANGE: "issue_label_changes",
    EventKind.PR_LABEL_CHANGE: "pr_label_changes",
    EventKind.ISSUE_CLOSED: "issues_closed",
    EventKind.PR_CLOSED: "prs_closed",
}
_AVG_FOR_COUNT = {
    "prs_made": "avg_pr_desc_len",
    "issues_reported": "avg_issue_desc_len",
    "issue_comments": "avg_issue_comment_len",
    "pr_comments": "avg_pr_comment_len",
}


def compute_metrics(events: Iterable[ActionEvent], window: TimeWindow) -> MetricsMatrix:
    """Aggregate bot-filtered, in-window events into one row per active (login, project, quarter).

    Mention counts go to the mentioned login, in the quarter of the mentioning
    comment; everything else goes to the actor.
    """
    acc: dict[RowKey, _Acc] = defaultdict(_Acc)
    for e in events:
        period = assign_quarter(e.timestamp, window)
        a = acc[(e.actor_login, e.project, period)]
        count_col = _COUNT_FOR_KIND[e.kind]
        a.counts[count_col] += 1
        if e.kind is EventKind.COMMIT:
            a.counts["loc_changed"] += e.loc_changed
            a.files.update(e.files_touched)
        elif count_col in _AVG_FOR_COUNT:
            a.lengths[count_col] += e.body_length
        if e.kind is EventKind.ISSUE_COMMENT:
            a.counts["refs_in_issue_comments"] += e.references
            for login in e.mentions:
                acc[(login, e.project, period)].counts["mentioned_in_issue_comments"] += 1
        elif e.kind is EventKind.PR_COMMENT:
            a.counts["refs_in_pr_comments"] += e.references
            for login in e.mentions:
                acc[(login, e.project, period)].counts["mentioned_in_pr_comments"] += 1

    rows = []
    for (login, project, period), a in acc.items():
        values = dict(a.counts)
        values["files_worked_on"] = len(a.files)
        for count_col, avg_col in _AVG_FOR_COUNT.items():
            n = a.counts.get(count_col, 0)
            values[avg_col] = a.lengths[count_col] / n if n else 0.0
        vec = tuple(
            float(values.get(c, 0.0)) if c in AVERAGE_COLUMNS else int(values.get(c, 0))
            for c in METRIC_COLUMNS
        )
        if any(vec):
            rows.append(MetricsRow(login, project, period, vec))
    return MetricsMatrix(rows)


def export_matrix(matrix: MetricsMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(KEY_COLUMNS + METRIC_COLUMNS)
        for r in matrix.rows:
            w.writerow([r.project.slug, r.login, r.period, *(repr(float(v)) if isinstance(v, float) else v for v in r.values)])


def import_matrix(path: str | Path) -> MetricsMatrix:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != KEY_COLUMNS + METRIC_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header {reader.fieldnames}")
        for rec in reader:
            values = tuple(
                float(rec[c]) if c in AVERAGE_COLUMNS else int(rec[c]) for c in METRIC_COLUMNS
            )
            rows.append(MetricsRow(rec["login"], ProjectRef.parse(rec["project"]), int(rec["period"]), values))
    return MetricsMatrix(rows)


def merge_matrices(parts: Sequence[MetricsMatrix]) -> MetricsMatrix:
    return MetricsMatrix([r for m in parts for r in m.rows])
