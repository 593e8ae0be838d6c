"""Role trajectories, transition counts and Role Change Intensity."""

from __future__ import annotations

import csv
import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyPopulation, MissingCentroid
from .events import ProjectRef

ABSENT = 0
ABSENT_LABEL = "Absent"


class PopulationTag(str, enum.Enum):
    RARE_ONLY = "RareOnly"
    SUPPORTING_ONLY = "SupportingOnly"
    EVER_ACTIVE = "EverActive"


@dataclass(frozen=True)
class RoleTrajectory:
    login: str
    project: ProjectRef
    sequence: tuple[int, ...]

    @property
    def key(self) -> tuple[str, str]:
        return self.login, self.project.slug

    def to_json(self) -> dict:
        return {"login": self.login, "project": self.project.slug, "sequence": list(self.sequence)}


def build_trajectories(
    keys: Sequence[tuple[str, ProjectRef, int]], roles: Sequence[int], periods: int
) -> list[RoleTrajectory]:
    """One length-``periods`` trajectory per (login, project); quarters without a row are Absent."""
    slots: dict[tuple[str, ProjectRef], list[int]] = defaultdict(lambda: [ABSENT] * periods)
    for (login, project, period), role in zip(keys, roles):
        if not 1 <= period <= periods:
            raise ValueError(f"period {period} outside 1..{periods}")
        slots[(login, project)][period - 1] = int(role)
    return [
        RoleTrajectory(login, project, tuple(seq))
        for (login, project), seq in sorted(slots.items(), key=lambda kv: (kv[0][1].slug, kv[0][0]))
    ]


def is_constant_role(t: RoleTrajectory) -> bool:
    """Same non-Absent role in every period (such contributors are left out of the dynamics)."""
    first = t.sequence[0]
    return first != ABSENT and all(r == first for r in t.sequence)


def tag_population(t: RoleTrajectory, active_roles: Iterable[int], rare_role: int) -> PopulationTag:
    roles = set(t.sequence)
    if roles & set(active_roles):
        return PopulationTag.EVER_ACTIVE
    if roles <= {ABSENT, rare_role}:
        return PopulationTag.RARE_ONLY
    return PopulationTag.SUPPORTING_ONLY


@dataclass
class TransitionMatrix:
    """Counts of consecutive-period role pairs; row/column 0 is Absent, ``i`` is role ``i``."""

    counts: np.ndarray
    population: PopulationTag | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def write_csv(self, path: str | Path, role_labels: Mapping[int, str]) -> None:
        names = [ABSENT_LABEL] + [role_labels.get(i, f"Role-{i}") for i in range(1, len(self.counts))]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["from \\ to", *names])
            for name, row in zip(names, self.counts):
                w.writerow([name, *(int(x) for x in row)])


def transition_matrix(
    trajectories: Iterable[RoleTrajectory], n_roles: int, population: PopulationTag | None = None
) -> TransitionMatrix:
    """Count ``role[t-1] -> role[t]`` pairs, self-transitions included."""
    counts = np.zeros((n_roles + 1, n_roles + 1), dtype=np.int64)
    for t in trajectories:
        seq = np.asarray(t.sequence)
        np.add.at(counts, (seq[:-1], seq[1:]), 1)
    return TransitionMatrix(counts, population)


@dataclass(frozen=True)
class RciScore:
    login: str
    project: ProjectRef
    value: float | None
    total_distance: float


def rci(
    t: RoleTrajectory,
    centroids: Mapping[int, np.ndarray],
    skip_absent: bool = False,
) -> RciScore:
    """Role Change Intensity: log10 of the summed centroid distances between consecutive periods.

    Absent sits at the origin of the factor space unless ``skip_absent`` drops
    every step touching an Absent slot. No role change means no score.
    """
    dim = len(next(iter(centroids.values()))) if centroids else 0
    origin = np.zeros(dim)

    def position(role: int) -> np.ndarray:
        if role == ABSENT:
            return origin
        try:
            return np.asarray(centroids[role], dtype=float)
        except KeyError:
            raise MissingCentroid(f"no centroid for role {role}") from None

    total = 0.0
    for prev, cur in zip(t.sequence, t.sequence[1:]):
        if prev == cur:
            continue
        if skip_absent and ABSENT in (prev, cur):
            continue
        total += float(np.linalg.norm(position(cur) - position(prev)))
    value = math.log10(total) if total > 0 else None
    return RciScore(t.login, t.project, value, total)


@dataclass
class RciSummary:
    count: int
    median: float
    q1: float
    q3: float
    bin_edges: np.ndarray
    bin_counts: np.ndarray

    def write_hist_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.bin_counts):
                w.writerow([f"{lo:.6f}", f"{hi:.6f}", int(c)])

    def to_json(self) -> dict:
        return {"count": self.count, "median": self.median, "q1": self.q1, "q3": self.q3}


def rci_summary(values: Iterable[float | None], bins: int = 20) -> RciSummary:
    """Median, linear-interpolation quartiles and a fixed-width histogram of RCI values."""
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        raise EmptyPopulation("no RCI scores to summarize")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return RciSummary(int(v.size), float(med), float(q1), float(q3), edges, counts)


def write_trajectories(trajectories: Iterable[RoleTrajectory], path: str | Path,
                       tags: Mapping[tuple[str, str], str] | None = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in trajectories:
            rec = t.to_json()
            if tags is not None:
                rec["population"] = tags.get(t.key)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_rci_csv(scores: Iterable[RciScore], tags: Mapping[tuple[str, str], str],
                  excluded: set[tuple[str, str]], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["project", "login", "population", "excluded", "total_distance", "rci"])
        for s in scores:
            key = (s.login, s.project.slug)
            w.writerow([
                s.project.slug, s.login, tags.get(key, ""), int(key in excluded),
                f"{s.total_distance:.6f}", "" if s.value is None else f"{s.value:.6f}",
            ])
