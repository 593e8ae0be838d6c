"""Ward clustering of factor scores, silhouette-guided cuts and the role model."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import InvalidCandidateRange, LabelRuleConflict, SchemaError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ACTIVE, SUPPORTING = "Active", "Supporting"


# --------------------------------------------------------------------------
# Ward agglomeration


@dataclass
class Dendrogram:
    """Binary merge tree. Leaves are ``0..n-1``; merge ``i`` creates node ``n + i``.

    ``height`` is the increase in total within-cluster sum of squares caused
    by the merge.
    """

    n_leaves: int
    left: np.ndarray
    right: np.ndarray
    height: np.ndarray
    size: np.ndarray
    leaf_keys: list[Any] | None = None

    def __len__(self) -> int:
        return len(self.height)

    @property
    def root(self) -> int:
        return self.n_leaves + len(self.height) - 1 if len(self.height) else 0

    def is_leaf(self, node: int) -> bool:
        return node < self.n_leaves

    def children(self, node: int) -> tuple[int, int]:
        i = node - self.n_leaves
        return int(self.left[i]), int(self.right[i])

    def node_size(self, node: int) -> int:
        return 1 if self.is_leaf(node) else int(self.size[node - self.n_leaves])

    def members(self, node: int) -> np.ndarray:
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if self.is_leaf(v):
                out.append(v)
            else:
                stack.extend(self.children(v))
        return np.sort(np.array(out, dtype=int))

    def split(self, node: int, k: int) -> list[int]:
        """Split ``node`` into ``k`` subtrees by undoing its ``k - 1`` highest merges."""
        if k < 1 or k > self.node_size(node):
            raise InvalidCandidateRange(f"cannot cut a {self.node_size(node)}-leaf subtree into {k}")
        parts = [node]
        while len(parts) < k:
            top = max((p for p in parts if not self.is_leaf(p)))
            parts.remove(top)
            parts.extend(self.children(top))
        return sorted(parts, key=lambda p: int(self.members(p)[0]))

    def cut(self, k: int, node: int | None = None) -> list[np.ndarray]:
        """Partition the leaves under ``node`` (default: root) into ``k`` clusters."""
        node = self.root if node is None else node
        return [self.members(p) for p in self.split(node, k)]

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_leaves": self.n_leaves,
            "leaves": self.leaf_keys if self.leaf_keys is not None else list(range(self.n_leaves)),
            "merges": [
                {"left": int(l), "right": int(r), "height": float(h), "size": int(s)}
                for l, r, h, s in zip(self.left, self.right, self.height, self.size)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Dendrogram":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise SchemaError(f"dendrogram schema_version {data.get('schema_version')!r}")
        m = data["merges"]
        return cls(
            n_leaves=data["n_leaves"],
            left=np.array([x["left"] for x in m], dtype=int),
            right=np.array([x["right"] for x in m], dtype=int),
            height=np.array([x["height"] for x in m], dtype=float),
            size=np.array([x["size"] for x in m], dtype=int),
            leaf_keys=data.get("leaves"),
        )


def ward_cluster(scores: np.ndarray, leaf_keys: list[Any] | None = None) -> Dendrogram:
    """Ward agglomeration via the nearest-neighbour chain.

    Cluster dissimilarity is the Ward merge cost
    ``|A||B| / (|A|+|B|) * ||c_A - c_B||^2`` evaluated from centroids, which is
    exactly what the Lance-Williams recurrence yields for squared Euclidean
    input. Chain merges are re-ordered by height afterwards, so the result
    equals greedy agglomeration (Ward is reducible).
    """
    X = np.asarray(scores, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 2:
        raise ValueError("ward_cluster needs at least 2 points")
    cent = X.copy()
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    raw: list[tuple[int, int, float]] = []
    chain: list[int] = []
    next_start = 0
    remaining = n
    while remaining > 1:
        if not chain:
            while not active[next_start]:
                next_start += 1
            chain.append(next_start)
        a = chain[-1]
        diff = cent - cent[a]
        d = np.einsum("ij,ij->i", diff, diff) * (size * size[a] / (size + size[a]))
        d[~active] = np.inf
        d[a] = np.inf
        b = int(np.argmin(d))
        if len(chain) > 1 and d[chain[-2]] <= d[b]:
            b = chain[-2]
        if len(chain) > 1 and b == chain[-2]:
            chain.pop()
            chain.pop()
            lo, hi = min(a, b), max(a, b)
            raw.append((lo, hi, float(d[b])))
            total = size[lo] + size[hi]
            cent[lo] = (size[lo] * cent[lo] + size[hi] * cent[hi]) / total
            size[lo] = total
            active[hi] = False
            remaining -= 1
        else:
            chain.append(b)
    return _relabel(n, raw, leaf_keys)


def _relabel(n: int, raw: list[tuple[int, int, float]], leaf_keys: list[Any] | None) -> Dendrogram:
    order = sorted(range(len(raw)), key=lambda i: raw[i][2])
    parent = list(range(n))
    node_of = list(range(n))  # union-find root -> current node id
    sizes = {i: 1 for i in range(n)}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    left, right, height, size = [], [], [], []
    for step, i in enumerate(order):
        a, b, h = raw[i]
        ra, rb = find(a), find(b)
        na, nb = node_of[ra], node_of[rb]
        new = n + step
        s = sizes.pop(na) + sizes.pop(nb)
        sizes[new] = s
        left.append(min(na, nb))
        right.append(max(na, nb))
        height.append(h)
        size.append(s)
        parent[rb] = ra
        node_of[ra] = new
    return Dendrogram(
        n_leaves=n,
        left=np.array(left, dtype=int),
        right=np.array(right, dtype=int),
        height=np.array(height, dtype=float),
        size=np.array(size, dtype=int),
        leaf_keys=leaf_keys,
    )


# --------------------------------------------------------------------------
# silhouettes


def _labels_from_partition(parts: Sequence[np.ndarray], index: np.ndarray) -> np.ndarray:
    """Cluster label per position of ``index`` for a partition of leaf ids."""
    pos = {int(v): i for i, v in enumerate(index)}
    labels = np.empty(len(index), dtype=int)
    for c, members in enumerate(parts):
        for m in members:
            labels[pos[int(m)]] = c
    return labels


def _silhouette_from_sums(sums: np.ndarray, labels: np.ndarray, counts: np.ndarray) -> np.ndarray:
    n_c = len(counts)
    rows = np.arange(len(labels))
    own = counts[labels]
    a = np.where(own > 1, sums[rows, labels] / np.maximum(own - 1, 1), 0.0)
    means = sums / np.where(counts > 0, counts, 1)[None, :]
    means[rows, labels] = np.inf
    if n_c > 1:
        b = np.min(means, axis=1)
    else:
        b = np.zeros(len(labels))
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own <= 1] = 0.0
    return np.clip(s, -1.0, 1.0)


def nested_silhouettes(
    X: np.ndarray, fine_labels: np.ndarray, coarsenings: dict[int, np.ndarray], chunk: int | None = None
) -> dict[int, np.ndarray]:
    """Per-point silhouettes for several coarsenings of one fine partition.

    ``coarsenings[k]`` maps each fine cluster id to its cluster under the
    ``k``-cluster cut. Distances are computed once, chunk by chunk.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    n_fine = int(fine_labels.max()) + 1
    onehot = np.zeros((n, n_fine))
    onehot[np.arange(n), fine_labels] = 1.0
    sq = np.einsum("ij,ij->i", X, X)
    fine_sums = np.empty((n, n_fine))
    chunk = chunk or max(1, 4_000_000 // n)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * X[lo:hi] @ X.T
        D = np.sqrt(np.clip(d2, 0.0, None))
        D[np.arange(hi - lo), np.arange(lo, hi)] = 0.0
        fine_sums[lo:hi] = D @ onehot
    out = {}
    for k, mapping in coarsenings.items():
        M = np.zeros((n_fine, k))
        M[np.arange(n_fine), mapping] = 1.0
        labels = mapping[fine_labels]
        counts = np.bincount(labels, minlength=k).astype(float)
        out[k] = _silhouette_from_sums(fine_sums @ M, labels, counts)
    return out


def silhouette_samples(X: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """Silhouette ``(b - a) / max(a, b)`` of every point; singletons score 0."""
    labels = np.asarray(labels)
    _, inv = np.unique(labels, return_inverse=True)
    k = int(inv.max()) + 1
    return nested_silhouettes(np.asarray(X, dtype=float).reshape(len(labels), -1), inv, {k: np.arange(k)})[k]


@dataclass
class SilhouetteReport:
    mean_by_k: dict[int, float]
    values: np.ndarray
    selected_k: int
    sampled: bool = False


@dataclass
class CutResult:
    node: int
    k: int
    parts: list[np.ndarray]
    report: SilhouetteReport


def cut_roles(
    d: Dendrogram,
    node: int,
    k_candidates: Iterable[int],
    scores: np.ndarray,
    force_k: int | None = None,
    max_exact: int = 20000,
    sample_size: int = 20000,
    seed: int = 0,
) -> CutResult:
    """Cut the subtree at ``node`` into role clusters.

    Every candidate ``k`` gets a mean silhouette; the best one is selected
    unless ``force_k`` pins the count. Subtrees above ``max_exact`` leaves are
    scored on a seeded sample stratified by the finest candidate cut.
    """
    cands = sorted(set(int(k) for k in k_candidates))
    n_leaves = d.node_size(node)
    if not cands or cands[0] < 1 or cands[-1] > n_leaves:
        raise InvalidCandidateRange(f"candidates {cands} invalid for a {n_leaves}-leaf subtree")
    if force_k is not None and not 1 <= force_k <= n_leaves:
        raise InvalidCandidateRange(f"forced k={force_k} invalid for a {n_leaves}-leaf subtree")
    usable = [k for k in cands if k >= 2]
    if len(usable) < len(cands):
        log.warning("silhouette undefined for k=1; candidate skipped")

    k_max = max(usable + ([force_k] if force_k else []), default=1)
    fine_nodes = d.split(node, k_max)
    leaves = d.members(node)
    fine_parts = [d.members(p) for p in fine_nodes]
    fine_labels = _labels_from_partition(fine_parts, leaves)

    idx = np.arange(len(leaves))
    sampled = False
    if len(leaves) > max_exact:
        rng = np.random.default_rng(seed)
        frac = sample_size / len(leaves)
        picks = []
        for c in range(len(fine_parts)):
            members = np.flatnonzero(fine_labels == c)
            take = max(1, int(math.ceil(frac * len(members))))
            picks.append(np.sort(rng.choice(members, size=min(take, len(members)), replace=False)))
        idx = np.sort(np.concatenate(picks))
        sampled = True

    coarsenings = {}
    for k in usable:
        coarse = d.split(node, k)
        mapping = np.empty(len(fine_nodes), dtype=int)
        coarse_members = [set(d.members(c).tolist()) for c in coarse]
        for f, part in enumerate(fine_parts):
            first = int(part[0])
            mapping[f] = next(i for i, cm in enumerate(coarse_members) if first in cm)
        coarsenings[k] = mapping

    X = np.asarray(scores, dtype=float)[leaves[idx]]
    sil = nested_silhouettes(X, fine_labels[idx], coarsenings) if coarsenings else {}
    mean_by_k = {k: float(np.mean(v)) for k, v in sil.items()}

    if force_k is not None:
        k_sel = force_k
    elif mean_by_k:
        k_sel = max(mean_by_k, key=lambda k: (mean_by_k[k], -k))
    else:
        raise InvalidCandidateRange("no candidate with k >= 2 to select from")
    values = sil.get(k_sel, np.zeros(len(idx)))
    parts = d.cut(k_sel, node)
    return CutResult(node, k_sel, parts, SilhouetteReport(mean_by_k, values, k_sel, sampled))


# --------------------------------------------------------------------------
# Active / Supporting split and the role model


@dataclass
class GroupSplit:
    active_node: int
    supporting_node: int
    active_members: np.ndarray
    supporting_members: np.ndarray


def split_groups(d: Dendrogram, scores: np.ndarray) -> GroupSplit:
    """Cut at the root; the child whose centroid lies farther from the origin is Active."""
    X = np.asarray(scores, dtype=float)
    a, b = d.children(d.root)
    ma, mb = d.members(a), d.members(b)
    na = np.linalg.norm(X[ma].mean(axis=0))
    nb = np.linalg.norm(X[mb].mean(axis=0))
    if nb > na:
        a, b, ma, mb = b, a, mb, ma
    return GroupSplit(a, b, ma, mb)


@dataclass(frozen=True)
class LabelRule:
    """Names role clusters from centroid coordinates.

    ``kind`` is ``max``/``min`` (the one still-unnamed cluster with the
    extreme coordinate), ``above``/``below`` (all unnamed clusters past
    ``value``) or ``rest`` (every still-unnamed cluster). ``factor`` is an
    activity label, ``norm`` (distance from the mean profile) or ``total``
    (coordinate sum, i.e. overall activity). Lower ``priority`` runs first.
    """

    label: str
    kind: str
    factor: str = "norm"
    group: str | None = None
    value: float = 0.0
    priority: int = 0


DEFAULT_ROLE_RULES = (
    LabelRule("Intense Code Contributor", "max", "Code Contribution", ACTIVE, priority=1),
    LabelRule("Coordinator", "max", "Issue Coordination", ACTIVE, priority=2),
    LabelRule("Core Developer", "max", "Code Tweaking", ACTIVE, priority=3),
    LabelRule("All-Rounder", "rest", group=ACTIVE, priority=4),
    LabelRule("Rare Contributor", "min", "total", SUPPORTING, priority=1),
    LabelRule("Progress Controller", "max", "Progress Control", SUPPORTING, priority=2),
    LabelRule("Engaged Issue Reporter", "max", "Issue Reporting", SUPPORTING, priority=3),
    LabelRule("Issue Fixer", "max", "Code Tweaking", SUPPORTING, priority=4),
    LabelRule("Occasional Issue Reporter", "rest", group=SUPPORTING, priority=5),
)


@dataclass
class RoleCluster:
    role_id: int
    group: str
    label: str
    centroid: np.ndarray
    members: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class RoleModel:
    clusters: list[RoleCluster]
    assignment: np.ndarray
    factor_labels: list[str]
    keys: list[Any] | None = None
    silhouettes: dict[str, SilhouetteReport] = field(default_factory=dict)

    def cluster(self, role_id: int) -> RoleCluster:
        return self.clusters[role_id - 1]

    @property
    def centroids(self) -> dict[int, np.ndarray]:
        return {c.role_id: c.centroid for c in self.clusters}

    def role_ids(self, group: str) -> set[int]:
        return {c.role_id for c in self.clusters if c.group == group}

    def rare_role(self, label: str = "Rare Contributor") -> int:
        """Role id of the rare-contributor cluster (by label, else the least active Supporting one)."""
        for c in self.clusters:
            if c.label == label:
                return c.role_id
        support = [c for c in self.clusters if c.group == SUPPORTING]
        return min(support, key=lambda c: (float(np.sum(c.centroid)), c.role_id)).role_id

    def to_json(self) -> dict:
        data = {
            "schema_version": SCHEMA_VERSION,
            "factor_labels": self.factor_labels,
            "roles": [
                {"role_id": c.role_id, "group": c.group, "label": c.label,
                 "size": c.size, "centroid": c.centroid.tolist()}
                for c in self.clusters
            ],
            "silhouette": {
                g: {"selected_k": r.selected_k, "sampled": r.sampled,
                    "mean_by_k": {str(k): v for k, v in sorted(r.mean_by_k.items())}}
                for g, r in self.silhouettes.items()
            },
            "assignment": [int(r) for r in self.assignment],
        }
        if self.keys is not None:
            data["keys"] = self.keys
        return data

    def write_centroids_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["role_id", "label", "group", "size", *self.factor_labels])
            for c in self.clusters:
                w.writerow([c.role_id, c.label, c.group, c.size, *(f"{x:.6f}" for x in c.centroid)])


def _coordinate(centroid: np.ndarray, factor: str, factor_labels: Sequence[str]) -> float | None:
    if factor == "norm":
        return float(np.linalg.norm(centroid))
    if factor == "total":
        return float(np.sum(centroid))
    if factor in factor_labels:
        return float(centroid[list(factor_labels).index(factor)])
    return None


def apply_label_rules(
    clusters: list[RoleCluster], rules: Sequence[LabelRule], factor_labels: Sequence[str]
) -> dict[int, str]:
    """Return role_id -> label by running rules in priority order over unnamed clusters."""
    named: dict[int, str] = {}
    for priority in sorted({r.priority for r in rules}):
        claims: dict[int, list[str]] = {}
        for rule in (r for r in rules if r.priority == priority):
            pool = [c for c in clusters
                    if c.role_id not in named and (rule.group is None or c.group == rule.group)]
            if rule.kind == "rest":
                hits = pool
            else:
                coords = [(c, _coordinate(c.centroid, rule.factor, factor_labels)) for c in pool]
                coords = [(c, v) for c, v in coords if v is not None]
                if not coords:
                    log.debug("rule %s matched nothing", rule.label)
                    continue
                if rule.kind == "max":
                    hits = [max(coords, key=lambda cv: (cv[1], -cv[0].role_id))[0]]
                elif rule.kind == "min":
                    hits = [min(coords, key=lambda cv: (cv[1], cv[0].role_id))[0]]
                elif rule.kind == "above":
                    hits = [c for c, v in coords if v > rule.value]
                elif rule.kind == "below":
                    hits = [c for c, v in coords if v < rule.value]
                else:
                    raise ValueError(f"unknown rule kind {rule.kind!r}")
            for c in hits:
                claims.setdefault(c.role_id, []).append(rule.label)
        for role_id, labels in claims.items():
            if len(labels) > 1:
                raise LabelRuleConflict(
                    f"role {role_id} matched rules {labels} at equal priority {priority}"
                )
            named[role_id] = labels[0]
    return named


def build_role_model(
    partitions: dict[str, list[np.ndarray]],
    scores: np.ndarray,
    factor_labels: Sequence[str],
    rules: Sequence[LabelRule] = (),
    keys: list[Any] | None = None,
    silhouettes: dict[str, SilhouetteReport] | None = None,
) -> RoleModel:
    """Number clusters (Active first, larger first), attach centroids and labels."""
    X = np.asarray(scores, dtype=float)
    n = X.shape[0]
    assignment = np.zeros(n, dtype=int)
    clusters: list[RoleCluster] = []
    for group in (ACTIVE, SUPPORTING):
        parts = sorted(partitions.get(group, []), key=lambda m: (-len(m), int(np.min(m))))
        for members in parts:
            members = np.sort(np.asarray(members, dtype=int))
            if np.any(assignment[members] != 0):
                raise ValueError("partitions overlap")
            role_id = len(clusters) + 1
            assignment[members] = role_id
            clusters.append(RoleCluster(role_id, group, "", X[members].mean(axis=0), members))
    if np.any(assignment == 0):
        raise ValueError("partitions do not cover every row")
    labels = apply_label_rules(clusters, rules, factor_labels)
    for c in clusters:
        c.label = labels.get(c.role_id, f"Role-{c.role_id}")
    return RoleModel(clusters, assignment, list(factor_labels), keys, dict(silhouettes or {}))


def load_roles_json(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema_version {data.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    return data
