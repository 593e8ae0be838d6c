"""End-to-end analysis: metrics -> factors -> roles -> dynamics, written as versioned artifacts."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .cluster import ACTIVE, SUPPORTING, build_role_model, cut_roles, split_groups, ward_cluster
from .config import RunConfig
from .dynamics import (
    PopulationTag,
    build_trajectories,
    is_constant_role,
    rci,
    rci_summary,
    tag_population,
    transition_matrix,
    write_rci_csv,
    write_trajectories,
)
from .errors import EmptyPopulation, InvalidCandidateRange, NoData
from .factor import ActivityLabels, fit_factor_model, report_factors, standardize
from .metrics import METRIC_COLUMNS, MetricsMatrix, compute_metrics, export_matrix, import_matrix
from .store import EventStore, load_aliases, load_events

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
ARTIFACTS = (
    "metrics.csv",
    "factor_model.json",
    "loadings.csv",
    "phi.csv",
    "dendrogram.json",
    "roles.json",
    "centroids.csv",
    "trajectories.jsonl",
    "transitions_supporting.csv",
    "transitions_active.csv",
    "rci.csv",
    "rci_hist.csv",
    "summary.json",
)


def metrics_from_store(cfg: RunConfig) -> MetricsMatrix:
    store = EventStore(cfg.store)
    events = load_events(
        store,
        cfg.window.build(),
        denylist=cfg.bot_denylist,
        aliases=load_aliases(cfg.alias_file),
        host=cfg.fetch.web_host,
    )
    wanted = set(cfg.project_refs)
    if wanted:
        events = [e for e in events if e.project in wanted]
    return compute_metrics(events, cfg.window.build())


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _dump_json(obj: Any, path: Path, meta: dict | None = None) -> None:
    if meta is not None:
        obj = {**obj, "metadata": meta}
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _candidates(cfg_candidates: list[int], leaves: int, group: str) -> list[int]:
    cands = [k for k in cfg_candidates if k <= leaves]
    if len(cands) < len(cfg_candidates):
        log.warning("%s subtree has %d leaves; candidates above that dropped", group, leaves)
    if not cands:
        raise InvalidCandidateRange(f"{group} subtree too small ({leaves} leaves) for any candidate")
    return cands


@dataclass
class AnalysisResult:
    output: Path
    n_rows: int
    k_factors: int
    n_roles: int
    populations: dict[str, int] = field(default_factory=dict)


def run_analysis(cfg: RunConfig, matrix: MetricsMatrix, staging: Path) -> AnalysisResult:
    if len(matrix) == 0:
        raise NoData("no data points")
    window = cfg.window.build()
    meta = metadata(cfg)
    export_matrix(matrix, staging / "metrics.csv")

    z = standardize(matrix)
    f = cfg.factor
    model = fit_factor_model(z, max_iter=f.max_iter, tol=f.tol,
                             rotation_max_iter=f.rotation_max_iter, rotation_tol=f.rotation_tol)
    activity = ActivityLabels.from_list(cfg.labels.activities)
    factor_names = activity.for_model(model.k)
    _dump_json(model.to_json(activity), staging / "factor_model.json", meta)
    report_factors(model, activity, staging)

    keys = matrix.keys
    leaf_keys = [[login, project.slug, period] for login, project, period in keys]
    scores = model.scores
    dend = ward_cluster(scores, leaf_keys)
    _dump_json(dend.to_json(), staging / "dendrogram.json", meta)

    groups = split_groups(dend, scores)
    c = cfg.cluster
    cuts = {}
    for group, node, forced in (
        (ACTIVE, groups.active_node, c.k_active),
        (SUPPORTING, groups.supporting_node, c.k_supporting),
    ):
        leaves = dend.node_size(node)
        cands = _candidates(c.k_candidates, leaves, group)
        cuts[group] = cut_roles(
            dend, node, cands, scores,
            force_k=None if c.select_by_silhouette else forced,
            max_exact=c.silhouette_exact_max, sample_size=c.silhouette_sample_size, seed=c.seed,
        )
    rules = [r.build() for r in cfg.labels.roles]
    roles = build_role_model(
        {g: cut.parts for g, cut in cuts.items()}, scores, factor_names, rules,
        keys=leaf_keys, silhouettes={g: cut.report for g, cut in cuts.items()},
    )
    _dump_json(roles.to_json(), staging / "roles.json", meta)
    roles.write_centroids_csv(staging / "centroids.csv")

    trajectories = build_trajectories(keys, roles.assignment, window.periods)
    active_ids = roles.role_ids(ACTIVE)
    rare = roles.rare_role(cfg.labels.rare_role)
    tags = {t.key: tag_population(t, active_ids, rare).value for t in trajectories}
    excluded = {t.key for t in trajectories if is_constant_role(t)}
    write_trajectories(trajectories, staging / "trajectories.jsonl", tags)

    role_labels = {cl.role_id: cl.label for cl in roles.clusters}
    n_roles = len(roles.clusters)
    for tag, name in ((PopulationTag.SUPPORTING_ONLY, "supporting"), (PopulationTag.EVER_ACTIVE, "active")):
        members = [t for t in trajectories if tags[t.key] == tag.value and t.key not in excluded]
        transition_matrix(members, n_roles, tag).write_csv(staging / f"transitions_{name}.csv", role_labels)

    centroids = roles.centroids
    scores_rci = [rci(t, centroids, skip_absent=cfg.dynamics.skip_absent) for t in trajectories]
    write_rci_csv(scores_rci, tags, excluded, staging / "rci.csv")
    ever_active = [
        s.value for s in scores_rci
        if tags[(s.login, s.project.slug)] == PopulationTag.EVER_ACTIVE.value
        and (s.login, s.project.slug) not in excluded
    ]
    try:
        summary = rci_summary(ever_active, bins=cfg.dynamics.histogram_bins)
        summary.write_hist_csv(staging / "rci_hist.csv")
        rci_json = summary.to_json()
    except EmptyPopulation:
        log.warning("no RCI scores in the EverActive population")
        (staging / "rci_hist.csv").write_text("bin_low,bin_high,count\n", encoding="utf-8")
        rci_json = None

    populations = {tag.value: sum(1 for v in tags.values() if v == tag.value) for tag in PopulationTag}
    _dump_json({
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "n_rows": len(matrix),
        "periods": window.periods,
        "k_factors": model.k,
        "variance_explained": model.variance_explained,
        "pruned_columns": {METRIC_COLUMNS[j]: reason for j, reason in sorted(z.pruned.items())},
        "group_sizes": {ACTIVE: int(len(groups.active_members)), SUPPORTING: int(len(groups.supporting_members))},
        "roles_per_group": {g: cut.k for g, cut in cuts.items()},
        "populations": populations,
        "excluded_constant": len(excluded),
        "rci": rci_json,
    }, staging / "summary.json", meta)
    return AnalysisResult(staging, len(matrix), model.k, n_roles, populations)


def metadata(cfg: RunConfig) -> dict:
    """Provenance block embedded in every JSON artifact."""
    return {"config": cfg.provenance(), "ossroles_version": __version__}


def _manifest(cfg: RunConfig, directory: Path) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "config": cfg.provenance(),
        "versions": {
            "ossroles": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "threads": {v: os.environ.get(v) for v in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")},
        "artifacts": {name: sha256(directory / name) for name in ARTIFACTS},
    }


def analyze(cfg: RunConfig, metrics_path: str | Path | None = None) -> AnalysisResult:
    """Run the whole analysis into ``cfg.output``; nothing is left behind on failure."""
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    staging = out.parent / f".{out.name}.partial"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    try:
        matrix = import_matrix(metrics_path) if metrics_path else metrics_from_store(cfg)
        result = run_analysis(cfg, matrix, staging)
        _dump_json(_manifest(cfg, staging), staging / MANIFEST)
        for name in (*ARTIFACTS, MANIFEST):
            os.replace(staging / name, out / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    result.output = out
    return result


def verify_manifest(directory: str | Path) -> dict:
    """Load the manifest and check every artifact checksum; returns the manifest."""
    from .errors import MissingArtifact, SchemaError

    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise MissingArtifact(f"{path} not found")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema_version {manifest.get('schema_version')!r}, expected {MANIFEST_SCHEMA_VERSION}"
        )
    for name, digest in manifest.get("artifacts", {}).items():
        p = directory / name
        if not p.exists():
            raise MissingArtifact(f"{p} listed in manifest but missing")
        if sha256(p) != digest:
            raise SchemaError(f"{p}: checksum mismatch")
    return manifest
