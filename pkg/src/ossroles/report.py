"""Human-readable summary of an artifact directory (plain text or markdown)."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .cluster import load_roles_json
from .errors import MissingArtifact, SchemaError
from .factor import load_model_json, read_loadings_csv
from .pipeline import MANIFEST_SCHEMA_VERSION, verify_manifest

FORMATS = ("text", "markdown")
_FLAG_MARK = {"strong": "**", "moderate": "*", "": ""}


def _require(directory: Path, name: str) -> Path:
    path = directory / name
    if not path.exists():
        raise MissingArtifact(f"{path} not found (run `analyze` first)")
    return path


def _table(header: Sequence[str], rows: Sequence[Sequence[str]], fmt: str) -> list[str]:
    if fmt == "markdown":
        out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
        out += ["| " + " | ".join(r) + " |" for r in rows]
        return out
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda r: "  ".join(str(x).ljust(w) for x, w in zip(r, widths)).rstrip()
    return [line(header), line(["-" * w for w in widths]), *(line(r) for r in rows)]


def _heading(title: str, fmt: str) -> list[str]:
    if fmt == "markdown":
        return ["", f"## {title}", ""]
    return ["", title, "=" * len(title)]


def _read_transitions(path: Path) -> tuple[list[str], np.ndarray]:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    counts = np.array([[int(x) for x in r[1:]] for r in rows[1:]], dtype=np.int64).reshape(len(names), -1)
    return names, counts


def top_transitions(names: Sequence[str], counts: np.ndarray, n: int = 5) -> list[tuple[str, str, int]]:
    """Largest off-diagonal transition counts, ties broken by (from, to) index."""
    pairs = [
        (int(counts[i, j]), i, j)
        for i in range(len(names)) for j in range(len(names))
        if i != j and counts[i, j] > 0
    ]
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [(names[i], names[j], c) for c, i, j in pairs[:n]]


def render_report(directory: str | Path, fmt: str = "text", top: int = 5) -> str:
    """Summarize factors, roles, transitions and RCI from ``directory``.

    Raises
    ------
    MissingArtifact
        An expected artifact (or the manifest) is absent.
    SchemaError
        An artifact was written by an incompatible version or fails its checksum.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    directory = Path(directory)
    manifest = verify_manifest(directory)
    model = load_model_json(_require(directory, "factor_model.json"))
    roles = load_roles_json(_require(directory, "roles.json"))
    summary = json.loads(_require(directory, "summary.json").read_text(encoding="utf-8"))
    if summary.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SchemaError(f"summary.json schema_version {summary.get('schema_version')!r}")
    metrics, names, L, h2, u2, flags = read_loadings_csv(_require(directory, "loadings.csv"))

    k, n_roles = model["k"], len(roles["roles"])
    lines: list[str] = []
    title = "Contributor role analysis"
    lines += [f"# {title}", ""] if fmt == "markdown" else [title, "#" * len(title), ""]
    lines.append(f"{summary['n_rows']} contributor-quarters over {summary['periods']} quarters; "
                 f"{k} factors, {n_roles} roles.")
    lines.append(f"Variance explained by the factors: {100 * model['variance_explained']:.1f}%.")
    version = manifest.get("versions", {}).get("ossroles")
    if version:
        lines.append(f"Artifacts written by ossroles {version}.")

    lines += _heading("Factor loadings", fmt)
    rows = []
    for i, m in enumerate(metrics):
        cells = []
        for j in range(len(names)):
            mark = _FLAG_MARK[flags[i][j]] if fmt == "markdown" else ""
            suffix = {"strong": " ++", "moderate": " +"}.get(flags[i][j], "") if fmt == "text" else ""
            cells.append(f"{mark}{L[i, j]:.2f}{mark}{suffix}")
        rows.append([m, *cells, f"{h2[i]:.2f}", f"{u2[i]:.2f}"])
    lines += _table(["metric", *names, "h2", "u2"], rows, fmt)
    legend = ("bold: loading > 0.5, italic: 0.3 < loading <= 0.5" if fmt == "markdown"
              else "++: loading > 0.5, +: 0.3 < loading <= 0.5")
    lines += ["", legend]

    lines += _heading("Factor correlations", fmt)
    phi = np.asarray(model["phi"])
    lines += _table(["", *names], [[n, *(f"{x:.2f}" for x in phi[i])] for i, n in enumerate(names)], fmt)

    lines += _heading("Roles", fmt)
    total = sum(r["size"] for r in roles["roles"])
    lines += _table(
        ["id", "role", "group", "size", "share"],
        [[str(r["role_id"]), r["label"], r["group"], str(r["size"]), f"{100 * r['size'] / total:.1f}%"]
         for r in roles["roles"]],
        fmt,
    )
    sil = roles.get("silhouette", {})
    for group, rep in sil.items():
        means = ", ".join(f"k={kk}: {v:.3f}" for kk, v in rep["mean_by_k"].items())
        lines.append(f"{group} silhouette ({'sampled' if rep['sampled'] else 'exact'}): {means}; "
                     f"selected k={rep['selected_k']}")

    for name, title in (("transitions_supporting.csv", "Top transitions (SupportingOnly)"),
                        ("transitions_active.csv", "Top transitions (EverActive)")):
        lines += _heading(title, fmt)
        tnames, counts = _read_transitions(_require(directory, name))
        tops = top_transitions(tnames, counts, top)
        if tops:
            lines += _table(["from", "to", "count"], [[a, b, str(c)] for a, b, c in tops], fmt)
        else:
            lines.append("no role changes")

    lines += _heading("Role Change Intensity (EverActive)", fmt)
    rci = summary.get("rci")
    if rci:
        lines.append(f"n={rci['count']}  median={rci['median']:.3f}  "
                     f"Q1={rci['q1']:.3f}  Q3={rci['q3']:.3f}")
    else:
        lines.append("no RCI scores")
    pops = summary.get("populations", {})
    lines.append("Populations: " + ", ".join(f"{k} {v}" for k, v in pops.items())
                 + f"; constant-role trajectories excluded: {summary.get('excluded_constant', 0)}")
    return "\n".join(lines) + "\n"
