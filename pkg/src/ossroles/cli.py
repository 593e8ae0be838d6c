"""Command line entry point: ``ossroles {fetch,metrics,analyze,report,synth}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, OssRolesError

log = logging.getLogger("ossroles")


def cmd_fetch(cfg: RunConfig) -> int:
    from .github import GitHubClient, TokenBucket, fetch_project
    from .store import EventStore

    if not cfg.projects:
        raise ConfigError("no projects configured")
    token = os.environ.get(cfg.fetch.token_env) or None
    if token is None:
        log.info("%s not set; fetching anonymously", cfg.fetch.token_env)
    store = EventStore(cfg.store)
    window = cfg.window.build()
    total = 0
    limiter = TokenBucket(rate=cfg.fetch.requests_per_second)
    with GitHubClient(token, api_base=cfg.fetch.api_base, limiter=limiter) as client:
        for project in cfg.project_refs:
            result = fetch_project(project, window, store, client, max_workers=cfg.fetch.max_workers)
            print(f"{project}: {result.total} new events")
            total += result.total
    print(f"{total} new events")
    return 0


def cmd_metrics(cfg: RunConfig, out: str | None) -> int:
    from .metrics import export_matrix
    from .pipeline import metrics_from_store

    matrix = metrics_from_store(cfg)
    path = Path(out) if out else Path(cfg.output) / "metrics.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    export_matrix(matrix, path)
    print(f"{len(matrix)} rows -> {path}")
    return 0


def cmd_analyze(cfg: RunConfig, from_metrics: str | None) -> int:
    from .pipeline import analyze

    result = analyze(cfg, metrics_path=from_metrics)
    print(f"{result.n_rows} rows, {result.k_factors} factors, {result.n_roles} roles -> {result.output}")
    return 0


def cmd_report(directory: str, fmt: str, top: int) -> int:
    from .report import render_report

    sys.stdout.write(render_report(directory, fmt=fmt, top=top))
    return 0


def cmd_synth(root: str, seed: int, contributors: int) -> int:
    from .synth import generate_store

    result = generate_store(root, seed=seed, contributors=contributors)
    print(f"{result.n_records} records, {len(result.planted)} planted rows -> {root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON run configuration")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="ossroles", description=__doc__, parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fetch", parents=[common], help="download project actions into the event store")

    p = sub.add_parser("metrics", parents=[common], help="compute the per-quarter metrics matrix")
    p.add_argument("--out", help="CSV path (default: <output>/metrics.csv)")

    p = sub.add_parser("analyze", parents=[common], help="run factors, roles and dynamics")
    p.add_argument("--from-metrics", metavar="CSV", help="start from an exported metrics matrix")
    p.add_argument("--store", help="override the event store directory")
    p.add_argument("--output", help="override the artifact directory")
    p.add_argument("--select-by-silhouette", action="store_true",
                   help="choose role counts by mean silhouette instead of the configured k")

    p = sub.add_parser("report", parents=[common], help="summarize an artifact directory")
    p.add_argument("directory", nargs="?", help="artifact directory (default: configured output)")
    p.add_argument("--format", choices=("text", "markdown"), default="text")
    p.add_argument("--top", type=int, default=5, help="transitions listed per population")

    p = sub.add_parser("synth", parents=[common], help="write the bundled synthetic event store")
    p.add_argument("root", help="store directory to create")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--contributors", type=int, default=1000)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.command == "fetch":
            return cmd_fetch(cfg)
        if args.command == "metrics":
            return cmd_metrics(cfg, args.out)
        if args.command == "analyze":
            updates = {k: getattr(args, k) for k in ("store", "output") if getattr(args, k)}
            if args.select_by_silhouette:
                updates["cluster"] = cfg.cluster.model_copy(update={"select_by_silhouette": True})
            return cmd_analyze(cfg.model_copy(update=updates), args.from_metrics)
        if args.command == "report":
            return cmd_report(args.directory or cfg.output, args.format, args.top)
        if args.command == "synth":
            return cmd_synth(args.root, args.seed, args.contributors)
    except OssRolesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 1


if __name__ == "__main__":
    sys.exit(main())
