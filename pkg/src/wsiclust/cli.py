"""Command-line entry point.

One subcommand per pipeline stage plus ``all`` and ``serve``. Settings
resolve in order: the run's config snapshot, then a ``--config`` file,
then explicit flags; the merged result is re-snapshotted before the stage
runs. Failures exit nonzero with a single ``Category: message`` line on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import classify, pipeline
from .errors import PipelineError
from .pipeline import Config, RunPaths, run_lock


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run-dir", required=True, help="run directory")
    p.add_argument("--config", help="JSON config file (partial keys allowed)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tile-size", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--min-foreground", type=float)
    p.add_argument("--pca-dim", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--silhouette-sample", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--target-stats", help="normalization target stats file")


_FLAG_FIELDS = (
    "seed", "tile_size", "patch_size", "min_foreground", "pca_dim", "k",
    "k_min", "k_max", "restarts", "max_iter", "silhouette_sample", "grid",
    "target_stats",
)


def resolve_config(args, paths: RunPaths) -> Config:
    base = {}
    if paths.config.exists():
        base = json.loads(paths.config.read_text())
    if args.config:
        base.update(json.loads(Path(args.config).read_text()))
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    config = Config(**base)
    paths.root.mkdir(parents=True, exist_ok=True)
    pipeline.save_config(paths.config, config)
    return config


def cmd_preprocess(args) -> int:
    paths = RunPaths(args.run_dir)
    config = resolve_config(args, paths)
    with run_lock(paths):
        manifests = pipeline.load_manifest(args.manifest)
        pipeline.run_preprocess(paths, manifests, config)
        pipeline.run_features(paths, config)
    return 0


def cmd_ingest(args) -> int:
    paths = RunPaths(args.run_dir)
    resolve_config(args, paths)
    with run_lock(paths):
        features = pipeline.run_ingest(paths, args.features)
    print(f"ingested {features.n} regions x {features.dim} dims")
    return 0


def cmd_pca(args) -> int:
    paths = RunPaths(args.run_dir)
    config = resolve_config(args, paths)
    with run_lock(paths):
        pipeline.run_pca(paths, config)
    return 0


def cmd_cluster(args) -> int:
    paths = RunPaths(args.run_dir)
    config = resolve_config(args, paths)
    with run_lock(paths):
        results = pipeline.run_cluster(paths, config)
    for sid, (model, report, _) in sorted(results.items()):
        print(f"{sid}: k={model.k} mean_silhouette={report.mean_score:.6f}")
    return 0


def cmd_label(args) -> int:
    paths = RunPaths(args.run_dir)
    resolve_config(args, paths)
    entries = classify.parse_label_file(Path(args.labels).read_text())
    with run_lock(paths):
        labels = pipeline.run_label(paths, args.slide, entries)
    print(f"{args.slide}: positives {list(labels.positives())}")
    return 0


def cmd_evaluate(args) -> int:
    paths = RunPaths(args.run_dir)
    resolve_config(args, paths)
    with run_lock(paths):
        records = pipeline.run_evaluate(paths, args.roi)
    for rec in records:
        print(
            f"{rec['slide']}: k={rec['k']} accuracy={rec['accuracy']:.4f} "
            f"f1={rec['f1']:.4f} unlabeled={rec['unlabeled']}"
        )
    return 0


def cmd_heatmap(args) -> int:
    paths = RunPaths(args.run_dir)
    config = resolve_config(args, paths)
    with run_lock(paths):
        grids = pipeline.run_heatmap(paths, config)
    for sid in sorted(grids):
        print(f"{sid}: {paths.heatmap_png(sid)}")
    return 0


def cmd_all(args) -> int:
    paths = RunPaths(args.run_dir)
    config = resolve_config(args, paths)
    entries = None
    if args.labels:
        entries = classify.parse_label_file(Path(args.labels).read_text())
    with run_lock(paths):
        manifests = pipeline.load_manifest(args.manifest)
        pipeline.run_all(paths, manifests, config, roi_path=args.roi, label_entries=entries)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.run_dir, roi_path=args.roi, ui_dir=args.ui)
    uvicorn.run(app, host=args.bind, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsiclust",
        description="Cluster tiled slide patches without labels, then label "
        "a handful of representatives and score the propagation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize tiles and tessellate regions")
    _add_config_flags(p)
    p.add_argument("--manifest", required=True, help="slide manifest JSON")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("ingest-features", help="adopt an external feature file")
    _add_config_flags(p)
    p.add_argument("--features", required=True, help="feature file (binary or CSV)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("pca", help="fit PCA and reduce the feature matrix")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("cluster", help="k-means with silhouette-guided K selection")
    _add_config_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("label", help="apply a cluster label file to a slide")
    _add_config_flags(p)
    p.add_argument("--slide", required=True)
    p.add_argument("--labels", required=True, help="lines of cluster_index,label")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("evaluate", help="score propagated labels against ROIs")
    _add_config_flags(p)
    p.add_argument("--roi", required=True, help="ROI polygon file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="export positive-density grids")
    _add_config_flags(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("all", help="run every stage end to end")
    _add_config_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--roi", help="ROI file; enables evaluate + heatmap")
    p.add_argument("--labels", help="label file applied to every slide")
    p.set_defaults(func=cmd_all)

    p = sub.add_parser("serve", help="HTTP API over a completed run")
    _add_config_flags(p)
    p.add_argument("--roi", help="ROI file for live metrics")
    p.add_argument("--ui", help="static frontend directory to mount at /ui")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
