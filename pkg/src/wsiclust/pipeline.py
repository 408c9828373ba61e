"""Run orchestration: config, stage execution, and run-directory persistence.

A run lives in one directory. The config snapshot is written before any
stage output, each stage writes into its own subdirectory, and every
artifact is a deterministic function of (inputs, config, seed), so a rerun
with identical arguments produces a byte-identical tree. An advisory lock
file keeps two processes from mutating the same run at once.

Stage layout:

    config.json
    preprocess/   regions.json, patches.npy, slides.json
    features/     features.tcf
    pca/          model.json, reduced.tcf
    cluster/      <slide>.model.json, <slide>.silhouette.json,
                  <slide>.representatives.json, <slide>.sweep.csv
    labels/       <slide>.json
    evaluate/     metrics.csv, metrics.json
    heatmap/      <slide>.csv, <slide>.png

Two stages consume randomness, both through per-slide seeds derived as
SeedSequence((seed, stage, slide_tag)) where slide_tag is the first 8 bytes
of SHA-256(slide_id): preprocessing (stage 1) subsamples pixels for the
background fit, and clustering (stage 4) seeds its restarts, which derive
further as SeedSequence((slide_seed, k, restart)).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import classify, clustering, feature_io
from .errors import (
    EmptyEvaluation,
    InvalidK,
    MissingStage,
    NoGroundTruth,
    RunLocked,
)
from .features import FeatureMatrix, pca_fit, pca_transform, stand_in_extract
from .preprocess import (
    ChannelStats,
    Region,
    Tile,
    compute_color_stats,
    fit_background_model,
    reinhard_normalize,
    rgb_to_gray,
    segment_foreground,
    tessellate,
)

log = logging.getLogger("wsiclust")

_STAGE_PREPROCESS = 1
_STAGE_CLUSTER = 4

# Grayscale pixels sampled per slide for the background mixture fit.
_GMM_SAMPLE_BUDGET = 1 << 18


@dataclass(frozen=True)
class Config:
    seed: int = 0
    tile_size: int = 2048
    patch_size: int = 128
    min_foreground: float = 0.5
    pca_dim: int = 48
    k: int | None = None
    k_min: int = 2
    k_max: int = 8
    restarts: int = 5
    max_iter: int = 300
    silhouette_sample: int = 10_000
    grid: int = 40
    target_stats: str | None = None  # stats file path; None = first tile is target


def save_config(path, config: Config) -> None:
    Path(path).write_text(json.dumps(asdict(config), indent=2, sort_keys=True) + "\n")


def load_config(path) -> Config:
    return Config(**json.loads(Path(path).read_text()))


class RunPaths:
    """Locations of every artifact inside a run directory."""

    def __init__(self, run_dir):
        self.root = Path(run_dir)
        self.config = self.root / "config.json"
        self.lock = self.root / "lock"
        self.regions = self.root / "preprocess" / "regions.json"
        self.patches = self.root / "preprocess" / "patches.npy"
        self.slides = self.root / "preprocess" / "slides.json"
        self.features = self.root / "features" / "features.tcf"
        self.pca_model = self.root / "pca" / "model.json"
        self.reduced = self.root / "pca" / "reduced.tcf"
        self.cluster_dir = self.root / "cluster"
        self.labels_dir = self.root / "labels"
        self.metrics_csv = self.root / "evaluate" / "metrics.csv"
        self.metrics_json = self.root / "evaluate" / "metrics.json"
        self.heatmap_dir = self.root / "heatmap"

    def model(self, slide_id: str) -> Path:
        return self.cluster_dir / f"{slide_id}.model.json"

    def silhouette(self, slide_id: str) -> Path:
        return self.cluster_dir / f"{slide_id}.silhouette.json"

    def representatives(self, slide_id: str) -> Path:
        return self.cluster_dir / f"{slide_id}.representatives.json"

    def sweep(self, slide_id: str) -> Path:
        return self.cluster_dir / f"{slide_id}.sweep.csv"

    def labels(self, slide_id: str) -> Path:
        return self.labels_dir / f"{slide_id}.json"

    def heatmap_csv(self, slide_id: str) -> Path:
        return self.heatmap_dir / f"{slide_id}.csv"

    def heatmap_png(self, slide_id: str) -> Path:
        return self.heatmap_dir / f"{slide_id}.png"


@contextmanager
def run_lock(paths: RunPaths):
    """Advisory single-owner lock on the run directory."""
    paths.root.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(paths.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunLocked(f"run directory is locked: {paths.lock}") from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        paths.lock.unlink(missing_ok=True)


def init_run(run_dir, config: Config) -> RunPaths:
    """Create the run directory and write the config snapshot if absent.

    Passing different settings to an already initialized run is an error;
    every stage must see the same snapshot.
    """
    paths = RunPaths(run_dir)
    paths.root.mkdir(parents=True, exist_ok=True)
    if paths.config.exists():
        existing = load_config(paths.config)
        if existing != config:
            raise ValueError(
                f"run already initialized with different settings: {paths.config}"
            )
    else:
        save_config(paths.config, config)
    return paths


def _slide_tag(slide_id: str) -> int:
    return int.from_bytes(hashlib.sha256(slide_id.encode()).digest()[:8], "little")


def slide_seed(seed: int, slide_id: str, stage: int = _STAGE_CLUSTER) -> int:
    return int(
        np.random.SeedSequence((seed, stage, _slide_tag(slide_id))).generate_state(1)[0]
    )


# --- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class TileRecord:
    tile_x: int
    tile_y: int
    path: Path


@dataclass(frozen=True)
class SlideManifest:
    slide_id: str
    extent: tuple  # (width, height) in pixels
    tiles: tuple  # TileRecord, sorted (tile_y, tile_x)
    magnification: str = ""


def load_manifest(path) -> list:
    """Manifest JSON -> SlideManifest list; tile paths resolve relative to it."""
    doc = json.loads(Path(path).read_text())
    base = Path(path).parent
    slides = []
    for entry in doc["slides"]:
        sid = entry["slide_id"]
        if not sid or any(ch in sid for ch in ":/\\"):
            raise ValueError(f"slide_id {sid!r} must be non-empty without ':' or slashes")
        seen = set()
        tiles = []
        for t in entry["tiles"]:
            key = (int(t["tile_x"]), int(t["tile_y"]))
            if key in seen:
                raise ValueError(f"duplicate tile {key} in slide {sid!r}")
            seen.add(key)
            tiles.append(TileRecord(key[0], key[1], base / t["path"]))
        tiles.sort(key=lambda t: (t.tile_y, t.tile_x))
        slides.append(
            SlideManifest(
                slide_id=sid,
                extent=(int(entry["extent"][0]), int(entry["extent"][1])),
                tiles=tuple(tiles),
                magnification=entry.get("magnification", ""),
            )
        )
    slides.sort(key=lambda s: s.slide_id)
    return slides


def _load_tile(manifest: SlideManifest, record: TileRecord, tile_size: int) -> Tile:
    if not record.path.exists():
        raise FileNotFoundError(f"tile file missing: {record.path}")
    pixels = np.asarray(Image.open(record.path).convert("RGB"))
    if pixels.shape[0] != tile_size or pixels.shape[1] != tile_size:
        raise ValueError(
            f"{record.path}: tile is {pixels.shape[1]}x{pixels.shape[0]}, "
            f"expected {tile_size}x{tile_size}"
        )
    return Tile(manifest.slide_id, record.tile_x, record.tile_y, pixels)


# --- stage: preprocess --------------------------------------------------------

_STAT_FIELDS = ("mean_l", "mean_a", "mean_b", "std_l", "std_a", "std_b")


def load_channel_stats(path) -> ChannelStats:
    """Target stats file: six labeled scalars in transformed color space."""
    doc = json.loads(Path(path).read_text())
    missing = [f for f in _STAT_FIELDS if f not in doc]
    if missing:
        raise ValueError(f"{path}: missing stats fields {missing}")
    return ChannelStats(**{f: float(doc[f]) for f in _STAT_FIELDS})


def save_channel_stats(path, stats: ChannelStats) -> None:
    doc = {f: getattr(stats, f) for f in _STAT_FIELDS}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def save_regions(path, regions) -> None:
    doc = [
        {
            "region_id": r.region_id,
            "slide_id": r.slide_id,
            "tile_x": r.tile_x,
            "tile_y": r.tile_y,
            "patch_x": r.patch_x,
            "patch_y": r.patch_y,
            "size": r.size,
        }
        for r in regions
    ]
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_regions(paths: RunPaths, with_pixels: bool = False) -> list:
    if not paths.regions.exists():
        raise MissingStage("preprocess stage has not run (regions.json missing)")
    doc = json.loads(paths.regions.read_text())
    pixels = None
    if with_pixels:
        pixels = np.load(paths.patches, mmap_mode="r")
    regions = []
    for i, rec in enumerate(doc):
        regions.append(
            Region(
                region_id=rec["region_id"],
                slide_id=rec["slide_id"],
                tile_x=rec["tile_x"],
                tile_y=rec["tile_y"],
                patch_x=rec["patch_x"],
                patch_y=rec["patch_y"],
                size=rec["size"],
                pixels=np.asarray(pixels[i]) if pixels is not None else None,
            )
        )
    return regions


def load_slide_extents(paths: RunPaths) -> dict:
    if not paths.slides.exists():
        raise MissingStage("preprocess stage has not run (slides.json missing)")
    doc = json.loads(paths.slides.read_text())
    return {sid: tuple(entry["extent"]) for sid, entry in doc.items()}


def _fit_slide_model(manifest: SlideManifest, config: Config):
    """Background mixture for one slide, fit on a seeded pixel subsample.

    Returns None when the two fitted components are not meaningfully
    separated (their means lie within one combined standard deviation),
    which is what a slide of bare glass looks like.
    """
    rng = np.random.default_rng(
        slide_seed(config.seed, manifest.slide_id, stage=_STAGE_PREPROCESS)
    )
    per_tile = max(2, _GMM_SAMPLE_BUDGET // len(manifest.tiles))
    chunks = []
    for record in manifest.tiles:
        gray = rgb_to_gray(_load_tile(manifest, record, config.tile_size).pixels).ravel()
        if gray.size > per_tile:
            keep = rng.choice(gray.size, size=per_tile, replace=False)
            keep.sort()
            gray = gray[keep]
        chunks.append(gray)
    model = fit_background_model(np.concatenate(chunks))
    spread = np.sqrt(model.var_0) + np.sqrt(model.var_1)
    if model.mean_1 - model.mean_0 <= spread:
        log.info(
            "slide %s: mixture means %.1f/%.1f within noise (spread %.1f)",
            manifest.slide_id, model.mean_0, model.mean_1, spread,
        )
        return None
    return model


def run_preprocess(paths: RunPaths, manifests, config: Config) -> list:
    """Normalize every tile and persist the tessellated foreground regions.

    The foreground model is fit once per slide; tiles are then masked,
    normalized toward the target stats (the first tile with foreground
    serves as target when none is configured), and tessellated.
    """
    target = load_channel_stats(config.target_stats) if config.target_stats else None

    regions = []
    patch_stacks = []
    extents = {}
    for manifest in manifests:
        extents[manifest.slide_id] = manifest.extent
        model = _fit_slide_model(manifest, config)
        slide_count = 0
        for record in manifest.tiles:
            if model is None:
                break
            tile = _load_tile(manifest, record, config.tile_size)
            try:
                mask = segment_foreground(tile, model)
                if int(mask.sum()) < 2:
                    log.info(
                        "slide %s tile (%d, %d): no foreground",
                        manifest.slide_id, record.tile_x, record.tile_y,
                    )
                    continue
                if target is None:
                    target = compute_color_stats(tile, mask)
                    log.info(
                        "normalization target: first tile of %s", manifest.slide_id
                    )
                normalized = reinhard_normalize(tile, mask, target)
                tile_regions = tessellate(
                    normalized.tile,
                    mask,
                    patch_size=config.patch_size,
                    min_foreground=config.min_foreground,
                )
            except Exception as exc:
                exc.args = (
                    f"slide {manifest.slide_id} tile "
                    f"({record.tile_x}, {record.tile_y}): {exc}",
                )
                raise
            regions.extend(tile_regions)
            slide_count += len(tile_regions)
            for r in tile_regions:
                patch_stacks.append(r.pixels)
        if slide_count == 0:
            log.warning("slide %s produced no foreground regions", manifest.slide_id)

    paths.regions.parent.mkdir(parents=True, exist_ok=True)
    save_regions(paths.regions, regions)
    if patch_stacks:
        stack = np.stack(patch_stacks)
    else:
        stack = np.zeros((0, config.patch_size, config.patch_size, 3), dtype=np.uint8)
    np.save(paths.patches, stack)
    slides_doc = {sid: {"extent": list(ext)} for sid, ext in extents.items()}
    paths.slides.write_text(json.dumps(slides_doc, indent=2, sort_keys=True) + "\n")
    log.info("preprocess: %d regions from %d slides", len(regions), len(manifests))
    return regions


# --- stage: features ----------------------------------------------------------

def run_features(paths: RunPaths, config: Config) -> FeatureMatrix:
    """Deterministic stand-in features from the stored normalized patches."""
    regions = load_regions(paths, with_pixels=True)
    if not regions:
        raise EmptyEvaluation("no regions to featurize")
    data = np.stack([stand_in_extract(r.pixels) for r in regions])
    features = FeatureMatrix(tuple(r.region_id for r in regions), data)
    paths.features.parent.mkdir(parents=True, exist_ok=True)
    feature_io.write_tcf(paths.features, features)
    return features


def run_ingest(paths: RunPaths, source) -> FeatureMatrix:
    """Adopt an externally computed feature file (binary or CSV) as-is."""
    features = feature_io.load_features(source)
    paths.features.parent.mkdir(parents=True, exist_ok=True)
    feature_io.write_tcf(paths.features, features)
    return features


def load_feature_stage(paths: RunPaths) -> FeatureMatrix:
    if not paths.features.exists():
        raise MissingStage("feature stage has not run (features.tcf missing)")
    return feature_io.read_tcf(paths.features)


# --- stage: pca ----------------------------------------------------------------

def save_pca_model(path, model) -> None:
    doc = {
        "q": model.q,
        "mean": [float(v) for v in model.mean],
        "components": [[float(v) for v in row] for row in model.components],
        "explained_variance": [float(v) for v in model.explained_variance],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_pca_model(path):
    from .features import PcaModel

    doc = json.loads(Path(path).read_text())
    return PcaModel(
        mean=np.array(doc["mean"], dtype=np.float64),
        components=np.array(doc["components"], dtype=np.float64),
        explained_variance=np.array(doc["explained_variance"], dtype=np.float64),
        q=int(doc["q"]),
    )


def run_pca(paths: RunPaths, config: Config) -> FeatureMatrix:
    """Fit PCA on all features at once and persist the reduced matrix."""
    features = load_feature_stage(paths)
    q = min(config.pca_dim, features.dim, features.n - 1) if features.n > 1 else 1
    if q < config.pca_dim:
        log.info("pca: reducing to %d dims (requested %d)", q, config.pca_dim)
    model = pca_fit(features, q)
    reduced = pca_transform(model, features)
    paths.pca_model.parent.mkdir(parents=True, exist_ok=True)
    save_pca_model(paths.pca_model, model)
    feature_io.write_tcf(paths.reduced, reduced)
    return reduced


def load_reduced(paths: RunPaths) -> FeatureMatrix:
    if not paths.reduced.exists():
        raise MissingStage("pca stage has not run (reduced.tcf missing)")
    return feature_io.read_tcf(paths.reduced)


# --- stage: cluster --------------------------------------------------------------

def slide_of_region(region_id: str) -> str:
    return region_id.split(":", 1)[0]


def split_by_slide(features: FeatureMatrix) -> dict:
    """Slide id -> per-slide FeatureMatrix, slides sorted, row order kept."""
    groups: dict = {}
    for rid in features.region_ids:
        groups.setdefault(slide_of_region(rid), []).append(rid)
    return {sid: features.subset(groups[sid]) for sid in sorted(groups)}


def run_cluster(paths: RunPaths, config: Config) -> dict:
    """Cluster each slide independently; fixed k or a silhouette-guided sweep."""
    reduced = load_reduced(paths)
    paths.cluster_dir.mkdir(parents=True, exist_ok=True)
    results = {}
    for sid, slide_features in split_by_slide(reduced).items():
        seed = slide_seed(config.seed, sid)
        n = slide_features.n
        if config.k is not None:
            model = clustering.kmeans_best(
                slide_features, config.k, seed=seed,
                restarts=config.restarts, max_iter=config.max_iter,
            )
            sweep = None
        else:
            k_max = min(config.k_max, n - 1)
            if k_max < config.k_min:
                raise InvalidK(
                    f"slide {sid}: {n} regions cannot support k >= {config.k_min}"
                )
            if k_max < config.k_max:
                log.info("slide %s: capping k_max at %d (N=%d)", sid, k_max, n)
            best_k, sweep = clustering.select_k(
                slide_features, config.k_min, k_max, seed=seed,
                restarts=config.restarts, max_iter=config.max_iter,
                sample_cap=config.silhouette_sample,
            )
            model = clustering.kmeans_best(
                slide_features, best_k, seed=seed,
                restarts=config.restarts, max_iter=config.max_iter,
            )
        sil_seed = clustering.derive_seed(seed, model.k, config.restarts)
        report = clustering.silhouette_scores(
            slide_features, model, sample=config.silhouette_sample, seed=sil_seed
        )
        reps = clustering.representatives(slide_features, model)
        clustering.save_model(paths.model(sid), model)
        clustering.save_silhouette(paths.silhouette(sid), report)
        clustering.save_representatives(paths.representatives(sid), reps)
        if sweep is not None:
            clustering.write_sweep(paths.sweep(sid), sweep)
        results[sid] = (model, report, reps)
        log.info("slide %s: k=%d mean silhouette %.4f", sid, model.k, report.mean_score)
    return results


def run_slides(paths: RunPaths) -> list:
    """Slide ids with a persisted cluster model, sorted."""
    if not paths.cluster_dir.exists():
        return []
    return sorted(p.name[: -len(".model.json")] for p in paths.cluster_dir.glob("*.model.json"))


def load_cluster_stage(paths: RunPaths, slide_id: str):
    model_path = paths.model(slide_id)
    if not model_path.exists():
        raise MissingStage(f"cluster stage has not run for slide {slide_id!r}")
    model = clustering.load_model(model_path)
    report = clustering.load_silhouette(paths.silhouette(slide_id))
    reps = clustering.load_representatives(paths.representatives(slide_id))
    return model, report, reps


# --- stage: label -----------------------------------------------------------------

def load_labels(paths: RunPaths, slide_id: str, k: int) -> classify.LabelMap:
    path = paths.labels(slide_id)
    if path.exists():
        return classify.load_label_map(path)
    return classify.LabelMap.unlabeled_for(k)


def run_label(paths: RunPaths, slide_id: str, entries: dict) -> classify.LabelMap:
    """Merge label entries (cluster -> label) into the slide's persisted map."""
    model, _, _ = load_cluster_stage(paths, slide_id)
    labels = load_labels(paths, slide_id, model.k)
    for cluster, label in sorted(entries.items()):
        labels = labels.with_label(cluster, label)
    paths.labels_dir.mkdir(parents=True, exist_ok=True)
    classify.save_label_map(paths.labels(slide_id), labels)
    return labels


# --- stage: evaluate ----------------------------------------------------------------

def evaluate_slide(paths: RunPaths, slide_id: str, rois, labels=None) -> dict:
    """Metrics for one slide under its current (or a given) label map."""
    model, _, _ = load_cluster_stage(paths, slide_id)
    if labels is None:
        labels = load_labels(paths, slide_id, model.k)
    regions = [r for r in load_regions(paths) if r.slide_id == slide_id]
    predicted = classify.apply_labels(model, labels)
    truth = classify.ground_truth(regions, rois)
    counts, unlabeled = classify.confusion(predicted, truth)
    return {
        "slide": slide_id,
        "k": model.k,
        "cluster_set": list(labels.positives()),
        "accuracy": classify.accuracy(counts),
        "f1": classify.f1(counts),
        "f1_degenerate": classify.f1_degenerate(counts),
        "tp": counts.tp,
        "tn": counts.tn,
        "fp": counts.fp,
        "fn": counts.fn,
        "unlabeled": unlabeled,
    }


def run_evaluate(paths: RunPaths, roi_path) -> list:
    """Score every clustered slide that has an ROI record; persist the table."""
    rois_by_slide = classify.parse_roi_file(roi_path)
    records = []
    for sid in run_slides(paths):
        if sid not in rois_by_slide:
            log.warning("slide %s has no ROI record, skipping", sid)
            continue
        records.append(evaluate_slide(paths, sid, rois_by_slide[sid]))
    if not records:
        raise NoGroundTruth("no clustered slide matches any ROI record")

    paths.metrics_csv.parent.mkdir(parents=True, exist_ok=True)
    lines = ["slide,k,cluster_set,accuracy,f1"]
    for rec in records:
        cluster_set = "+".join(str(c) for c in rec["cluster_set"])
        lines.append(
            f"{rec['slide']},{rec['k']},{cluster_set},"
            f"{repr(rec['accuracy'])},{repr(rec['f1'])}"
        )
    paths.metrics_csv.write_text("\n".join(lines) + "\n")
    paths.metrics_json.write_text(
        json.dumps({rec["slide"]: rec for rec in records}, indent=2, sort_keys=True) + "\n"
    )
    return records


# --- stage: heatmap -----------------------------------------------------------------

def heatmap_slide(paths: RunPaths, slide_id: str, grid: int, labels=None) -> classify.HeatmapGrid:
    model, _, _ = load_cluster_stage(paths, slide_id)
    if labels is None:
        labels = load_labels(paths, slide_id, model.k)
    regions = [r for r in load_regions(paths) if r.slide_id == slide_id]
    extent = load_slide_extents(paths)[slide_id]
    classes = classify.apply_labels(model, labels)
    return classify.build_heatmap(regions, classes, extent, grid=grid, slide_id=slide_id)


def run_heatmap(paths: RunPaths, config: Config) -> dict:
    paths.heatmap_dir.mkdir(parents=True, exist_ok=True)
    grids = {}
    for sid in run_slides(paths):
        grid = heatmap_slide(paths, sid, config.grid)
        classify.write_heatmap_csv(paths.heatmap_csv(sid), grid)
        classify.write_heatmap_png(paths.heatmap_png(sid), grid)
        grids[sid] = grid
    return grids


# --- the whole path -------------------------------------------------------------------

def run_all(paths: RunPaths, manifests, config: Config, roi_path=None, label_entries=None):
    """preprocess -> features -> pca -> cluster, then the optional tail stages."""
    run_preprocess(paths, manifests, config)
    run_features(paths, config)
    run_pca(paths, config)
    run_cluster(paths, config)
    if label_entries:
        for sid in run_slides(paths):
            run_label(paths, sid, label_entries)
    if roi_path is not None:
        run_evaluate(paths, roi_path)
        run_heatmap(paths, config)
