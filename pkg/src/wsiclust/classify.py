"""Label propagation, ROI ground truth, confusion metrics, and heatmaps.

A LabelMap assigns positive/negative/unlabeled to each cluster; regions
inherit their cluster's label. Ground truth comes from annotated ROI
polygons: a region is positive when its center falls inside any polygon
(even-odd rule, boundary counts as inside). Metrics are the usual
accuracy and F1 over the four-way confusion tally, with unlabeled regions
excluded from the counts and reported alongside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    EmptyEvaluation,
    InvalidLabel,
    KeyMismatch,
    OutOfExtent,
    SlideMismatch,
    UnknownCluster,
)
from .clustering import ClusterModel

POSITIVE = "positive"
NEGATIVE = "negative"
UNLABELED = "unlabeled"
LABELS = (POSITIVE, NEGATIVE, UNLABELED)

DEFAULT_GRID = 40


@dataclass(frozen=True)
class LabelMap:
    """Cluster index -> positive / negative / unlabeled."""

    per_cluster: dict

    def __post_init__(self):
        for c, lab in self.per_cluster.items():
            if not isinstance(c, int) or c < 0:
                raise UnknownCluster(f"bad cluster index {c!r}")
            if lab not in LABELS:
                raise InvalidLabel(f"cluster {c}: {lab!r} not in {LABELS}")

    @classmethod
    def unlabeled_for(cls, k: int) -> "LabelMap":
        return cls({c: UNLABELED for c in range(k)})

    def with_label(self, cluster: int, label: str) -> "LabelMap":
        if cluster not in self.per_cluster:
            raise UnknownCluster(f"cluster {cluster} not in map of size {len(self.per_cluster)}")
        updated = dict(self.per_cluster)
        updated[cluster] = label
        return LabelMap(updated)

    def positives(self) -> tuple:
        return tuple(sorted(c for c, lab in self.per_cluster.items() if lab == POSITIVE))


@dataclass(frozen=True)
class RoiAnnotation:
    slide_id: str
    polygons: tuple  # each a tuple of (x, y) vertex pairs, implicitly closed
    label: str = POSITIVE

    def __post_init__(self):
        for poly in self.polygons:
            if len(poly) < 3:
                raise ValueError(f"polygon with {len(poly)} vertices, need >= 3")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class HeatmapGrid:
    slide_id: str
    rows: int
    cols: int
    values: np.ndarray  # rows x cols floats in [0, 1]; row 0 is the top

    def __post_init__(self):
        v = self.values
        if v.shape != (self.rows, self.cols):
            raise ValueError(f"values shape {v.shape} != ({self.rows}, {self.cols})")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("heatmap values must lie in [0, 1]")


def apply_labels(model: ClusterModel, labels: LabelMap) -> dict:
    """Every region inherits its cluster's label; missing clusters stay unlabeled."""
    for c in labels.per_cluster:
        if c >= model.k:
            raise UnknownCluster(f"label map references cluster {c}, model has k={model.k}")
    return {
        rid: labels.per_cluster.get(c, UNLABELED) for rid, c in model.assignments.items()
    }


def _on_segment(px, py, x0, y0, x1, y1) -> bool:
    cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    if cross != 0.0:
        return False
    return min(x0, x1) <= px <= max(x0, x1) and min(y0, y1) <= py <= max(y0, y1)


def point_in_polygon(point, polygon) -> bool:
    """Even-odd ray cast; points on an edge or vertex count as inside."""
    px, py = float(point[0]), float(point[1])
    inside = False
    n = len(polygon)
    for i in range(n):
        x0, y0 = polygon[i]
        x1, y1 = polygon[(i + 1) % n]
        if _on_segment(px, py, x0, y0, x1, y1):
            return True
        if (y0 > py) != (y1 > py):
            xi = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if xi == px:
                return True
            if xi > px:
                inside = not inside
    return inside


def ground_truth(regions, rois: RoiAnnotation) -> dict:
    """region_id -> positive/negative by the center-in-any-polygon rule."""
    out = {}
    for region in regions:
        if region.slide_id != rois.slide_id:
            raise SlideMismatch(
                f"region slide {region.slide_id!r} vs ROI slide {rois.slide_id!r}"
            )
        center = region.center()
        hit = any(point_in_polygon(center, poly) for poly in rois.polygons)
        out[region.region_id] = POSITIVE if hit else NEGATIVE
    return out


def confusion(predicted: dict, truth: dict):
    """Four-way tally plus the count of unlabeled predictions left out of it."""
    if set(predicted) != set(truth):
        only_p = next(iter(set(predicted) - set(truth)), None)
        only_t = next(iter(set(truth) - set(predicted)), None)
        raise KeyMismatch(f"region sets differ (e.g. {only_p!r} vs {only_t!r})")
    tp = tn = fp = fn = unlabeled = 0
    for rid, pred in predicted.items():
        if pred == UNLABELED:
            unlabeled += 1
            continue
        actual = truth[rid]
        if pred == POSITIVE:
            if actual == POSITIVE:
                tp += 1
            else:
                fp += 1
        elif actual == NEGATIVE:
            tn += 1
        else:
            fn += 1
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn), unlabeled


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise EmptyEvaluation("no labeled regions to evaluate")
    return (c.tp + c.tn) / c.total


def f1(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 0.0
    return 2 * c.tp / denom


def f1_degenerate(c: ConfusionCounts) -> bool:
    """True when F1's denominator vanishes (no positives on either side)."""
    return 2 * c.tp + c.fp + c.fn == 0


def build_heatmap(
    regions,
    classes: dict,
    slide_extent,
    grid=(DEFAULT_GRID, DEFAULT_GRID),
    slide_id: str | None = None,
) -> HeatmapGrid:
    """Positive fraction of labeled regions per grid cell.

    ``slide_extent`` is (width, height) in pixels with the origin at the top
    left; the extent is split into equal rows x cols rectangles and each
    region is binned by its center (a center on the far edge falls in the
    last row/column). Unlabeled regions are excluded from both tallies and
    cells with no labeled regions read 0.
    """
    rows, cols = (grid, grid) if isinstance(grid, int) else grid
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be >= 1")
    width, height = slide_extent
    if slide_id is None:
        slide_id = regions[0].slide_id if regions else ""

    pos = np.zeros((rows, cols), dtype=np.int64)
    tot = np.zeros((rows, cols), dtype=np.int64)
    for region in regions:
        cx, cy = region.center()
        if not (0 <= cx <= width and 0 <= cy <= height):
            raise OutOfExtent(
                f"{region.region_id}: center ({cx}, {cy}) outside ({width}, {height})"
            )
        label = classes[region.region_id]
        if label == UNLABELED:
            continue
        col = min(int(cx * cols / width), cols - 1)
        row = min(int(cy * rows / height), rows - 1)
        tot[row, col] += 1
        if label == POSITIVE:
            pos[row, col] += 1

    values = np.zeros((rows, cols), dtype=np.float64)
    np.divide(pos, tot, out=values, where=tot > 0)
    return HeatmapGrid(slide_id=slide_id, rows=rows, cols=cols, values=values)


# --- file formats ------------------------------------------------------------

def parse_roi_file(path) -> dict:
    """ROI records, one polygon per line: ``slide_id; label; x0,y0 x1,y1 ...``.

    Lines starting with ``#`` and blank lines are skipped. Polygons for the
    same slide merge into one annotation; the label must be consistent.
    """
    by_slide: dict = {}
    labels: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(";")]
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'slide; label; vertices'")
        slide_id, label, vertex_text = parts
        vertices = []
        for pair in vertex_text.split():
            x_text, y_text = pair.split(",")
            vertices.append((float(x_text), float(y_text)))
        if len(vertices) < 3:
            raise ValueError(f"{path}:{lineno}: polygon needs >= 3 vertices")
        if slide_id in labels and labels[slide_id] != label:
            raise ValueError(f"{path}:{lineno}: conflicting labels for {slide_id!r}")
        labels[slide_id] = label
        by_slide.setdefault(slide_id, []).append(tuple(vertices))
    return {
        sid: RoiAnnotation(slide_id=sid, polygons=tuple(polys), label=labels[sid])
        for sid, polys in by_slide.items()
    }


def save_label_map(path, labels: LabelMap) -> None:
    doc = {str(c): lab for c, lab in labels.per_cluster.items()}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_label_map(path) -> LabelMap:
    doc = json.loads(Path(path).read_text())
    return LabelMap({int(c): lab for c, lab in doc.items()})


def parse_label_file(text: str) -> dict:
    """CLI label lines ``cluster_index,{positive|negative}`` -> partial map."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            index_text, label = (p.strip() for p in line.split(","))
        except ValueError:
            raise InvalidLabel(f"line {lineno}: expected 'cluster_index,label'") from None
        if label not in (POSITIVE, NEGATIVE):
            raise InvalidLabel(f"line {lineno}: {label!r} not positive/negative")
        out[int(index_text)] = label
    return out


def write_heatmap_csv(path, grid: HeatmapGrid) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in grid.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_heatmap_csv(path, slide_id: str = "") -> HeatmapGrid:
    rows = [
        [float(v) for v in line.split(",")]
        for line in Path(path).read_text().splitlines()
        if line
    ]
    values = np.array(rows, dtype=np.float64)
    return HeatmapGrid(
        slide_id=slide_id, rows=values.shape[0], cols=values.shape[1], values=values
    )


def write_heatmap_png(path, grid: HeatmapGrid) -> None:
    """8-bit grayscale, value x 255, row 0 rendered at the top."""
    scaled = np.rint(grid.values * 255.0).astype(np.uint8)
    Image.fromarray(scaled, mode="L").save(path, format="PNG")
