"""HTTP facade over a run directory for the labeling frontend.

The service loads the run once at startup. Each slide gets a session
holding its LabelMap and a monotonically increasing revision; label posts
persist to the run directory before they are acknowledged, so a restarted
service picks the session back up (with the revision counter reset).
Reads are snapshot-consistent: heatmaps and metrics are computed from the
label map as of one revision and the response says which.
"""

from __future__ import annotations

import io
import threading
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import classify, pipeline
from .classify import LABELS, LabelMap
from .errors import (
    InvalidLabel,
    MissingStage,
    NoGroundTruth,
    NoRun,
    PipelineError,
    UnknownRegion,
    UnknownSlide,
)

_STATUS_BY_CATEGORY = {
    "UnknownSlide": 404,
    "UnknownRegion": 404,
    "NoGroundTruth": 404,
    "UnknownCluster": 400,
    "InvalidLabel": 400,
    "EmptyEvaluation": 409,
    "MissingStage": 409,
    "NoRun": 409,
}


@dataclass
class SlideSession:
    model: object
    report: object
    reps: object
    regions: list
    extent: tuple
    labels: LabelMap
    revision: int = 0


class RunService:
    """All run state behind the HTTP handlers."""

    def __init__(self, run_dir, roi_path=None):
        self.paths = pipeline.RunPaths(run_dir)
        self.rois = classify.parse_roi_file(roi_path) if roi_path else {}
        self.sessions = {}
        self._write_lock = threading.Lock()
        self._patch_rows = {}
        self._patches = None
        slide_ids = pipeline.run_slides(self.paths)
        if not slide_ids:
            # an empty service still starts; requests get a NoRun response
            return

        all_regions = pipeline.load_regions(self.paths)
        extents = pipeline.load_slide_extents(self.paths)
        self._patch_rows = {r.region_id: i for i, r in enumerate(all_regions)}
        self._patches = np.load(self.paths.patches, mmap_mode="r")
        for sid in slide_ids:
            model, report, reps = pipeline.load_cluster_stage(self.paths, sid)
            self.sessions[sid] = SlideSession(
                model=model,
                report=report,
                reps=reps,
                regions=[r for r in all_regions if r.slide_id == sid],
                extent=extents[sid],
                labels=pipeline.load_labels(self.paths, sid, model.k),
            )

    def session(self, slide_id: str) -> SlideSession:
        if not self.sessions:
            raise NoRun(f"no clustered slides under {self.paths.root}")
        try:
            return self.sessions[slide_id]
        except KeyError:
            raise UnknownSlide(f"no such slide: {slide_id!r}") from None

    def snapshot(self, slide_id: str):
        """(labels, revision) pair that is internally consistent."""
        sess = self.session(slide_id)
        with self._write_lock:
            return sess.labels, sess.revision

    def post_label(self, slide_id: str, cluster: int, label: str) -> int:
        sess = self.session(slide_id)
        if label not in LABELS:
            raise InvalidLabel(f"{label!r} not in {LABELS}")
        with self._write_lock:
            updated = sess.labels.with_label(cluster, label)
            self.paths.labels_dir.mkdir(parents=True, exist_ok=True)
            classify.save_label_map(self.paths.labels(slide_id), updated)
            sess.labels = updated
            sess.revision += 1
            return sess.revision

    def patch_png(self, region_id: str) -> bytes:
        from PIL import Image

        if self._patches is None:
            raise NoRun(f"no clustered slides under {self.paths.root}")
        try:
            row = self._patch_rows[region_id]
        except KeyError:
            raise UnknownRegion(f"no such region: {region_id!r}") from None
        buf = io.BytesIO()
        Image.fromarray(np.asarray(self._patches[row])).save(buf, format="PNG")
        return buf.getvalue()


def create_app(run_dir, roi_path=None, ui_dir=None) -> FastAPI:
    service = RunService(run_dir, roi_path=roi_path)
    app = FastAPI(title="wsiclust", docs_url=None, redoc_url=None)
    app.state.service = service

    @app.exception_handler(PipelineError)
    async def _pipeline_error(request: Request, exc: PipelineError):
        status = _STATUS_BY_CATEGORY.get(exc.category, 400)
        return JSONResponse(
            status_code=status, content={"error": exc.category, "message": str(exc)}
        )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "slides": len(service.sessions)}

    @app.get("/api/slides")
    def slides():
        if not service.sessions:
            raise NoRun(f"no clustered slides under {service.paths.root}")
        out = []
        for sid in sorted(service.sessions):
            sess = service.sessions[sid]
            out.append(
                {
                    "slide_id": sid,
                    "regions": len(sess.regions),
                    "k": sess.model.k,
                    "mean_silhouette": sess.report.mean_score,
                }
            )
        return {"slides": out}

    @app.get("/api/slides/{slide_id}/representatives")
    def representatives(slide_id: str):
        sess = service.session(slide_id)
        labels, revision = service.snapshot(slide_id)
        cards = []
        for cluster in range(sess.model.k):
            rid = sess.reps.per_cluster.get(cluster)
            if rid is None:
                raise MissingStage(f"cluster {cluster} has no representative")
            cards.append(
                {
                    "cluster": cluster,
                    "region_id": rid,
                    "patch_url": f"/api/patches/{rid}",
                    "label": labels.per_cluster[cluster],
                }
            )
        return {"slide_id": slide_id, "revision": revision, "representatives": cards}

    @app.post("/api/slides/{slide_id}/labels")
    async def post_label(slide_id: str, request: Request):
        body = await request.json()
        try:
            cluster = int(body["cluster_index"])
            label = str(body["label"])
        except (KeyError, TypeError, ValueError):
            raise InvalidLabel("body must carry cluster_index and label") from None
        revision = service.post_label(slide_id, cluster, label)
        return {"slide_id": slide_id, "revision": revision}

    @app.get("/api/slides/{slide_id}/heatmap")
    def heatmap(slide_id: str, grid: int = classify.DEFAULT_GRID):
        sess = service.session(slide_id)
        labels, revision = service.snapshot(slide_id)
        classes = classify.apply_labels(sess.model, labels)
        hm = classify.build_heatmap(
            sess.regions, classes, sess.extent, grid=grid, slide_id=slide_id
        )
        return {
            "slide_id": slide_id,
            "revision": revision,
            "rows": hm.rows,
            "cols": hm.cols,
            "values": [[float(v) for v in row] for row in hm.values],
        }

    @app.get("/api/slides/{slide_id}/metrics")
    def metrics(slide_id: str):
        sess = service.session(slide_id)
        if slide_id not in service.rois:
            raise NoGroundTruth(f"no ROI annotation for slide {slide_id!r}")
        labels, revision = service.snapshot(slide_id)
        predicted = classify.apply_labels(sess.model, labels)
        truth = classify.ground_truth(sess.regions, service.rois[slide_id])
        counts, unlabeled = classify.confusion(predicted, truth)
        if counts.total == 0:
            return {
                "slide_id": slide_id,
                "revision": revision,
                "evaluated": False,
                "reason": "no labeled regions",
                "unlabeled": unlabeled,
            }
        return {
            "slide_id": slide_id,
            "revision": revision,
            "evaluated": True,
            "k": sess.model.k,
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

    @app.get("/api/patches/{region_id}")
    def patch(region_id: str):
        return Response(content=service.patch_png(region_id), media_type="image/png")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
