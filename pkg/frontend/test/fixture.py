"""Builds a small clustered run and serves its HTTP API for the webui tests.

Usage: python3 fixture.py WORKDIR PORT [UI_DIR]

Writes a one-tile synthetic slide (background strip over two color bands),
runs the batch pipeline up to clustering with a fixed k of 2, then blocks
serving the run on 127.0.0.1:PORT with the ROI file attached, so the live
metrics endpoint has ground truth. No labels are applied: labeling is the
browser's job.
"""

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from wsiclust import cli

SLIDE_ID = "webband"
TILE = 256
PATCH = 64
BANDS = ((178, 118, 158), (112, 168, 132))
BACKGROUND = (245, 245, 245)


def build_workspace(root: Path) -> tuple[Path, Path]:
    tiles = root / "tiles"
    tiles.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(0)
    pixels = np.empty((TILE, TILE, 3), dtype=np.float64)
    half = TILE // 2
    pixels[:half] = rng.normal(BACKGROUND, 3.0, (half, TILE, 3))
    band_rows = half // len(BANDS)
    for i, color in enumerate(BANDS):
        top = half + i * band_rows
        bottom = TILE if i == len(BANDS) - 1 else top + band_rows
        pixels[top:bottom] = rng.normal(color, 6.0, (bottom - top, TILE, 3))
    Image.fromarray(pixels.clip(0, 255).astype(np.uint8)).save(
        tiles / f"{SLIDE_ID}_0_0.png"
    )

    manifest = root / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "slides": [
                    {
                        "slide_id": SLIDE_ID,
                        "extent": [TILE, TILE],
                        "magnification": "synthetic",
                        "tiles": [
                            {
                                "tile_x": 0,
                                "tile_y": 0,
                                "path": f"tiles/{SLIDE_ID}_0_0.png",
                            }
                        ],
                    }
                ]
            },
            indent=2,
        )
        + "\n"
    )

    # the ROI covers exactly the first band, so one cluster is all-positive
    roi = root / "roi.txt"
    roi.write_text(
        f"{SLIDE_ID}; tumor; 0,{half} {TILE},{half} "
        f"{TILE},{half + band_rows} 0,{half + band_rows}\n"
    )
    return manifest, roi


def main(argv) -> int:
    workdir = Path(argv[1])
    port = argv[2]
    ui_dir = argv[3] if len(argv) > 3 else None

    manifest, roi = build_workspace(workdir / "ws")
    run_dir = workdir / "run"
    rc = cli.main(
        [
            "all",
            "--run-dir", str(run_dir),
            "--manifest", str(manifest),
            "--seed", "11",
            "--tile-size", str(TILE),
            "--patch-size", str(PATCH),
            "--pca-dim", "8",
            "--k", "2",
            "--restarts", "3",
            "--grid", "4",
        ]
    )
    if rc != 0:
        return rc

    serve_args = [
        "serve",
        "--run-dir", str(run_dir),
        "--roi", str(roi),
        "--bind", "127.0.0.1",
        "--port", port,
    ]
    if ui_dir:
        serve_args += ["--ui", ui_dir]
    return cli.main(serve_args)


if __name__ == "__main__":
    sys.exit(main(sys.argv))
