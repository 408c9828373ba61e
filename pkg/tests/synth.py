"""Synthetic data builders shared across the tests."""

import json

import numpy as np
from PIL import Image

from wsiclust.features import FeatureMatrix

BACKGROUND = (245, 245, 245)
TEXTURES = (
    (178, 118, 158),
    (112, 168, 132),
    (92, 102, 196),
    (198, 186, 96),
)


def blob_features(k, per=30, d=3, sep=10.0, sigma=0.1, seed=0):
    """Well-separated Gaussian blobs along the first axis, one per cluster."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(k):
        center = np.zeros(d)
        center[0] = sep * i
        rows.append(rng.normal(center, sigma, size=(per, d)))
    data = np.concatenate(rows)
    ids = tuple(f"s:{i}:0" for i in range(k * per))
    return FeatureMatrix(ids, data)


def random_features(n, d, seed=0, prefix="s"):
    rng = np.random.default_rng(seed)
    ids = tuple(f"{prefix}:{i}:0" for i in range(n))
    return FeatureMatrix(ids, rng.normal(size=(n, d)))


def band_tile(bands, tile_size=512, background_rows=None, noise=6.0, seed=0):
    """A tile of horizontal color bands below an optional background strip.

    ``bands`` is a list of (r, g, b) base colors; each band gets an equal
    share of the non-background rows. Returns uint8 pixels.
    """
    rng = np.random.default_rng(seed)
    if background_rows is None:
        background_rows = tile_size // 2
    pixels = np.empty((tile_size, tile_size, 3), dtype=np.float64)
    pixels[:background_rows] = rng.normal(
        BACKGROUND, 3.0, (background_rows, tile_size, 3)
    )
    band_rows = (tile_size - background_rows) // len(bands)
    for i, color in enumerate(bands):
        top = background_rows + i * band_rows
        bottom = tile_size if i == len(bands) - 1 else top + band_rows
        pixels[top:bottom] = rng.normal(color, noise, (bottom - top, tile_size, 3))
    return pixels.clip(0, 255).astype(np.uint8)


def band_workspace(root, bands=2, tile_size=256, patch_size=64, seed=0, slide_id="synthband"):
    """Write a one-tile slide of color bands plus its manifest and ROI file.

    The top half of the tile is background; the bottom half splits into
    ``bands`` equal horizontal bands drawn from TEXTURES. The ROI polygon
    covers exactly the first band, so its patches (and only those) are
    ground-truth positive. Returns a dict of paths and the expected region
    bookkeeping.
    """
    root.mkdir(parents=True, exist_ok=True)
    tiles = root / "tiles"
    tiles.mkdir(exist_ok=True)

    colors = TEXTURES[:bands]
    pixels = band_tile(colors, tile_size=tile_size, seed=seed)
    Image.fromarray(pixels).save(tiles / f"{slide_id}_0_0.png")

    manifest = {
        "slides": [
            {
                "slide_id": slide_id,
                "extent": [tile_size, tile_size],
                "magnification": "synthetic",
                "tiles": [{"tile_x": 0, "tile_y": 0, "path": f"tiles/{slide_id}_0_0.png"}],
            }
        ]
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    band_top = tile_size // 2
    band_height = (tile_size // 2) // len(colors)
    roi_path = root / "roi.txt"
    roi_path.write_text(
        f"{slide_id}; tumor; 0,{band_top} {tile_size},{band_top} "
        f"{tile_size},{band_top + band_height} 0,{band_top + band_height}\n"
    )

    per_row = tile_size // patch_size
    foreground_rows = (tile_size // 2) // patch_size
    return {
        "slide_id": slide_id,
        "manifest": manifest_path,
        "roi": roi_path,
        "extent": (tile_size, tile_size),
        "band_top": band_top,
        "band_height": band_height,
        "expected_regions": per_row * foreground_rows,
        "expected_positive": per_row * (band_height // patch_size),
    }


def four_texture_workspace(root, tile_size=2048, patch_size=128, seed=0):
    """The four-band variant used by the end-to-end checks."""
    return band_workspace(
        root, bands=4, tile_size=tile_size, patch_size=patch_size, seed=seed,
        slide_id="synth4",
    )
