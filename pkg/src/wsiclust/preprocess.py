"""Tissue preprocessing: background separation, color normalization, tessellation.

A slide arrives as square 8-bit RGB tiles. A two-component Gaussian mixture
fit to grayscale intensity separates tissue (darker) from glass background
(lighter); masked tissue pixels are color-normalized by matching per-channel
mean/std to a target in the Ruderman log-opponent color space; the tile is
then cut into a non-overlapping grid of fixed-size square regions, keeping
those with enough foreground.

All functions are pure and deterministic; nothing here touches the filesystem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DegenerateStats, InsufficientForeground

GRAY_WEIGHTS = (0.299, 0.587, 0.114)

# Smallest linear-RGB value admitted before the log transform (input is
# scaled to [0, 1]); keeps pure black representable and invertible.
_RGB_FLOOR = 1e-6

# Variance floor for the mixture fit, in squared 8-bit intensity units.
_VAR_FLOOR = 1e-6

# Forward matrix RGB -> LMS cone response, followed by a base-10 log and the
# opponent decorrelation below. The inverse path uses exact matrix inverses
# so that a round trip is lossless up to float error. Constants are
# documented in docs/formats.md.
_RGB2LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
_LMS2RGB = np.linalg.inv(_RGB2LMS)

_LOG2OPP = np.diag([1.0 / math.sqrt(3.0), 1.0 / math.sqrt(6.0), 1.0 / math.sqrt(2.0)]) @ np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, 1.0, -2.0],
        [1.0, -1.0, 0.0],
    ]
)
_OPP2LOG = np.linalg.inv(_LOG2OPP)


@dataclass(frozen=True)
class Tile:
    """One square crop of a slide, in slide pixel coordinates."""

    slide_id: str
    tile_x: int
    tile_y: int
    pixels: np.ndarray  # H x W x 3, uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"tile pixels must be HxWx3, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("tile must have positive dimensions")


@dataclass(frozen=True)
class ForegroundModel:
    """Two-component grayscale mixture; component 0 is the darker one."""

    mean_0: float
    mean_1: float
    var_0: float
    var_1: float
    weight_0: float
    weight_1: float
    iterations: int = 0
    log_likelihoods: tuple = ()

    def __post_init__(self):
        if not self.mean_0 < self.mean_1:
            raise ValueError("components must be ordered darker-first")
        if self.var_0 <= 0 or self.var_1 <= 0:
            raise ValueError("variances must be positive")
        if abs(self.weight_0 + self.weight_1 - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean/std in the log-opponent color space."""

    mean_l: float
    mean_a: float
    mean_b: float
    std_l: float
    std_a: float
    std_b: float

    def __post_init__(self):
        if min(self.std_l, self.std_a, self.std_b) < 0:
            raise ValueError("standard deviations must be non-negative")

    def means(self) -> np.ndarray:
        return np.array([self.mean_l, self.mean_a, self.mean_b])

    def stds(self) -> np.ndarray:
        return np.array([self.std_l, self.std_a, self.std_b])


@dataclass(frozen=True)
class Region:
    """One square tessellation patch; offsets are relative to its tile."""

    region_id: str
    slide_id: str
    tile_x: int
    tile_y: int
    patch_x: int
    patch_y: int
    size: int
    pixels: np.ndarray | None = None

    @property
    def slide_x(self) -> int:
        return self.tile_x + self.patch_x

    @property
    def slide_y(self) -> int:
        return self.tile_y + self.patch_y

    def center(self) -> tuple:
        """Geometric center of the patch in slide pixel coordinates."""
        return (self.slide_x + self.size / 2.0, self.slide_y + self.size / 2.0)


def region_id_for(slide_id: str, slide_x: int, slide_y: int) -> str:
    """Deterministic region identifier from absolute slide coordinates."""
    return f"{slide_id}:{slide_x}:{slide_y}"


def rgb_to_gray(pixels: np.ndarray) -> np.ndarray:
    """Luma-weighted grayscale in [0, 255] floats."""
    px = np.asarray(pixels, dtype=np.float64)
    r, g, b = GRAY_WEIGHTS
    return px[..., 0] * r + px[..., 1] * g + px[..., 2] * b


def rgb_to_opponent(pixels: np.ndarray) -> np.ndarray:
    """8-bit RGB to the log-opponent space (float, last axis = l/a/b).

    This is Ruderman's decorrelated l-alpha-beta space, not CIE L*a*b*.
    """
    rgb = np.asarray(pixels, dtype=np.float64) / 255.0
    rgb = np.clip(rgb, _RGB_FLOOR, 1.0)
    lms = rgb @ _RGB2LMS.T
    log_lms = np.log10(lms)
    return log_lms @ _LOG2OPP.T


def opponent_to_rgb(opp: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_opponent`, clamped and quantized to uint8."""
    log_lms = np.asarray(opp, dtype=np.float64) @ _OPP2LOG.T
    lms = np.power(10.0, log_lms)
    rgb = lms @ _LMS2RGB.T
    out = np.clip(np.rint(rgb * 255.0), 0.0, 255.0)
    return out.astype(np.uint8)


def _component_log_density(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    return -0.5 * (math.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)


def fit_background_model(samples, max_iter: int = 200, tol: float = 1e-6) -> ForegroundModel:
    """Fit a two-component Gaussian mixture to grayscale samples by EM.

    Initialization is deterministic: component means start at the 25th and
    75th percentiles, both variances at the overall sample variance, weights
    at one half each. Iterates until the relative log-likelihood change
    drops below ``tol`` or ``max_iter`` is reached. The log-likelihood is
    checked to be non-decreasing at every step.

    Raises DegenerateInput when the samples hold fewer than two distinct
    values, since no two-component fit exists.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2 or np.all(x == x[0]):
        raise DegenerateInput("need at least two distinct sample values")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    lo, hi = np.percentile(x, [25.0, 75.0])
    if lo == hi:  # heavy ties; fall back to the extremes
        lo, hi = float(x.min()), float(x.max())
    means = np.array([lo, hi], dtype=np.float64)
    variances = np.full(2, max(float(np.var(x)), _VAR_FLOOR))
    weights = np.array([0.5, 0.5])

    history = []
    prev_ll = -np.inf
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        # E-step in the log domain
        joint = np.stack(
            [
                np.log(weights[k]) + _component_log_density(x, means[k], variances[k])
                for k in range(2)
            ],
            axis=1,
        )
        peak = joint.max(axis=1, keepdims=True)
        log_norm = peak[:, 0] + np.log(np.exp(joint - peak).sum(axis=1))
        ll = float(log_norm.sum())
        if ll < prev_ll - 1e-9 * max(1.0, abs(prev_ll)):
            raise AssertionError("EM log-likelihood decreased")
        history.append(ll)

        resp = np.exp(joint - log_norm[:, None])

        # M-step
        totals = resp.sum(axis=0)
        totals = np.maximum(totals, 1e-300)
        new_means = (resp * x[:, None]).sum(axis=0) / totals
        new_vars = (resp * (x[:, None] - new_means[None, :]) ** 2).sum(axis=0) / totals
        new_vars = np.maximum(new_vars, _VAR_FLOOR)
        means, variances, weights = new_means, new_vars, totals / x.size

        if prev_ll != -np.inf and abs(ll - prev_ll) <= tol * abs(prev_ll):
            break
        prev_ll = ll

    order = np.argsort(means)
    d, l = int(order[0]), int(order[1])
    return ForegroundModel(
        mean_0=float(means[d]),
        mean_1=float(means[l]),
        var_0=float(variances[d]),
        var_1=float(variances[l]),
        weight_0=float(weights[d]),
        weight_1=float(weights[l]),
        iterations=iterations,
        log_likelihoods=tuple(history),
    )


def segment_foreground(tile: Tile, model: ForegroundModel) -> np.ndarray:
    """Boolean mask, true where the darker component's posterior exceeds 0.5.

    Tissue stains darker than the glass background, so the darker mixture
    component is taken as foreground.
    """
    gray = rgb_to_gray(tile.pixels)
    dark = np.log(model.weight_0) + _component_log_density(gray, model.mean_0, model.var_0)
    light = np.log(model.weight_1) + _component_log_density(gray, model.mean_1, model.var_1)
    return dark > light


def compute_color_stats(tile: Tile, mask: np.ndarray) -> ChannelStats:
    """Mean and standard deviation per log-opponent channel over masked pixels."""
    mask = np.asarray(mask, dtype=bool)
    if int(mask.sum()) < 2:
        raise InsufficientForeground("need at least two masked pixels")
    opp = rgb_to_opponent(tile.pixels)[mask]
    mean = opp.mean(axis=0)
    std = opp.std(axis=0)
    # A constant channel must read exactly zero spread, not rounding dust,
    # so the degenerate-source path in reinhard_normalize can key off it.
    constant = opp.min(axis=0) == opp.max(axis=0)
    std[constant] = 0.0
    mean[constant] = opp[0, constant]
    return ChannelStats(
        mean_l=float(mean[0]),
        mean_a=float(mean[1]),
        mean_b=float(mean[2]),
        std_l=float(std[0]),
        std_a=float(std[1]),
        std_b=float(std[2]),
    )


@dataclass(frozen=True)
class NormalizedTile:
    """Result of color normalization.

    ``pre_quantization`` holds the full tile in log-opponent coordinates
    after the transfer but before conversion back to 8-bit RGB, so channel
    statistics can be verified without quantization error. ``degenerate``
    flags channels that passed through shift-only because the source had
    zero spread while the target did not.
    """

    tile: Tile
    pre_quantization: np.ndarray
    degenerate: tuple = (False, False, False)


def reinhard_normalize(tile: Tile, mask: np.ndarray, target: ChannelStats) -> NormalizedTile:
    """Match masked-pixel channel statistics to ``target`` by shift and scale.

    Each masked pixel v becomes (v - mu_src) * std_tgt / std_src + mu_tgt per
    channel in log-opponent space; unmasked pixels pass through unchanged.
    A channel with zero source spread and positive target spread cannot be
    scaled; it is shifted only and flagged. Zero target spread with nonzero
    source spread is rejected as DegenerateStats.
    """
    mask = np.asarray(mask, dtype=bool)
    source = compute_color_stats(tile, mask)

    scales = np.ones(3)
    flags = [False, False, False]
    src_std, tgt_std = source.stds(), target.stds()
    for c in range(3):
        if src_std[c] == 0.0:
            if tgt_std[c] > 0.0:
                flags[c] = True  # shift-only passthrough
        elif tgt_std[c] == 0.0:
            raise DegenerateStats(
                f"channel {c}: target std is 0 while source std is {src_std[c]:g}"
            )
        else:
            scales[c] = tgt_std[c] / src_std[c]

    opp = rgb_to_opponent(tile.pixels)
    transformed = opp.copy()
    transformed[mask] = (opp[mask] - source.means()) * scales + target.means()

    out_pixels = np.asarray(tile.pixels).copy()
    out_pixels[mask] = opponent_to_rgb(transformed[mask])
    out_tile = Tile(tile.slide_id, tile.tile_x, tile.tile_y, out_pixels)
    return NormalizedTile(tile=out_tile, pre_quantization=transformed, degenerate=tuple(flags))


def tessellate(
    tile: Tile,
    mask: np.ndarray,
    patch_size: int = 128,
    min_foreground: float = 0.5,
) -> list:
    """Cut a tile into a row-major grid of square regions.

    A grid cell is kept iff the fraction of masked (foreground) pixels in it
    is at least ``min_foreground``. Region ids are derived from absolute
    slide coordinates and need no other state.
    """
    h, w = tile.pixels.shape[:2]
    if patch_size < 1 or h % patch_size or w % patch_size:
        raise ValueError(f"patch_size {patch_size} must divide tile dims {h}x{w}")
    if not 0.0 <= min_foreground <= 1.0:
        raise ValueError("min_foreground must be within [0, 1]")
    mask = np.asarray(mask, dtype=bool)

    regions = []
    for py in range(0, h, patch_size):
        for px in range(0, w, patch_size):
            block = mask[py : py + patch_size, px : px + patch_size]
            if block.mean() >= min_foreground:
                regions.append(
                    Region(
                        region_id=region_id_for(tile.slide_id, tile.tile_x + px, tile.tile_y + py),
                        slide_id=tile.slide_id,
                        tile_x=tile.tile_x,
                        tile_y=tile.tile_y,
                        patch_x=px,
                        patch_y=py,
                        size=patch_size,
                        pixels=tile.pixels[py : py + patch_size, px : px + patch_size].copy(),
                    )
                )
    return regions
