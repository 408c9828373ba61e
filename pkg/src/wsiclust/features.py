"""Per-region feature vectors and PCA dimensionality reduction.

Feature vectors normally come from an external extractor through the TCF1
file format (see feature_io). The stand-in extractor here computes cheap
deterministic patch statistics so the pipeline can run end-to-end without
any external model; it is a test substitute, not a replacement.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficientWarning
from .preprocess import GRAY_WEIGHTS

STAND_IN_DIM = 64

# Eigenvalues at or below this are treated as numerically zero rank.
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class FeatureMatrix:
    """N region ids paired with an N x d matrix of feature values."""

    region_ids: tuple
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "region_ids", tuple(self.region_ids))
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D, got {data.ndim}-D")
        if len(self.region_ids) != data.shape[0]:
            raise ValueError("row count must match region id count")
        if len(set(self.region_ids)) != len(self.region_ids):
            raise ValueError("region ids must be unique")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature values must be finite")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row_index(self) -> dict:
        return {rid: i for i, rid in enumerate(self.region_ids)}

    def subset(self, region_ids) -> "FeatureMatrix":
        index = self.row_index()
        rows = [index[rid] for rid in region_ids]
        return FeatureMatrix(tuple(region_ids), self.data[rows])


@dataclass(frozen=True)
class PcaModel:
    """Orthonormal projection onto the top principal directions."""

    mean: np.ndarray
    components: np.ndarray  # q x d, rows are directions
    explained_variance: np.ndarray  # length q, non-increasing
    q: int

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "components", np.asarray(self.components, dtype=np.float64))
        object.__setattr__(
            self, "explained_variance", np.asarray(self.explained_variance, dtype=np.float64)
        )


def resize_nearest(patch: np.ndarray, out_size: int) -> np.ndarray:
    """Nearest-neighbor resize of a square patch.

    Output pixel (i, j) copies input pixel (floor(i*size/out), floor(j*size/out)).
    """
    patch = np.asarray(patch)
    size = patch.shape[0]
    if patch.shape[1] != size:
        raise ValueError("patch must be square")
    if size < 1 or out_size < 1:
        raise ValueError("sizes must be positive")
    idx = (np.arange(out_size) * size) // out_size
    return patch[np.ix_(idx, idx)]


def stand_in_extract(patch: np.ndarray) -> np.ndarray:
    """Deterministic 64-dim statistics vector for one RGB patch.

    Layout (pixels scaled to [0, 1]):
      [0:48]   per-channel mean over each cell of a 4x4 grid (row-major,
               channel fastest)
      [48:51]  whole-patch per-channel mean
      [51:54]  whole-patch per-channel std
      [54:63]  per-channel 25/50/75 percentiles (channel-major)
      [63]     whole-patch grayscale mean
    """
    patch = np.asarray(patch)
    if patch.ndim != 3 or patch.shape[2] != 3:
        raise ValueError("patch must be HxWx3")
    h, w = patch.shape[:2]
    if h < 4 or w < 4:
        raise ValueError("patch must be at least 4x4")
    px = patch.astype(np.float64) / 255.0

    out = np.empty(STAND_IN_DIM)
    pos = 0
    ys = [(i * h) // 4 for i in range(5)]
    xs = [(j * w) // 4 for j in range(5)]
    for i in range(4):
        for j in range(4):
            cell = px[ys[i] : ys[i + 1], xs[j] : xs[j + 1]]
            out[pos : pos + 3] = cell.mean(axis=(0, 1))
            pos += 3
    out[48:51] = px.mean(axis=(0, 1))
    out[51:54] = px.std(axis=(0, 1))
    for c in range(3):
        out[54 + 3 * c : 57 + 3 * c] = np.percentile(px[..., c], [25.0, 50.0, 75.0])
    out[63] = float(
        px[..., 0].mean() * GRAY_WEIGHTS[0]
        + px[..., 1].mean() * GRAY_WEIGHTS[1]
        + px[..., 2].mean() * GRAY_WEIGHTS[2]
    )
    return out


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip rows so each row's largest-magnitude entry is positive."""
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def pca_fit(features: FeatureMatrix, q: int) -> PcaModel:
    """Fit PCA on the rows of ``features`` keeping the top ``q`` directions.

    Directions are the eigenvectors of the sample covariance (divisor N-1),
    computed through an SVD of the centered data. Eigenvalue order is
    descending and each direction's sign is fixed so its largest-magnitude
    entry is positive. If fewer than ``q`` directions carry variance above
    tolerance, a RankDeficientWarning is issued and the remainder are
    zero-variance directions from the orthonormal complement.
    """
    n, d = features.data.shape
    if n < 2:
        raise ValueError("need at least two rows to fit")
    if not 1 <= q <= min(n - 1, d):
        raise ValueError(f"q={q} must be within [1, min(N-1, d)] = [1, {min(n - 1, d)}]")

    mean = features.data.mean(axis=0)
    centered = features.data - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = (singular**2) / (n - 1)

    positive = int(np.sum(eigenvalues > _RANK_TOL))
    if positive < q:
        warnings.warn(
            f"only {positive} directions carry variance; padding {q - positive} "
            "zero-variance directions",
            RankDeficientWarning,
        )
        eigenvalues = eigenvalues.copy()
        eigenvalues[positive:] = 0.0

    components = _fix_signs(vt[:q])
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=eigenvalues[:q],
        q=q,
    )


def pca_transform(model: PcaModel, features: FeatureMatrix) -> FeatureMatrix:
    """Project rows onto the model's directions, preserving region order."""
    if features.dim != model.mean.shape[0]:
        raise DimensionMismatch(
            f"features have dimension {features.dim}, model expects {model.mean.shape[0]}"
        )
    projected = (features.data - model.mean) @ model.components.T
    return FeatureMatrix(features.region_ids, projected)
