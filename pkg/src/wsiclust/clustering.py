"""K-means clustering, silhouette scoring, K selection, and representatives.

The clustering unit is a feature vector per region. Lloyd iteration runs
with uniform-random initial centers chosen from the data (a plus-plus style
seeding is available behind a flag but is not the default), restarts keep
the lowest objective, and the cluster count is chosen by maximizing the
mean silhouette over a candidate range. Each cluster's representative is
its member nearest to the centroid, the patch a human will label.

Everything is deterministic given the seed; returned models are immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCluster, InvalidK, SingleCluster
from .features import FeatureMatrix

DEFAULT_RESTARTS = 5
DEFAULT_MAX_ITER = 300
DEFAULT_SILHOUETTE_SAMPLE = 10_000

# Relative slack for the monotonicity check on the objective.
_J_SLACK = 1e-9

# Rows per block when streaming pairwise distances, to bound memory.
_BLOCK_ROWS = 256


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # k x q
    assignments: dict  # region_id -> cluster index
    k: int
    objective: float  # sum of squared member-to-centroid distances
    iterations: int
    seed: int
    j_history: tuple = ()

    def members(self) -> dict:
        """Cluster index -> list of region ids, insertion order preserved."""
        out = {i: [] for i in range(self.k)}
        for rid, c in self.assignments.items():
            out[c].append(rid)
        return out


@dataclass(frozen=True)
class SilhouetteEntry:
    intra: float  # mean distance to co-cluster members
    nearest: float  # smallest mean distance to another cluster
    score: float


@dataclass(frozen=True)
class SilhouetteReport:
    per_region: dict  # region_id -> SilhouetteEntry
    mean_score: float
    sample_ids: tuple


@dataclass(frozen=True)
class RepresentativeSet:
    per_cluster: dict  # cluster index -> region_id nearest the centroid


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances by explicit differencing (no dot-product trick)."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _sq_dists_to_centroids(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = np.empty((data.shape[0], centroids.shape[0]))
    for start in range(0, data.shape[0], _BLOCK_ROWS):
        block = data[start : start + _BLOCK_ROWS]
        diff = block[:, None, :] - centroids[None, :, :]
        out[start : start + _BLOCK_ROWS] = (diff * diff).sum(axis=2)
    return out


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(tuple(parts)).generate_state(1)[0])


def _plus_plus_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding, optional alternative to uniform choice."""
    n = data.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((data - data[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(remaining)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, ((data - data[chosen[-1]]) ** 2).sum(axis=1))
    return data[chosen].copy()


def kmeans(
    features: FeatureMatrix,
    k: int,
    seed: int,
    max_iter: int = DEFAULT_MAX_ITER,
    init: str = "random",
) -> ClusterModel:
    """Lloyd iteration from k randomly chosen data points.

    Each region is assigned to the nearest centroid (ties to the lowest
    cluster index), centroids are recomputed as member means, and iteration
    stops when no assignment changes or ``max_iter`` is reached. The
    objective (sum of squared distances to assigned centroids) is verified
    to be non-increasing at every pass. A cluster left empty is re-seeded
    with the point currently farthest from its assigned centroid.
    """
    n = features.n
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} must be within [1, {n}]")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    data = features.data

    rng = np.random.default_rng(seed)
    if init == "random":
        centroids = data[rng.choice(n, size=k, replace=False)].copy()
    elif init == "plus-plus":
        centroids = _plus_plus_init(data, k, rng)
    else:
        raise ValueError(f"unknown init {init!r}")

    assign = None
    j_history = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        d2 = _sq_dists_to_centroids(data, centroids)
        new_assign = d2.argmin(axis=1)
        j = float(d2[np.arange(n), new_assign].sum())
        if j_history and j > j_history[-1] + _J_SLACK * max(1.0, j_history[-1]):
            raise AssertionError(f"objective increased: {j_history[-1]} -> {j}")
        j_history.append(j)

        if assign is not None and np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign

        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, data)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]

        empties = np.flatnonzero(~nonempty)
        if empties.size:
            member_d2 = d2[np.arange(n), assign].copy()
            for e in empties:
                far = int(member_d2.argmax())
                centroids[e] = data[far]
                member_d2[far] = -np.inf  # each empty cluster takes a distinct point

    # Final update so centroids are exactly their members' means even when
    # iteration stopped at max_iter, then recompute the objective.
    counts = np.bincount(assign, minlength=k)
    sums = np.zeros_like(centroids)
    np.add.at(sums, assign, data)
    nonempty = counts > 0
    centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
    final_d2 = _sq_dists_to_centroids(data, centroids)
    objective = float(final_d2[np.arange(n), assign].sum())
    j_history.append(objective)

    return ClusterModel(
        centroids=centroids,
        assignments=dict(zip(features.region_ids, (int(c) for c in assign))),
        k=k,
        objective=objective,
        iterations=iterations,
        seed=seed,
        j_history=tuple(j_history),
    )


def kmeans_best(
    features: FeatureMatrix,
    k: int,
    seed: int,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    init: str = "random",
) -> ClusterModel:
    """Best of ``restarts`` runs by lowest objective; restart seeds derive
    deterministically from (seed, k, restart index)."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        model = kmeans(features, k, seed=derive_seed(seed, k, r), max_iter=max_iter, init=init)
        if best is None or model.objective < best.objective:
            best = model
    return best


def _resolve_sample(features: FeatureMatrix, sample, seed: int) -> np.ndarray:
    """Row indices to score: everything, a seeded uniform cap, or explicit ids."""
    n = features.n
    if sample is None:
        return np.arange(n)
    if isinstance(sample, int):
        if sample < 2:
            raise ValueError("sample cap must be >= 2")
        if n <= sample:
            return np.arange(n)
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(n, size=sample, replace=False))
    index = features.row_index()
    try:
        rows = np.array(sorted(index[rid] for rid in sample), dtype=int)
    except KeyError as exc:
        raise KeyError(f"sample region id not in features: {exc.args[0]!r}") from exc
    if rows.size < 2:
        raise ValueError("sample must contain at least two regions")
    return rows


def silhouette_scores(
    features: FeatureMatrix,
    model: ClusterModel,
    sample=None,
    seed: int = 0,
) -> SilhouetteReport:
    """Per-region silhouette and its mean over the scored set.

    For region x with cluster size >= 2, intra is the mean distance to the
    other members of its cluster, nearest is the smallest mean distance to
    the members of any other cluster, and the score is
    (nearest - intra) / max(nearest, intra). Members of singleton clusters
    score 0 by convention. ``sample`` may be an explicit region subset or an
    integer cap (a seeded uniform subsample); distances are then computed
    within the sampled population only.
    """
    rows = _resolve_sample(features, sample, seed)
    ids = [features.region_ids[i] for i in rows]
    data = features.data[rows]
    labels = np.array([model.assignments[rid] for rid in ids], dtype=int)

    present = np.unique(labels)
    if present.size < 2:
        raise SingleCluster(f"need >= 2 populated clusters, have {present.size}")

    onehot = np.zeros((rows.size, present.size))
    col_of = {int(c): j for j, c in enumerate(present)}
    cols = np.array([col_of[int(c)] for c in labels])
    onehot[np.arange(rows.size), cols] = 1.0
    counts = onehot.sum(axis=0)

    per_region = {}
    scores = np.empty(rows.size)
    for start in range(0, rows.size, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, rows.size)
        dists = _pairwise_distances(data[start:stop], data)
        cluster_sums = dists @ onehot  # block x present
        for b in range(stop - start):
            i = start + b
            own = cols[i]
            own_count = counts[own]
            means = cluster_sums[b] / counts
            others = np.delete(means, own)
            nearest = float(others.min())
            if own_count < 2:
                entry = SilhouetteEntry(intra=0.0, nearest=nearest, score=0.0)
            else:
                intra = float(cluster_sums[b, own] / (own_count - 1))
                denom = max(nearest, intra)
                score = 0.0 if denom == 0.0 else (nearest - intra) / denom
                entry = SilhouetteEntry(intra=intra, nearest=nearest, score=float(score))
            per_region[ids[i]] = entry
            scores[i] = entry.score

    return SilhouetteReport(
        per_region=per_region,
        mean_score=float(scores.mean()),
        sample_ids=tuple(ids),
    )


def select_k(
    features: FeatureMatrix,
    k_min: int,
    k_max: int,
    seed: int,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    sample_cap: int = DEFAULT_SILHOUETTE_SAMPLE,
    init: str = "random",
):
    """Sweep k over [k_min, k_max], score each by mean silhouette, and pick
    the maximizer (ties to the smaller k).

    Each candidate k gets a best-of-restarts k-means fit; the full sweep of
    (k, mean silhouette, objective) triples is returned for reporting.
    """
    n = features.n
    if not 2 <= k_min <= k_max <= n - 1:
        raise InvalidK(f"need 2 <= k_min <= k_max <= N-1, got [{k_min}, {k_max}] with N={n}")

    sweep = []
    best_k, best_score = None, -np.inf
    for k in range(k_min, k_max + 1):
        model = kmeans_best(features, k, seed=seed, restarts=restarts, max_iter=max_iter, init=init)
        sil_seed = derive_seed(seed, k, restarts)  # distinct from every restart seed
        report = silhouette_scores(features, model, sample=sample_cap, seed=sil_seed)
        sweep.append((k, report.mean_score, model.objective))
        if report.mean_score > best_score:
            best_k, best_score = k, report.mean_score
    return best_k, sweep


def representatives(features: FeatureMatrix, model: ClusterModel) -> RepresentativeSet:
    """The member region nearest each cluster centroid, ties to the lowest id."""
    index = features.row_index()
    per_cluster = {}
    for c, member_ids in model.members().items():
        if not member_ids:
            raise EmptyCluster(f"cluster {c} has no members")
        rows = np.array([index[rid] for rid in member_ids])
        diff = features.data[rows] - model.centroids[c]
        d2 = (diff * diff).sum(axis=1)
        dmin = d2.min()
        candidates = [member_ids[i] for i in np.flatnonzero(d2 == dmin)]
        per_cluster[c] = min(candidates)
    return RepresentativeSet(per_cluster=per_cluster)


# --- persistence -----------------------------------------------------------

def save_model(path, model: ClusterModel) -> None:
    doc = {
        "k": model.k,
        "seed": model.seed,
        "objective": model.objective,
        "iterations": model.iterations,
        "j_history": list(model.j_history),
        "centroids": [[float(v) for v in row] for row in model.centroids],
        "assignments": {rid: int(c) for rid, c in model.assignments.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path) -> ClusterModel:
    doc = json.loads(Path(path).read_text())
    return ClusterModel(
        centroids=np.array(doc["centroids"], dtype=np.float64),
        assignments={rid: int(c) for rid, c in doc["assignments"].items()},
        k=int(doc["k"]),
        objective=float(doc["objective"]),
        iterations=int(doc["iterations"]),
        seed=int(doc["seed"]),
        j_history=tuple(doc["j_history"]),
    )


def save_silhouette(path, report: SilhouetteReport) -> None:
    doc = {
        "mean_score": report.mean_score,
        "sample_ids": list(report.sample_ids),
        "per_region": {
            rid: {"intra": e.intra, "nearest": e.nearest, "score": e.score}
            for rid, e in report.per_region.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_silhouette(path) -> SilhouetteReport:
    doc = json.loads(Path(path).read_text())
    return SilhouetteReport(
        per_region={
            rid: SilhouetteEntry(intra=e["intra"], nearest=e["nearest"], score=e["score"])
            for rid, e in doc["per_region"].items()
        },
        mean_score=float(doc["mean_score"]),
        sample_ids=tuple(doc["sample_ids"]),
    )


def save_representatives(path, reps: RepresentativeSet) -> None:
    doc = {"per_cluster": {str(c): rid for c, rid in reps.per_cluster.items()}}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_representatives(path) -> RepresentativeSet:
    doc = json.loads(Path(path).read_text())
    return RepresentativeSet(per_cluster={int(c): rid for c, rid in doc["per_cluster"].items()})


def write_sweep(path, sweep) -> None:
    """Two-column table (k, mean silhouette) for plotting tools."""
    lines = ["k,mean_score"] + [f"{k},{repr(float(score))}" for k, score, _ in sweep]
    Path(path).write_text("\n".join(lines) + "\n")
