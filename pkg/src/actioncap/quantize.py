"""Vector quantization of observation streams.

Lloyd's k-means with k-means++ seeding turns per-step observation
vectors into discrete labels; the elbow rule picks the cluster count
from the inertia curve. Codebooks are immutable after fitting and
serialize to versioned JSON.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

CODEBOOK_FORMAT_VERSION = 1


@dataclass
class Codebook:
    """K centroids plus the training inertia that produced them.

    `label(v)` is the index of the nearest centroid in squared Euclidean
    distance, ties resolved toward the lowest index.
    """

    k: int
    dim: int
    centroids: np.ndarray
    inertia: float
    seed: int
    # per-Lloyd-iteration assignment inertia; not serialized
    history: list[float] = field(default_factory=list, repr=False)
    train_labels: np.ndarray | None = field(default=None, repr=False)


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        (points * points).sum(axis=1)[:, None]
        + (centers * centers).sum(axis=1)[None, :]
        - 2.0 * points @ centers.T
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=points.dtype)
    centers[0] = points[rng.integers(n)]
    closest = _squared_distances(points, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total > 0.0:
            idx = rng.choice(n, p=closest / total)
        else:  # all remaining points coincide with a chosen center
            idx = rng.integers(n)
        centers[j] = points[idx]
        np.minimum(closest, _squared_distances(points, centers[j:j + 1])[:, 0],
                   out=closest)
    return centers


def kmeans_fit(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100,
               tol: float = 1e-6) -> Codebook:
    """Fit k centroids by Lloyd iteration until shift < tol or max_iter.

    Deterministic for a fixed seed. Empty clusters are reseeded at the
    point farthest from its assigned centroid, which keeps the recorded
    per-iteration inertia non-increasing.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DataError("kmeans_fit requires a non-empty 2-D point matrix")
    if k <= 0:
        raise ConfigError(f"k must be positive, got {k}")
    if points.shape[0] < k:
        raise DataError(f"need at least k={k} points, got {points.shape[0]}")

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    n = points.shape[0]
    rows = np.arange(n)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)

    for _ in range(max_iter):
        d2 = _squared_distances(points, centers)
        labels = d2.argmin(axis=1)
        point_d2 = d2[rows, labels]
        history.append(float(point_d2.sum()))

        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        nonempty = counts > 0
        new_centers[nonempty] = sums[nonempty] / counts[nonempty, None]

        for j in np.flatnonzero(~nonempty):
            far = int(point_d2.argmax())
            new_centers[j] = points[far]
            point_d2 = point_d2.copy()
            point_d2[far] = 0.0  # don't hand the same point to two empty clusters

        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break

    # assignments and inertia under the final centroids
    d2 = _squared_distances(points, centers)
    labels = d2.argmin(axis=1)
    inertia = float(d2[rows, labels].sum())
    history.append(inertia)

    # resolve exact duplicate centroids (degenerate, but promised away)
    for j in range(1, k):
        if any(np.array_equal(centers[j], centers[i]) for i in range(j)):
            point_d2 = d2[rows, labels]
            centers[j] = points[int(point_d2.argmax())]
            d2 = _squared_distances(points, centers)
            labels = d2.argmin(axis=1)
            inertia = float(d2[rows, labels].sum())
            history.append(inertia)

    return Codebook(k=k, dim=points.shape[1], centroids=centers, inertia=inertia,
                    seed=seed, history=history, train_labels=labels)


def quantize(codebook: Codebook, seq: np.ndarray) -> np.ndarray:
    """Map each row of `seq` to its nearest centroid index."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[None, :]
    if seq.shape[1] != codebook.dim:
        raise ConfigError(
            f"sequence dim {seq.shape[1]} != codebook dim {codebook.dim}")
    return _squared_distances(seq, codebook.centroids).argmin(axis=1)


@dataclass
class ElbowResult:
    chosen_k: int
    candidates: list[int]
    inertias: list[float]
    chord_distances: list[float]
    no_elbow: bool


def choose_elbow(candidates: list[int], inertias: list[float]) -> ElbowResult:
    """Pick the candidate with maximum perpendicular distance to the chord.

    The chord runs from (first candidate, its inertia) to (last candidate,
    its inertia). A flat/linear curve has no usable bend: the result is
    flagged and the middle candidate returned.
    """
    if len(candidates) < 3:
        raise ConfigError("elbow selection needs at least 3 candidates")
    if sorted(candidates) != list(candidates) or len(set(candidates)) != len(candidates):
        raise ConfigError("candidates must be strictly ascending")
    x0, y0 = float(candidates[0]), float(inertias[0])
    x1, y1 = float(candidates[-1]), float(inertias[-1])
    chord = np.hypot(x1 - x0, y1 - y0)
    dists = []
    for x, y in zip(candidates, inertias):
        dists.append(abs((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0) / chord)
    max_d = max(dists)
    no_elbow = max_d <= 1e-9 * max(chord, 1.0)
    if no_elbow:
        chosen = candidates[len(candidates) // 2]
        warnings.warn("inertia curve has no elbow; returning the middle candidate")
    else:
        chosen = candidates[int(np.argmax(dists))]
    return ElbowResult(chosen_k=chosen, candidates=list(candidates),
                       inertias=[float(v) for v in inertias],
                       chord_distances=dists, no_elbow=no_elbow)


def elbow_select(points: np.ndarray, k_candidates: list[int], seed: int = 0,
                 max_iter: int = 100, tol: float = 1e-6) -> ElbowResult:
    """Fit every candidate k and pick one by the max-chord-distance rule."""
    if len(k_candidates) < 3:
        raise ConfigError("elbow selection needs at least 3 candidates")
    inertias = [kmeans_fit(points, k, seed=seed, max_iter=max_iter, tol=tol).inertia
                for k in k_candidates]
    return choose_elbow(list(k_candidates), inertias)


def save_codebook(codebook: Codebook, path: str) -> None:
    payload = {
        "version": CODEBOOK_FORMAT_VERSION,
        "k": codebook.k,
        "dim": codebook.dim,
        "centroids": codebook.centroids.tolist(),
        "inertia": codebook.inertia,
        "seed": codebook.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def codebook_to_json(codebook: Codebook) -> str:
    return json.dumps({
        "version": CODEBOOK_FORMAT_VERSION,
        "k": codebook.k,
        "dim": codebook.dim,
        "centroids": codebook.centroids.tolist(),
        "inertia": codebook.inertia,
        "seed": codebook.seed,
    }, sort_keys=True)


def load_codebook(path: str) -> Codebook:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CODEBOOK_FORMAT_VERSION:
        raise DataError(f"unsupported codebook version {payload.get('version')!r}")
    centroids = np.asarray(payload["centroids"], dtype=np.float64)
    if centroids.shape != (payload["k"], payload["dim"]):
        raise DataError("centroid matrix does not match declared k/dim")
    return Codebook(k=payload["k"], dim=payload["dim"], centroids=centroids,
                    inertia=float(payload["inertia"]), seed=int(payload["seed"]))
