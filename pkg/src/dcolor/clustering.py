"""Scene clustering: seeded k-means and the adaptive training hierarchy.

Reference images are grouped by their scene descriptors with k-means. Each
cluster trains its own regressor; images the regressor already reconstructs
well (reconstruction error at or below the epsilon threshold, measured as
negative PSNR) are retired, and the survivors are pooled and re-clustered
on the next layer with fewer groups, until fewer than mu images remain.
Every trained cluster from every layer stays in the final assemble.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .mlp import Network

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterConfig:
    epsilon: float = -26.0      # removal threshold in dB (negative PSNR)
    mu: int = 80                # minimum images needed to train one network
    n0: int = 24                # cluster count on the top layer
    kmeans_max_iters: int = 100
    kmeans_restarts: int = 16
    max_layers: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.mu < 1:
            raise ValueError("mu must be >= 1")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")


@dataclass
class Cluster:
    """One trained group: descriptor center, mean histogram, members, network."""

    id: int
    layer: int
    center: np.ndarray
    histogram: np.ndarray
    members: list[str]
    network_id: int


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    sse: float
    # One SSE-per-Lloyd-iteration trace for each restart.
    histories: list[list[float]]


def _sse(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centers[labels]
    return float(np.sum(diff * diff))


def _plusplus_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining points coincide with a center; take the first unused.
            idx = next(i for i in range(n) if i not in chosen)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centers: np.ndarray,
           max_iters: int) -> tuple[np.ndarray, np.ndarray, list[float]]:
    n, k = points.shape[0], centers.shape[0]
    labels = None
    history = []
    for _ in range(max_iters):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)  # ties go to the lowest center index
        # Re-seed empty clusters from the point farthest from its own center.
        taken = set()
        for ci in range(k):
            if np.any(new_labels == ci):
                continue
            dist = d2[np.arange(n), new_labels].copy()
            dist[list(taken)] = -1.0
            far = int(np.argmax(dist))
            taken.add(far)
            centers[ci] = points[far]
            new_labels[far] = ci
        history.append(_sse(points, centers, new_labels))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        for ci in range(k):
            centers[ci] = points[labels == ci].mean(axis=0)
    return centers, labels, history


def _exchange_refine(points: np.ndarray, centers: np.ndarray,
                     labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-point exchange descent after Lloyd convergence.

    Moves one point at a time to whichever cluster lowers the SSE the most,
    accounting for how both means shift. This escapes assignment-stable
    local minima that plain Lloyd iterations cannot leave; any state it
    terminates in is still a Lloyd fixed point.
    """
    n, k = points.shape[0], centers.shape[0]
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.zeros_like(centers)
    for ci in range(k):
        sums[ci] = points[labels == ci].sum(axis=0)
    improved = True
    while improved:
        improved = False
        for i in range(n):
            a = labels[i]
            if counts[a] <= 1:
                continue
            da2 = float(np.sum((points[i] - sums[a] / counts[a]) ** 2))
            best_delta, best_c = -1e-12, -1
            for c in range(k):
                if c == a:
                    continue
                dc2 = float(np.sum((points[i] - sums[c] / counts[c]) ** 2))
                delta = counts[c] / (counts[c] + 1) * dc2 \
                    - counts[a] / (counts[a] - 1) * da2
                if delta < best_delta:
                    best_delta, best_c = delta, c
            if best_c >= 0:
                sums[a] -= points[i]
                counts[a] -= 1
                sums[best_c] += points[i]
                counts[best_c] += 1
                labels[i] = best_c
                improved = True
    for ci in range(k):
        centers[ci] = points[labels == ci].mean(axis=0)
    return centers, labels


def _partition_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Means of a random k-way split; explores basins k-means++ avoids."""
    n = points.shape[0]
    labels = rng.integers(0, k, n)
    # Pin one distinct point per cluster so every part is non-empty.
    labels[rng.permutation(n)[:k]] = np.arange(k)
    return np.stack([points[labels == ci].mean(axis=0) for ci in range(k)])


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iters: int = 100,
           restarts: int = 16) -> KMeansResult:
    """Seeded k-means with Lloyd iterations and multiple restarts.

    Restarts alternate between k-means++ seeding and the means of random
    partitions; each runs Lloyd to convergence followed by a single-point
    exchange descent, and the restart with the lowest SSE wins (earliest on
    ties). Deterministic for a given seed. Assignment ties break toward the
    lowest center index, and empty clusters are re-seeded from the farthest
    point.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError(f"expected a non-empty (n, d) array, got {points.shape}")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    best = None
    histories = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(restarts)):
        rng = np.random.default_rng(child)
        if i % 2 == 0:
            centers = _plusplus_seeds(points, k, rng)
        else:
            centers = _partition_seeds(points, k, rng)
        centers, labels, history = _lloyd(points, centers, max_iters)
        centers, labels = _exchange_refine(points, centers, labels)
        history.append(_sse(points, centers, labels))
        histories.append(history)
        sse = history[-1]
        if best is None or sse < best[0]:
            best = (sse, centers, labels)
    return KMeansResult(centers=best[1], labels=best[2], sse=best[0], histories=histories)


def mu_required(alpha: float, n_weights: int, n_samples_per_image: int) -> int:
    """Images needed per network: ceil(alpha * n_weights / n_samples_per_image)."""
    if alpha <= 0 or n_weights <= 0:
        raise ValueError("alpha and n_weights must be positive")
    if n_samples_per_image <= 0:
        raise ValueError("n_samples_per_image must be positive")
    return math.ceil(alpha * n_weights / n_samples_per_image)


@dataclass(frozen=True)
class ClusterItem:
    """What the hierarchy needs to know about one reference image."""

    id: str
    gist: np.ndarray
    histogram: np.ndarray


def adaptive_cluster_train(items: list[ClusterItem], cfg: ClusterConfig,
                           train_fn, error_fn) -> tuple[list[Network], list[Cluster]]:
    """Build the layered cluster assemble and train one network per cluster.

    train_fn(member_ids, layer, index) must return a trained Network;
    error_fn(image_id, network) must return the reconstruction error in dB
    (negative PSNR). Images with error <= cfg.epsilon are retired after
    their layer; the pooled survivors form the next layer, re-clustered
    into max(1, size // mu) groups. The loop stops when fewer than mu
    images survive. If a full layer retires nothing, the hierarchy cannot
    shrink further and construction stops there as well.
    """
    if not items:
        raise ValueError("reference set is empty")

    active = list(items)
    networks: list[Network] = []
    clusters: list[Cluster] = []
    layer = 0

    if len(active) < cfg.mu:
        log.warning("only %d reference images for mu=%d; building a degenerate "
                    "single-cluster model", len(active), cfg.mu)

    while True:
        if layer == 0:
            n_groups = 1 if len(active) < cfg.mu else min(cfg.n0, len(active))
        else:
            n_groups = max(1, min(len(active) // cfg.mu, len(active)))
        gists = np.stack([it.gist for it in active])
        km = kmeans(gists, n_groups, seed=cfg.seed + layer,
                    max_iters=cfg.kmeans_max_iters, restarts=cfg.kmeans_restarts)

        survivors: list[ClusterItem] = []
        for ci in range(n_groups):
            members = [it for it, lab in zip(active, km.labels) if lab == ci]
            if not members:
                continue
            net = train_fn([m.id for m in members], layer, ci)
            networks.append(net)
            hist = np.mean([m.histogram for m in members], axis=0)
            hist = hist / hist.sum()
            clusters.append(Cluster(
                id=len(clusters), layer=layer, center=km.centers[ci].copy(),
                histogram=hist, members=[m.id for m in members],
                network_id=len(networks) - 1,
            ))
            for m in members:
                err = error_fn(m.id, net)
                if not err <= cfg.epsilon:
                    survivors.append(m)
        removed = len(active) - len(survivors)
        log.info("layer %d: %d clusters, %d images, %d retired",
                 layer, n_groups, len(active), removed)

        layer += 1
        if len(survivors) < cfg.mu:
            break
        if removed == 0:
            log.warning("layer %d retired no images; stopping hierarchy early", layer - 1)
            break
        if layer >= cfg.max_layers:
            log.warning("reached max_layers=%d; stopping hierarchy", cfg.max_layers)
            break
        active = survivors
    return networks, clusters
