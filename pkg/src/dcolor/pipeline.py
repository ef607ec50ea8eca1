"""End-to-end orchestration: corpus training, colorization, evaluation.

Training clusters the reference corpus, trains one regressor per cluster,
and packs everything into a serializable Model. Colorizing a grayscale
target picks the best cluster from its scene descriptor and semantic
histogram, regresses chroma per pixel, refines it with the joint bilateral
filter, and recombines with the unchanged luminance plane.
"""

from __future__ import annotations

import logging
import math
import os
import statistics
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import Cluster, ClusterConfig, ClusterItem, adaptive_cluster_train
from .features import (DaisyParams, PATCH_DIM, SemanticMap, assemble_field,
                       assemble_rows, daisy_field, semantic_feature)
from .globaldesc import GistParams, compute_gist, select_cluster, semantic_histogram
from .image import (ChromaPlanes, ColorImage, GrayImage, fit_chroma_to_gamut,
                    psnr, rgb_to_yuv, yuv_to_rgb)
from .mlp import Network, TrainConfig, forward, hidden_sizes_for, init_network, train
from .refine import CHROMA_PARAMS, SEMANTIC_PARAMS, BilateralParams, joint_bilateral_stack

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
_FORWARD_BATCH = 65536


@dataclass(frozen=True)
class EngineConfig:
    """Everything needed to reproduce training and the descriptor layout."""

    cluster: ClusterConfig = ClusterConfig()
    train: TrainConfig = field(default_factory=TrainConfig)
    samples_per_image: int = 1000
    topk: int = 5
    hidden_layers: int = 3
    daisy: DaisyParams = DaisyParams()
    gist: GistParams = GistParams()
    chroma_filter: BilateralParams = CHROMA_PARAMS
    semantic_filter: BilateralParams = SEMANTIC_PARAMS


@dataclass
class ReferencePair:
    """A reference image with its derived planes and semantic map."""

    id: str
    color: ColorImage
    gray: GrayImage
    chroma: ChromaPlanes
    semantic: SemanticMap | None

    @classmethod
    def from_color(cls, image_id: str, color: ColorImage,
                   semantic: SemanticMap | None) -> "ReferencePair":
        gray, chroma = rgb_to_yuv(color)
        if semantic is not None and semantic.probs.shape[:2] != gray.y.shape:
            raise ValueError(f"{image_id}: semantic map {semantic.probs.shape[:2]} "
                             f"does not match image {gray.y.shape}")
        return cls(image_id, color, gray, chroma, semantic)


@dataclass
class TrainReport:
    """Per-cluster training summaries; informational, never serialized."""

    loss_histories: dict[int, list[float]] = field(default_factory=dict)
    layer_members: dict[int, list[str]] = field(default_factory=dict)
    skipped_images: list[str] = field(default_factory=list)


@dataclass
class Model:
    """Trained colorization engine: config, categories, clusters, networks."""

    version: int
    config: EngineConfig
    categories: tuple[str, ...]
    clusters: list[Cluster]
    networks: list[Network]
    report: TrainReport | None = None

    def __post_init__(self):
        for c in self.clusters:
            if not 0 <= c.network_id < len(self.networks):
                raise ValueError(f"cluster {c.id} references missing network {c.network_id}")

    @property
    def descriptor_dim(self) -> int:
        return PATCH_DIM + self.config.daisy.dim + len(self.categories)


class _FeatureCache:
    """Small LRU of dense descriptor matrices keyed by image id."""

    def __init__(self, capacity: int = 16):
        self.capacity = capacity
        self._data: OrderedDict[str, np.ndarray] = OrderedDict()

    def get(self, key: str, build) -> np.ndarray:
        if key in self._data:
            self._data.move_to_end(key)
            return self._data[key]
        value = build()
        self._data[key] = value
        if len(self._data) > self.capacity:
            self._data.popitem(last=False)
        return value


def dense_descriptors(gray: GrayImage, semantic: SemanticMap,
                      cfg: EngineConfig) -> np.ndarray:
    """Descriptor matrix for every pixel, (H*W, D) float32, row-major."""
    daisy = daisy_field(gray, cfg.daisy)
    smoothed = semantic_feature(semantic, gray, cfg.semantic_filter)
    return assemble_field(gray, daisy, smoothed, dtype=np.float32)


def predict_chroma(net: Network, descriptors: np.ndarray,
                   shape: tuple[int, int]) -> ChromaPlanes:
    """Run the regressor over a descriptor matrix and shape the U, V planes."""
    preds = np.empty((descriptors.shape[0], 2), dtype=np.float64)
    for start in range(0, descriptors.shape[0], _FORWARD_BATCH):
        block = descriptors[start:start + _FORWARD_BATCH]
        preds[start:start + block.shape[0]] = forward(net, block)
    np.clip(preds, -0.5, 0.5, out=preds)
    return ChromaPlanes(preds[:, 0].reshape(shape), preds[:, 1].reshape(shape))


def _predict_chroma_streaming(net: Network, gray: GrayImage, daisy: np.ndarray,
                              smoothed: SemanticMap) -> ChromaPlanes:
    """Assemble descriptors and regress chroma strip by strip.

    Equivalent to a whole-image descriptor matrix pass, but the reused
    strip buffer keeps peak memory flat across image sizes.
    """
    h, w = gray.y.shape
    dim = PATCH_DIM + daisy.shape[2] + smoothed.probs.shape[2]
    rows = max(4, 16384 // max(w, 1))
    buf = np.empty((rows * w, dim), dtype=np.float32)
    preds = np.empty((h, w, 2), dtype=np.float64)
    for row0 in range(0, h, rows):
        row1 = min(row0 + rows, h)
        n = (row1 - row0) * w
        x = assemble_rows(gray, daisy, smoothed, row0, row1, out=buf[:n])
        preds[row0:row1] = forward(net, x).reshape(row1 - row0, w, 2)
    np.clip(preds, -0.5, 0.5, out=preds)
    return ChromaPlanes(preds[:, :, 0], preds[:, :, 1])


def colorize_with_network(gray: GrayImage, semantic: SemanticMap, net: Network,
                          cfg: EngineConfig, refine: bool = True,
                          descriptors: np.ndarray | None = None) -> ColorImage:
    """Colorize with a fixed network, bypassing cluster selection."""
    if descriptors is None:
        daisy = daisy_field(gray, cfg.daisy)
        smoothed = semantic_feature(semantic, gray, cfg.semantic_filter)
        chroma = _predict_chroma_streaming(net, gray, daisy, smoothed)
    else:
        chroma = predict_chroma(net, descriptors, gray.y.shape)
    if refine:
        stack = np.stack([chroma.u, chroma.v], axis=-1)
        stack = joint_bilateral_stack(stack, gray.y, cfg.chroma_filter)
        np.clip(stack, -0.5, 0.5, out=stack)
        chroma = ChromaPlanes(stack[:, :, 0], stack[:, :, 1])
    chroma = fit_chroma_to_gamut(gray, chroma)
    return yuv_to_rgb(gray, chroma)


def training_error(pair: ReferencePair, net: Network, cfg: EngineConfig,
                   descriptors: np.ndarray | None = None) -> float:
    """Reconstruction error in dB: the negative PSNR of the self-colorization."""
    recolored = colorize_with_network(pair.gray, pair.semantic, net, cfg,
                                      refine=True, descriptors=descriptors)
    return -psnr(recolored, pair.color)


def _derived_seed(base: int, *key: int) -> int:
    state = np.random.SeedSequence(entropy=base, spawn_key=tuple(key)).generate_state(2)
    return int(state[0]) ^ (int(state[1]) << 32)


def train_model(pairs: list[ReferencePair], categories,
                cfg: EngineConfig | None = None) -> Model:
    """Train the full cluster assemble from reference pairs (Model output).

    Images without a semantic map are skipped with a warning. Per image,
    samples_per_image pixels are drawn uniformly (seeded, without
    replacement) to build the regression training set; the same dense
    descriptors also drive the per-image reconstruction error that decides
    which images each layer retires.
    """
    if cfg is None:
        cfg = EngineConfig()
    categories = tuple(categories)
    report = TrainReport()
    usable = []
    for pair in sorted(pairs, key=lambda p: p.id):
        if pair.semantic is None:
            log.warning("skipping %s: no semantic map", pair.id)
            report.skipped_images.append(pair.id)
            continue
        if pair.semantic.categories != categories:
            raise ValueError(f"{pair.id}: semantic categories do not match the model's")
        usable.append(pair)
    if not usable:
        raise ValueError("no usable reference images (all missing semantic maps)")

    by_id = {p.id: p for p in usable}
    cache = _FeatureCache()

    def features_for(pair: ReferencePair) -> np.ndarray:
        return cache.get(pair.id, lambda: dense_descriptors(pair.gray, pair.semantic, cfg))

    items = []
    sample_x: dict[str, np.ndarray] = {}
    sample_t: dict[str, np.ndarray] = {}
    for i, pair in enumerate(usable):
        gist = compute_gist(pair.gray, cfg.gist)
        hist = semantic_histogram(pair.semantic)
        items.append(ClusterItem(id=pair.id, gist=gist, histogram=hist))
        n_pix = pair.gray.height * pair.gray.width
        count = min(cfg.samples_per_image, n_pix)
        rng = np.random.default_rng([cfg.train.seed, i])
        idx = np.sort(rng.choice(n_pix, size=count, replace=False))
        sample_x[pair.id] = features_for(pair)[idx].astype(np.float64)
        sample_t[pair.id] = np.stack([pair.chroma.u.reshape(-1)[idx],
                                      pair.chroma.v.reshape(-1)[idx]], axis=1)
    dim = PATCH_DIM + cfg.daisy.dim + len(categories)
    sizes = hidden_sizes_for(dim, cfg.hidden_layers)

    def train_fn(member_ids: list[str], layer: int, index: int) -> Network:
        x = np.concatenate([sample_x[m] for m in member_ids])
        t = np.concatenate([sample_t[m] for m in member_ids])
        net0 = init_network(sizes, seed=_derived_seed(cfg.train.seed, 1, layer, index),
                            scale=cfg.train.weight_init_scale)
        sgd_cfg = replace(cfg.train, seed=_derived_seed(cfg.train.seed, 2, layer, index))
        net, history = train(net0, x, t, sgd_cfg)
        report.loss_histories[len(report.loss_histories)] = history
        log.info("layer %d cluster %d: %d samples, loss %.3g -> %.3g",
                 layer, index, x.shape[0],
                 history[0] if history else float("nan"),
                 history[-1] if history else float("nan"))
        return net

    def error_fn(image_id: str, net: Network) -> float:
        pair = by_id[image_id]
        return training_error(pair, net, cfg, descriptors=features_for(pair))

    networks, clusters = adaptive_cluster_train(items, cfg.cluster, train_fn, error_fn)
    for c in clusters:
        report.layer_members.setdefault(c.layer, []).extend(c.members)

    # Freeze everything that enters the model file at float32 so a trained
    # model and its reloaded copy behave identically.
    networks = [n.astype(np.float32) for n in networks]
    for c in clusters:
        c.center = c.center.astype(np.float32)
        c.histogram = c.histogram.astype(np.float32)
    return Model(version=MODEL_FORMAT_VERSION, config=cfg, categories=categories,
                 clusters=clusters, networks=networks, report=report)


def colorize(gray: GrayImage, semantic: SemanticMap | None, model: Model,
             refine: bool = True, topk: int | None = None) -> ColorImage:
    """Colorize a grayscale target with the best-matching cluster's network."""
    if semantic is None:
        log.warning("no semantic map given; using the uniform prior")
        semantic = SemanticMap.uniform(gray.height, gray.width, model.categories)
    if semantic.probs.shape[:2] != gray.y.shape:
        raise ValueError(f"semantic map {semantic.probs.shape[:2]} does not "
                         f"match target {gray.y.shape}")
    if len(semantic.categories) != len(model.categories):
        raise ValueError("semantic map category count does not match the model")
    gist = compute_gist(gray, model.config.gist)
    hist = semantic_histogram(semantic)
    k = model.config.topk if topk is None else topk
    chosen = select_cluster(gist, hist, model.clusters, k=k)
    cluster = next(c for c in model.clusters if c.id == chosen)
    net = model.networks[cluster.network_id]
    log.info("selected cluster %d (layer %d)", cluster.id, cluster.layer)
    return colorize_with_network(gray, semantic, net, model.config, refine=refine)


@dataclass
class EvalRow:
    image_id: str
    psnr_db: float | None
    error: str | None = None


@dataclass
class EvaluationReport:
    rows: list[EvalRow]
    mean_db: float | None
    median_db: float | None
    histogram: dict[int, int]  # floor(dB) -> count, for finite rows


def _worker_count() -> int:
    env = os.environ.get("DCOLOR_THREADS", "0")
    try:
        n = int(env)
    except ValueError:
        n = 0
    if n <= 0:
        n = min(os.cpu_count() or 1, 8)
    return n


def evaluate(pairs: list[ReferencePair], model: Model, refine: bool = True,
             topk: int | None = None) -> EvaluationReport:
    """Colorize every pair and report per-image PSNR against ground truth.

    Per-image failures become error rows; the batch always completes.
    Rows are ordered by image id regardless of worker scheduling.
    """

    def run(pair: ReferencePair) -> EvalRow:
        try:
            out = colorize(pair.gray, pair.semantic, model, refine=refine, topk=topk)
            return EvalRow(pair.id, psnr(out, pair.color))
        except Exception as exc:  # noqa: BLE001 - recorded per row
            log.warning("evaluation failed for %s: %s", pair.id, exc)
            return EvalRow(pair.id, None, error=str(exc))

    workers = _worker_count()
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, pairs))
    else:
        rows = [run(pair) for pair in pairs]
    rows.sort(key=lambda r: r.image_id)

    finite = [r.psnr_db for r in rows if r.psnr_db is not None and math.isfinite(r.psnr_db)]
    scored = [r.psnr_db for r in rows if r.psnr_db is not None]
    histogram: dict[int, int] = {}
    for value in finite:
        histogram[int(math.floor(value))] = histogram.get(int(math.floor(value)), 0) + 1
    mean_db = float(np.mean(scored)) if scored else None
    median_db = float(statistics.median(scored)) if scored else None
    return EvaluationReport(rows=rows, mean_db=mean_db, median_db=median_db,
                            histogram=dict(sorted(histogram.items())))
