from dataclasses import dataclass

import numpy as np
import pytest

from dcolor.features import SemanticMap
from dcolor.globaldesc import (GistParams, compute_gist, cosine_similarity,
                               gabor_kernel, select_cluster, semantic_histogram)
from dcolor.image import GrayImage


@dataclass
class FakeCluster:
    id: int
    center: np.ndarray
    histogram: np.ndarray


class TestGist:
    def test_constant_image_all_zero(self):
        gist = compute_gist(GrayImage(np.full((40, 40), 0.3)))
        assert gist.shape == (512,)
        assert np.all(gist == 0.0)

    def test_length_512(self, rng):
        assert compute_gist(GrayImage(rng.random((50, 70)))).shape == (512,)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="too small"):
            compute_gist(GrayImage(np.zeros((8, 8))))

    def test_values_non_negative_finite(self, rng):
        gist = compute_gist(GrayImage(rng.random((33, 47))))
        assert np.isfinite(gist).all() and gist.min() >= 0.0

    def test_grating_energy_at_matching_filter(self):
        # Horizontal stripes at the base frequency of the bank, fed at the
        # working resolution so no rescale shifts the frequency.
        yy = np.arange(128)[:, None] * np.ones((1, 128))
        grating = 0.5 + 0.4 * np.sin(2 * np.pi * 0.25 * yy)
        gist = compute_gist(GrayImage(grating))
        per_filter = gist.reshape(32, 16).sum(axis=1)
        scale, orient = divmod(int(np.argmax(per_filter)), 8)
        assert scale == 0
        assert orient == 4  # pi/2: gradient along y

    def test_matches_direct_convolution_oracle(self, rng):
        # Small bank at the native input size, checked against a roll-based
        # circular convolution evaluated straight from the definition.
        params = GistParams(resolution=32, scales=2, orientations=4, grid=2,
                            base_freq=0.25)
        plane = rng.random((32, 32))
        got = compute_gist(GrayImage(plane), params)

        work = plane - plane.mean()
        want = []
        for s in range(params.scales):
            freq = params.base_freq / 2 ** s
            for o in range(params.orientations):
                theta = np.pi * o / params.orientations
                k = gabor_kernel(freq, theta, params.bandwidth, params.truncate)
                r = k.shape[0] // 2
                resp = np.zeros((32, 32), dtype=np.complex128)
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        resp += k[dy + r, dx + r] * np.roll(work, (dy, dx), axis=(0, 1))
                mag = np.abs(resp)
                cells = mag.reshape(2, 16, 2, 16).mean(axis=(1, 3))
                want.extend(cells.reshape(-1))
        assert np.abs(got - np.array(want)).max() < 1e-8


class TestSemanticHistogram:
    def test_uniform_one_hot(self):
        cats = tuple(f"c{i}" for i in range(8))
        sem = SemanticMap.from_labels(np.full((6, 6), 5, dtype=int), cats)
        hist = semantic_histogram(sem)
        want = np.zeros(8)
        want[5] = 1.0
        assert np.allclose(hist, want)

    def test_half_and_half(self):
        cats = ("a", "b", "c")
        labels = np.zeros((4, 4), dtype=int)
        labels[2:] = 1
        hist = semantic_histogram(SemanticMap.from_labels(labels, cats))
        assert np.allclose(hist, [0.5, 0.5, 0.0])

    def test_random_map_equals_channel_means(self, rng):
        raw = rng.random((5, 7, 4))
        raw /= raw.sum(axis=2, keepdims=True)
        sem = SemanticMap(raw, tuple("abcd"))
        hist = semantic_histogram(sem)
        # independent accumulation over the stored values
        want = np.zeros(4)
        for y in range(5):
            for x in range(7):
                want += sem.probs[y, x]
        want /= want.sum()
        assert np.abs(hist - want).max() < 1e-12
        assert hist.sum() == pytest.approx(1.0, abs=1e-9)


def two_stage_reference(gist, hist, clusters, k):
    """Exhaustive scan straight from the selection rule."""
    scored = sorted(clusters, key=lambda c: (np.linalg.norm(gist - c.center), c.id))
    short = scored[:k]
    best = None
    for c in short:
        sim = cosine_similarity(hist, c.histogram)
        if best is None or sim > best[0] or (sim == best[0] and c.id < best[1].id):
            best = (sim, c)
    return best[1].id


class TestSelectCluster:
    def make_clusters(self):
        return [
            FakeCluster(0, np.array([0.0, 0.0]), np.array([1.0, 0.0, 0.0])),
            FakeCluster(1, np.array([1.0, 0.0]), np.array([0.0, 1.0, 0.0])),
            FakeCluster(2, np.array([5.0, 5.0]), np.array([0.0, 0.0, 1.0])),
        ]

    def test_single_cluster(self):
        only = [FakeCluster(7, np.zeros(3), np.ones(2))]
        assert select_cluster(np.ones(3), np.ones(2), only, k=3) == 7

    def test_k1_is_pure_nearest_gist(self):
        clusters = self.make_clusters()
        # nearest by gist is 1; its histogram is orthogonal to the query
        assert select_cluster(np.array([0.9, 0.0]), np.array([1.0, 0.0, 0.0]),
                              clusters, k=1) == 1

    def test_semantic_rerank_inside_topk(self):
        clusters = self.make_clusters()
        # top-2 by gist: {1, 0}; semantics prefer 0
        got = select_cluster(np.array([0.9, 0.0]), np.array([1.0, 0.0, 0.0]),
                             clusters, k=2)
        assert got == 0
        assert got == two_stage_reference(np.array([0.9, 0.0]),
                                          np.array([1.0, 0.0, 0.0]), clusters, 2)

    def test_matches_reference_on_random_instances(self, rng):
        for _ in range(25):
            clusters = [FakeCluster(i, rng.random(4), rng.random(3))
                        for i in range(6)]
            gist = rng.random(4)
            hist = rng.random(3)
            k = int(rng.integers(1, 7))
            assert select_cluster(gist, hist, clusters, k) == \
                two_stage_reference(gist, hist, clusters, k)

    def test_choice_always_in_topk(self, rng):
        for _ in range(20):
            clusters = [FakeCluster(i, rng.random(4), rng.random(3))
                        for i in range(8)]
            gist = rng.random(4)
            k = 3
            top = sorted(clusters, key=lambda c: (np.linalg.norm(gist - c.center), c.id))[:k]
            got = select_cluster(gist, rng.random(3), clusters, k)
            assert got in [c.id for c in top]

    def test_histogram_scale_invariance(self, rng):
        clusters = [FakeCluster(i, rng.random(4), rng.random(3)) for i in range(5)]
        gist = rng.random(4)
        hist = rng.random(3)
        base = select_cluster(gist, hist, clusters, k=4)
        for scale in (0.001, 0.5, 7.0, 1e6):
            assert select_cluster(gist, hist * scale, clusters, k=4) == base

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            select_cluster(np.zeros(2), np.zeros(2), [], k=1)

    def test_zero_vector_cosine(self):
        assert cosine_similarity(np.zeros(3), np.ones(3)) == 0.0
