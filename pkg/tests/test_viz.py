import numpy as np
import pandas
import pytest
from scipy.spatial.distance import pdist, squareform

from errors import ContractViolation
from evaluation.viz import (
    embed_latents,
    joint_probabilities,
    kl_divergence,
    pca,
    perplexity_search,
    student_t_affinities,
    tsne,
    write_points_csv,
)


@pytest.fixture
def two_clusters():
    rng = np.random.default_rng(0)
    left = rng.normal(0.0, 0.1, size=(15, 5))
    right = rng.normal(0.0, 0.1, size=(15, 5)) + 10.0
    return np.vstack([left, right]), np.array([0] * 15 + [1] * 15)


class TestPca:
    def test_rank_one_data(self):
        t = np.linspace(-1.0, 1.0, 12)[:, None]
        x = t * np.array([[1.0, -2.0, 2.0]]) + 5.0
        result = pca(x, 2)
        assert result.ratios[0] == pytest.approx(1.0)
        assert result.ratios[1] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(result.reconstruct(), x, atol=1e-10)

    def test_matches_covariance_eigenvectors(self):
        x = np.random.default_rng(4).normal(size=(40, 5)) * np.array([3.0, 2.0, 1.5, 1.0, 0.5])
        result = pca(x, 3)
        centered = x - x.mean(axis=0)
        eigenvalues, eigenvectors = np.linalg.eigh(np.cov(centered, rowvar=False))
        order = np.argsort(eigenvalues)[::-1]
        np.testing.assert_allclose(result.ratios, eigenvalues[order[:3]] / eigenvalues.sum(), rtol=1e-10)
        overlap = np.abs(eigenvectors[:, order[:3]].T @ result.components)
        np.testing.assert_allclose(overlap, np.eye(3), atol=1e-8)
        np.testing.assert_allclose(result.projected, centered @ result.components, atol=1e-10)

    def test_sign_convention(self):
        x = np.random.default_rng(1).normal(size=(20, 4))
        components = pca(x, 3).components
        pivots = np.argmax(np.abs(components), axis=0)
        assert np.all(components[pivots, np.arange(3)] > 0)

    def test_sign_is_stable_under_negation(self):
        x = np.random.default_rng(2).normal(size=(20, 4))
        np.testing.assert_allclose(pca(x, 2).components, pca(-x, 2).components, atol=1e-10)

    def test_components_are_orthonormal(self):
        components = pca(np.random.default_rng(3).normal(size=(30, 6)), 4).components
        np.testing.assert_allclose(components.T @ components, np.eye(4), atol=1e-10)

    @pytest.mark.parametrize("rows, keep", [(1, 1), (10, 0), (10, 4), (2, 3)])
    def test_invalid_keep(self, rows, keep):
        with pytest.raises(ContractViolation):
            pca(np.random.default_rng(0).normal(size=(rows, 3)), keep)


class TestAffinities:
    def test_entropies_match_perplexity(self, two_clusters):
        x, _ = two_clusters
        conditional, entropies = perplexity_search(squareform(pdist(x, "sqeuclidean")), 5.0)
        np.testing.assert_allclose(entropies, np.log(5.0), atol=1e-6)
        np.testing.assert_allclose(conditional.sum(axis=1), 1.0)
        assert np.all(np.diag(conditional) == 0.0)

    def test_joint_is_symmetric_and_normalized(self, two_clusters):
        p = joint_probabilities(two_clusters[0], 5.0)
        np.testing.assert_allclose(p, p.T)
        assert p.sum() == pytest.approx(1.0)

    def test_student_t(self):
        y = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        q, kernel = student_t_affinities(y)
        assert kernel[0, 1] == pytest.approx(0.5)
        assert kernel[0, 2] == pytest.approx(0.2)
        assert q.sum() == pytest.approx(1.0)
        assert kl_divergence(q, q) == pytest.approx(0.0)


class TestTsne:
    def test_separates_clusters(self, two_clusters):
        x, labels = two_clusters
        points = tsne(x, perplexity=5.0, iterations=300, seed=0).points
        left, right = points[labels == 0], points[labels == 1]
        gap = np.linalg.norm(left.mean(axis=0) - right.mean(axis=0))
        spread = max(
            np.linalg.norm(left - left.mean(axis=0), axis=1).mean(),
            np.linalg.norm(right - right.mean(axis=0), axis=1).mean(),
        )
        assert gap > 2.0 * spread

        distances = squareform(pdist(points))
        np.fill_diagonal(distances, np.inf)
        purity = np.mean(labels[np.argmin(distances, axis=1)] == labels)
        assert purity >= 0.9

    def test_kl_never_rises_after_exaggeration(self, two_clusters):
        result = tsne(two_clusters[0], perplexity=5.0, iterations=120, exaggeration_iters=50, seed=1)
        tail = np.asarray(result.kl_trace[49:])
        assert len(result.kl_trace) == 120
        assert np.all(np.diff(tail) <= 0.0)

    def test_same_seed_same_points(self, two_clusters):
        first = tsne(two_clusters[0], perplexity=5.0, iterations=60, seed=3)
        second = tsne(two_clusters[0], perplexity=5.0, iterations=60, seed=3)
        np.testing.assert_array_equal(first.points, second.points)

    def test_perplexity_too_large(self, two_clusters):
        with pytest.raises(ContractViolation):
            tsne(two_clusters[0], perplexity=11.0)


class TestEmbedLatents:
    def test_keep_is_clamped(self, two_clusters, tmp_path):
        x, labels = two_clusters
        embedding = embed_latents(x, labels, pca_keep=50, perplexity=5.0, iterations=50)
        assert embedding.pca_keep == 5
        assert embedding.points.shape == (30, 2)
        assert embedding.explained_variance == pytest.approx(1.0)

        path = tmp_path / "points.csv"
        write_points_csv(embedding, str(path))
        frame = pandas.read_csv(path)
        assert list(frame.columns) == ["x", "y", "label"]
        assert frame["label"].tolist() == labels.tolist()

    def test_label_count_mismatch(self, two_clusters):
        with pytest.raises(ContractViolation):
            embed_latents(two_clusters[0], np.zeros(3), perplexity=5.0)
