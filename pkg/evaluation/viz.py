"""
Latent-space embeddings: PCA followed by exact t-SNE.

t-SNE here is the exact O(N²) formulation (no tree approximation), meant for
desk-scale point counts. After early exaggeration the optimizer only accepts
steps that do not raise KL(P‖Q); a rejected step halves the learning rate.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas
from scipy.spatial.distance import pdist, squareform
from sklearn.decomposition import PCA

import config
from errors import ContractViolation

logger = logging.getLogger(__name__)

_FLOOR = 1e-12


@dataclass
class PcaResult:
    projected: np.ndarray
    ratios: np.ndarray
    components: np.ndarray
    mean: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.projected @ self.components.T + self.mean


def pca(latents: np.ndarray, keep: int) -> PcaResult:
    """
    Project centered data onto its top `keep` principal axes.

    Fitted with a full SVD. Each component is then signed so its
    largest-magnitude loading is positive; the projection flips with it.
    Components beyond the data rank get explained-variance ratio 0.

    Raises:
        ContractViolation: If N < 2 or keep is outside [1, min(N, d)]
    """
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ContractViolation(f"pca needs an N×d matrix with N ≥ 2, got {x.shape}")
    n, d = x.shape
    if keep < 1 or keep > min(n, d):
        raise ContractViolation(f"keep={keep} outside [1, {min(n, d)}]")
    model = PCA(n_components=keep, svd_solver="full")
    projected = model.fit_transform(x)
    components = model.components_.T
    pivots = np.argmax(np.abs(components), axis=0)
    signs = np.where(components[pivots, np.arange(keep)] < 0, -1.0, 1.0)
    ratios = np.nan_to_num(model.explained_variance_ratio_, nan=0.0)
    return PcaResult(projected=projected * signs, ratios=ratios, components=components * signs, mean=model.mean_)


def _row_distribution(distances: np.ndarray, beta: float) -> Tuple[np.ndarray, float]:
    shifted = distances - distances.min()
    weights = np.exp(-shifted * beta)
    total = weights.sum()
    probabilities = weights / total
    entropy = float(np.log(total) + beta * np.sum(shifted * probabilities))
    return probabilities, entropy


def perplexity_search(
    sq_distances: np.ndarray, perplexity: float, tol: float = 1e-10, max_iter: int = 200
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Conditional P_{j|i} rows whose entropy is log(perplexity), by bisection on
    the Gaussian precision β_i.

    Returns:
        (conditional probabilities N×N with zero diagonal, per-row entropies)
    """
    n = sq_distances.shape[0]
    target = np.log(perplexity)
    conditional = np.zeros((n, n))
    entropies = np.zeros(n)
    for i in range(n):
        row = np.delete(sq_distances[i], i)
        beta, low, high = 1.0, 0.0, np.inf
        probabilities, entropy = _row_distribution(row, beta)
        for _ in range(max_iter):
            if abs(entropy - target) < tol:
                break
            if entropy > target:
                low = beta
                beta = beta * 2.0 if np.isinf(high) else (beta + high) / 2.0
            else:
                high = beta
                beta = (beta + low) / 2.0
            probabilities, entropy = _row_distribution(row, beta)
        conditional[i, np.arange(n) != i] = probabilities
        entropies[i] = entropy
    return conditional, entropies


def joint_probabilities(x: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized input affinities P, summing to 1."""
    conditional, _ = perplexity_search(squareform(pdist(x, "sqeuclidean")), perplexity)
    joint = (conditional + conditional.T) / (2.0 * x.shape[0])
    return joint / joint.sum()


def student_t_affinities(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Output affinities Q and the unnormalized kernel 1/(1 + ‖y_i − y_j‖²)."""
    kernel = 1.0 / (1.0 + squareform(pdist(y, "sqeuclidean")))
    np.fill_diagonal(kernel, 0.0)
    return kernel / kernel.sum(), kernel


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], _FLOOR))))


def _gradient(p: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, float]:
    q, kernel = student_t_affinities(y)
    weights = (p - q) * kernel
    grad = 4.0 * (np.diag(weights.sum(axis=1)) - weights) @ y
    return grad, kl_divergence(p, q)


@dataclass
class TsneResult:
    points: np.ndarray
    kl_trace: List[float] = field(default_factory=list)
    rejected_steps: int = 0


def tsne(
    x: np.ndarray,
    perplexity: float = config.TSNE_PERPLEXITY,
    iterations: int = config.TSNE_ITERATIONS,
    seed: int = 0,
    exaggeration: float = config.TSNE_EXAGGERATION,
    exaggeration_iters: int = config.TSNE_EXAGGERATION_ITERS,
    learning_rate: float = config.TSNE_LEARNING_RATE,
) -> TsneResult:
    """
    Exact t-SNE to two dimensions.

    Raises:
        ContractViolation: If N < 3·perplexity or the input is not N×d
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractViolation(f"tsne needs an N×d matrix, got {x.shape}")
    n = x.shape[0]
    if perplexity <= 0 or n < 3 * perplexity:
        raise ContractViolation(f"perplexity {perplexity} too large for N={n} (need N ≥ 3·perplexity)")

    p = np.maximum(joint_probabilities(x, perplexity), _FLOOR)
    np.fill_diagonal(p, 0.0)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    step_size = learning_rate
    trace: List[float] = []
    rejected = 0
    current_kl = None

    for it in range(iterations):
        exaggerating = it < exaggeration_iters
        momentum = 0.5 if exaggerating else 0.8
        grad, _ = _gradient(p * exaggeration if exaggerating else p, y)
        gains = np.where(np.sign(grad) != np.sign(velocity), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        proposed_velocity = momentum * velocity - step_size * gains * grad
        proposed = y + proposed_velocity
        proposed = proposed - proposed.mean(axis=0)
        proposed_kl = kl_divergence(p, student_t_affinities(proposed)[0])

        if exaggerating or current_kl is None or proposed_kl <= current_kl:
            y, velocity, current_kl = proposed, proposed_velocity, proposed_kl
        else:
            rejected += 1
            step_size *= 0.5
            velocity = np.zeros_like(y)
        trace.append(current_kl)

    if trace:
        logger.info("✓ t-SNE on %d points: final KL %.4f (%d rejected steps)", n, trace[-1], rejected)
    return TsneResult(points=y, kl_trace=trace, rejected_steps=rejected)


@dataclass
class Embedding2D:
    points: np.ndarray
    labels: np.ndarray
    pca_keep: int
    perplexity: float
    iterations: int
    final_kl: Optional[float]
    explained_variance: float

    def to_frame(self) -> pandas.DataFrame:
        return pandas.DataFrame({"x": self.points[:, 0], "y": self.points[:, 1], "label": self.labels})


def embed_latents(
    latents: np.ndarray,
    labels: np.ndarray,
    pca_keep: int = config.PCA_KEEP,
    perplexity: float = config.TSNE_PERPLEXITY,
    iterations: int = config.TSNE_ITERATIONS,
    seed: int = 0,
) -> Embedding2D:
    """PCA down to at most pca_keep dimensions, then t-SNE to 2-D."""
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if latents.ndim != 2 or len(latents) != len(labels):
        raise ContractViolation(f"latents {latents.shape} do not match {len(labels)} labels")
    keep = min(pca_keep, latents.shape[0], latents.shape[1])
    reduced = pca(latents, keep)
    result = tsne(reduced.projected, perplexity=perplexity, iterations=iterations, seed=seed)
    return Embedding2D(
        points=result.points,
        labels=labels,
        pca_keep=keep,
        perplexity=perplexity,
        iterations=iterations,
        final_kl=result.kl_trace[-1] if result.kl_trace else None,
        explained_variance=float(reduced.ratios.sum()),
    )


def write_points_csv(embedding: Embedding2D, path: str) -> None:
    """x, y, label rows for external plotting."""
    embedding.to_frame().to_csv(path, index=False, float_format="%.10g")
