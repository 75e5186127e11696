"""
Exact t-SNE for two-dimensional views of a feature space.

Bandwidths are found per point by bisection on the Gaussian precision until
the conditional distribution reaches the target perplexity. The embedding
starts from a seeded N(0, 1e-4^2) draw and follows momentum gradient descent
with per-coordinate adaptive gains, with early exaggeration of the joint
probabilities over the first iterations.
"""

###########
# IMPORTS #
###########

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial.distance import pdist, squareform

from screamkit.featureset import FeatureVector

logger = logging.getLogger(__name__)

EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_SWITCH = 250
INITIAL_MOMENTUM = 0.5
FINAL_MOMENTUM = 0.8
INIT_SCALE = 1e-4
MIN_GAIN = 0.01
KL_EVERY = 50
_EPS = np.finfo(np.float64).tiny


class TsneError(ValueError):
    """Raised for inputs the projection cannot handle."""


@dataclass(frozen=True, eq=False)
class Projection2D:
    points: np.ndarray
    labels: tuple[str | None, ...]
    perplexity: float
    n_iter: int
    seed: int
    initial_kl: float
    final_kl: float
    kl_history: list[tuple[int, float]] = field(default_factory=list)
    feature_set: str | None = None
    partition: str = "all"
    block_refs: tuple[tuple[str, int], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_set": self.feature_set,
            "partition": self.partition,
            "perplexity": self.perplexity,
            "n_iter": self.n_iter,
            "seed": self.seed,
            "initial_kl": self.initial_kl,
            "final_kl": self.final_kl,
            "kl_history": [[i, kl] for i, kl in self.kl_history],
            "points": self.points.tolist(),
            "labels": list(self.labels),
            "block_refs": [[s, i] for s, i in self.block_refs],
        }


##############
# AFFINITIES #
##############


def _conditional_row(
    dist: np.ndarray, target_entropy: float, tol: float, max_steps: int
) -> tuple[np.ndarray, float]:
    """Conditional distribution of one point over its neighbours and its entropy (nats)."""
    shifted = dist - dist.min()
    beta, lo, hi = 1.0, 0.0, np.inf
    for _ in range(max_steps):
        weights = np.exp(-beta * shifted)
        total = weights.sum()
        entropy = np.log(total) + beta * float(shifted @ weights) / total
        gap = entropy - target_entropy
        if abs(gap) < tol:
            break
        if gap > 0:
            lo = beta
            beta = beta * 2 if hi == np.inf else (beta + hi) / 2
        else:
            hi = beta
            beta = (beta + lo) / 2
    return weights / total, entropy


def joint_probabilities(
    X: np.ndarray, perplexity: float, tol: float = 1e-5, max_steps: int = 200
) -> tuple[np.ndarray, np.ndarray]:
    """
    Symmetric joint probabilities of the rows of X.

    Returns:
        (P, perplexities): P sums to 1 with a zero diagonal; perplexities are
        those of the conditional distributions actually reached.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < 2:
        raise TsneError(f"At least two points are needed; got {n}")
    dist = squareform(pdist(X, "sqeuclidean"))
    conditional = np.zeros((n, n))
    entropies = np.empty(n)
    target = np.log(perplexity)
    for i in range(n):
        others = np.r_[0:i, i + 1 : n]
        row, entropies[i] = _conditional_row(dist[i, others], target, tol, max_steps)
        conditional[i, others] = row
    P = (conditional + conditional.T) / (2 * n)
    return P, np.exp(entropies)


def student_affinities(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalised Student-t affinities Q and the unnormalised kernel."""
    kernel = 1.0 / (1.0 + squareform(pdist(Y, "sqeuclidean")))
    np.fill_diagonal(kernel, 0.0)
    return kernel / kernel.sum(), kernel


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(max(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], _EPS))), 0.0))


def kl_gradient(P: np.ndarray, Q: np.ndarray, kernel: np.ndarray, Y: np.ndarray) -> np.ndarray:
    weights = (P - Q) * kernel
    return 4.0 * (np.diag(weights.sum(axis=1)) - weights) @ Y


#############
# EMBEDDING #
#############


def _as_matrix(X: Sequence[FeatureVector] | np.ndarray) -> np.ndarray:
    if isinstance(X, np.ndarray):
        matrix = np.asarray(X, dtype=np.float64)
    else:
        matrix = np.stack([np.asarray(v.values, dtype=np.float64).ravel() for v in X])
    return matrix.reshape(len(matrix), -1)


def tsne(
    X: Sequence[FeatureVector] | np.ndarray,
    perplexity: float = 30.0,
    n_iter: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    labels: Sequence[str | None] | None = None,
) -> Projection2D:
    """
    Project X into two dimensions.

    Raises:
        TsneError: if n < 3 * perplexity, the input is non-finite or the
            iteration count is not positive.
    """
    matrix = _as_matrix(X)
    n = len(matrix)
    if perplexity <= 0 or n < 3 * perplexity:
        raise TsneError(f"{n} points are too few for perplexity {perplexity} (need n >= 3 * perplexity)")
    if not np.all(np.isfinite(matrix)):
        raise TsneError("Input features contain non-finite values.")
    if n_iter < 1:
        raise TsneError(f"Iteration count must be positive; got {n_iter}")

    vectors = [] if isinstance(X, np.ndarray) else list(X)
    if labels is None:
        labels = [v.label for v in vectors] if vectors else [None] * n
    block_refs = tuple((v.block_ref.source_id, v.block_ref.block_index) for v in vectors)
    feature_set = str(vectors[0].set_id) if vectors else None

    P, reached = joint_probabilities(matrix, perplexity)
    logger.debug(f"Conditional perplexities span {reached.min():.3f} to {reached.max():.3f}")
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, INIT_SCALE, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)

    Q, _ = student_affinities(Y)
    initial_kl = kl_divergence(P, Q)
    history = [(0, initial_kl)]
    for it in range(n_iter):
        target = P * EXAGGERATION if it < EXAGGERATION_ITERS else P
        momentum = INITIAL_MOMENTUM if it < MOMENTUM_SWITCH else FINAL_MOMENTUM
        Q, kernel = student_affinities(Y)
        grad = kl_gradient(target, Q, kernel, Y)
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        if (it + 1) % KL_EVERY == 0 or it + 1 == n_iter:
            kl = kl_divergence(P, student_affinities(Y)[0])
            history.append((it + 1, kl))
            logger.debug(f"t-SNE iteration {it + 1}: KL = {kl:.5f}")

    final_kl = history[-1][1]
    if not np.isfinite(final_kl) or not np.all(np.isfinite(Y)):
        raise TsneError("t-SNE diverged; lower the learning rate.")
    logger.info(f"t-SNE on {n} points: KL {initial_kl:.4f} -> {final_kl:.4f}")
    return Projection2D(
        points=Y,
        labels=tuple(labels),
        perplexity=float(perplexity),
        n_iter=n_iter,
        seed=seed,
        initial_kl=initial_kl,
        final_kl=final_kl,
        kl_history=history,
        feature_set=feature_set,
        block_refs=block_refs,
    )
