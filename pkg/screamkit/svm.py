"""
Kernel support vector machine trained by sequential minimal optimisation.

Each binary machine solves the soft-margin dual

    min_a  1/2 a'Qa - e'a   s.t.  0 <= a_t <= C,  y'a = 0,  Q_st = y_s y_t K(x_s, x_t)

by repeatedly optimising the maximal violating pair. Multi-class models are
one-vs-one with majority voting.
"""

###########
# IMPORTS #
###########

import logging
from collections import OrderedDict
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from itertools import combinations
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist

from screamkit.featureset import FeatureSetId, FeatureVector, Normalizer

logger = logging.getLogger(__name__)

KernelName = Literal["rbf", "linear"]
ETA_FLOOR = 1e-12
OBJECTIVE_SLACK = 1e-9

##########
# ERRORS #
##########


class SvmTrainingError(ValueError):
    """Raised for unusable training data or a failing optimisation."""


class ShapeMismatchError(ValueError):
    """Raised when an input does not match the model's expected shape."""


##########
# KERNEL #
##########


@dataclass(frozen=True)
class Kernel:
    name: KernelName = "rbf"
    gamma: float = 1.0

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Gram matrix between the rows of A and B."""
        if self.name == "linear":
            return A @ B.T
        return np.exp(-self.gamma * cdist(A, B, "sqeuclidean"))

    def diagonal(self, A: np.ndarray) -> np.ndarray:
        if self.name == "linear":
            return np.einsum("ij,ij->i", A, A)
        return np.ones(len(A))


def scale_gamma(X: np.ndarray) -> float:
    """1 / (n_features * Var(X)); 1.0 when X has no variance."""
    variance = float(X.var())
    return 1.0 / (X.shape[1] * variance) if variance > 0 else 1.0


class KernelRows:
    """Lazily computed kernel matrix rows with a bounded LRU cache."""

    def __init__(self, X: np.ndarray, kernel: Kernel, max_rows: int = 2048) -> None:
        self.X = X
        self.kernel = kernel
        self.max_rows = max_rows
        self.diag = kernel.diagonal(X)
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()

    def __call__(self, i: int) -> np.ndarray:
        row = self._cache.get(i)
        if row is not None:
            self._cache.move_to_end(i)
            return row
        row = self.kernel(self.X[i : i + 1], self.X)[0]
        self._cache[i] = row
        if len(self._cache) > self.max_rows:
            self._cache.popitem(last=False)
        return row


##########
# SOLVER #
##########


@dataclass
class SmoResult:
    alpha: np.ndarray
    gradient: np.ndarray
    bias: float
    n_iter: int
    converged: bool
    objective_history: list[float] = field(default_factory=list)


def dual_objective(alpha: np.ndarray, gradient: np.ndarray) -> float:
    """e'a - 1/2 a'Qa, evaluated from the gradient G = Qa - e."""
    return float(-0.5 * np.dot(alpha, gradient - 1.0))


def _working_sets(alpha: np.ndarray, y: np.ndarray, C: float) -> tuple[np.ndarray, np.ndarray]:
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    return up, low


def smo_solve(
    rows: Callable[[int], np.ndarray],
    diag: np.ndarray,
    y: np.ndarray,
    C: float,
    tol: float = 1e-3,
    max_iter: int = 100_000,
) -> SmoResult:
    """
    Solve one binary dual problem with maximal-violating-pair SMO.
    Args:
        rows: Returns kernel row K[i, :].
        diag: Kernel diagonal.
        y: Labels in {-1, +1}.
        C: Box constraint.
        tol: Stop once max_up(-yG) - min_low(-yG) < tol.
        max_iter: Iteration cap; hitting it is logged, not raised.
    Returns:
        SmoResult with the dual variables, final gradient and bias.
    Raises:
        SvmTrainingError: if the dual objective decreases.
    """
    n = len(y)
    alpha = np.zeros(n)
    gradient = -np.ones(n)
    history = [0.0]
    converged = False
    n_iter = 0
    for n_iter in range(max_iter):
        up, low = _working_sets(alpha, y, C)
        score = -y * gradient
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        gap = score[i] - score[j]
        if gap < tol:
            converged = True
            break
        K_i, K_j = rows(i), rows(j)
        eta = max(diag[i] + diag[j] - 2.0 * K_i[j], ETA_FLOOR)
        bound_i = C - alpha[i] if y[i] > 0 else alpha[i]
        bound_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(gap / eta, bound_i, bound_j)
        alpha[i] = _snap(alpha[i] + y[i] * step, C)
        alpha[j] = _snap(alpha[j] - y[j] * step, C)
        gradient += y * step * (K_i - K_j)
        objective = dual_objective(alpha, gradient)
        if objective < history[-1] - OBJECTIVE_SLACK * max(1.0, abs(history[-1])):
            raise SvmTrainingError(
                f"Dual objective decreased at iteration {n_iter}: "
                f"{history[-1]:.12g} -> {objective:.12g}"
            )
        history.append(objective)
    else:
        n_iter = max_iter
        logger.warning(f"SMO stopped at max_iter={max_iter} before reaching tol={tol}")
    return SmoResult(
        alpha=alpha,
        gradient=gradient,
        bias=_bias(alpha, gradient, y, C),
        n_iter=n_iter,
        converged=converged,
        objective_history=history,
    )


def _snap(value: float, C: float) -> float:
    """Clip to [0, C], snapping round-off next to a bound onto it."""
    eps = 1e-12 * max(C, 1.0)
    if value <= eps:
        return 0.0
    if value >= C - eps:
        return C
    return value


def _bias(alpha: np.ndarray, gradient: np.ndarray, y: np.ndarray, C: float) -> float:
    """Mean of -y_t G_t over free vectors, else the midpoint of the violating range."""
    score = -y * gradient
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(score[free].mean())
    up, low = _working_sets(alpha, y, C)
    upper = score[up].max() if up.any() else score.max()
    lower = score[low].min() if low.any() else score.min()
    return float((upper + lower) / 2.0)


##########
# MODELS #
##########


@dataclass
class SvmParams:
    C: float = 1.0
    kernel: KernelName = "rbf"
    gamma: float | Literal["scale"] = "scale"
    tol: float = 1e-3
    max_iter: int = 100_000


@dataclass(eq=False)
class BinaryMachine:
    """One-vs-one machine; a positive decision votes for classes[pair[0]]."""

    pair: tuple[int, int]
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    n_iter: int = 0
    objective_history: list[float] = field(default_factory=list, repr=False)
    # Rows of the pair's training matrix that became support vectors
    support_indices: np.ndarray | None = field(default=None, repr=False)

    def decision(self, X: np.ndarray, kernel: Kernel) -> np.ndarray:
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        return kernel(X, self.support_vectors) @ self.dual_coef + self.bias


@dataclass(eq=False)
class SvmModel:
    classes: tuple[str, ...]
    kernel: Kernel
    C: float
    machines: list[BinaryMachine]
    feature_set: FeatureSetId | None = None
    normalizer: Normalizer | None = None

    @property
    def n_features(self) -> int:
        for machine in self.machines:
            if machine.support_vectors.size:
                return int(machine.support_vectors.shape[1])
        if self.normalizer is not None:
            return self.normalizer.dim
        raise ShapeMismatchError("Model holds no support vectors.")


def _as_matrix(
    X: Sequence[FeatureVector] | np.ndarray,
) -> tuple[np.ndarray, FeatureSetId | None]:
    if isinstance(X, np.ndarray):
        matrix = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return matrix, None
    if not X:
        raise SvmTrainingError("No feature vectors given.")
    set_ids = {v.set_id for v in X}
    if len(set_ids) != 1:
        raise SvmTrainingError(f"Mixed feature sets: {sorted(set_ids)}")
    (set_id,) = set_ids
    if set_id is FeatureSetId.FS5:
        raise SvmTrainingError("The SVM takes FS1-FS4 vectors, not FS5 matrices.")
    return np.stack([v.values for v in X]), set_id


def svm_train(
    X: Sequence[FeatureVector] | np.ndarray,
    y: Sequence[str],
    params: SvmParams | None = None,
    classes: Sequence[str] | None = None,
    normalizer: Normalizer | None = None,
) -> SvmModel:
    """
    Train a one-vs-one SVM on already-normalised features.
    Args:
        X: Feature vectors or an (n, d) matrix.
        y: Class label per row.
        params: Hyperparameters; gamma "scale" is resolved on X.
        classes: Class order; classes absent from y are left out of the model.
        normalizer: Stored with the model and applied at prediction time.
    Returns:
        The trained SvmModel.
    Raises:
        SvmTrainingError: on fewer than 2 classes, non-finite features or
            mismatched lengths.
    """
    params = params or SvmParams()
    matrix, set_id = _as_matrix(X)
    labels = list(y)
    if len(labels) != len(matrix):
        raise SvmTrainingError(f"{len(matrix)} feature rows but {len(labels)} labels.")
    if not np.all(np.isfinite(matrix)):
        raise SvmTrainingError("Training features contain non-finite values.")
    order = list(classes) if classes is not None else sorted(set(labels))
    unknown = set(labels) - set(order)
    if unknown:
        raise SvmTrainingError(f"Labels outside the class list: {sorted(unknown)}")
    present = tuple(c for c in order if c in set(labels))
    if len(present) < 2:
        raise SvmTrainingError(f"Need at least 2 classes to train; got {list(present)}")
    gamma = scale_gamma(matrix) if params.gamma == "scale" else float(params.gamma)
    kernel = Kernel(params.kernel, gamma)
    label_array = np.asarray(labels)
    machines = []
    for i, j in combinations(range(len(present)), 2):
        mask = (label_array == present[i]) | (label_array == present[j])
        X_pair = matrix[mask]
        y_pair = np.where(label_array[mask] == present[i], 1.0, -1.0)
        rows = KernelRows(X_pair, kernel)
        result = smo_solve(rows, rows.diag, y_pair, params.C, params.tol, params.max_iter)
        support = result.alpha > 0
        machines.append(
            BinaryMachine(
                pair=(i, j),
                support_vectors=X_pair[support],
                dual_coef=(result.alpha * y_pair)[support],
                bias=result.bias,
                n_iter=result.n_iter,
                objective_history=result.objective_history,
                support_indices=np.flatnonzero(support),
            )
        )
        logger.info(
            f"Trained {present[i]} vs {present[j]}: {len(X_pair)} points, "
            f"{int(support.sum())} support vectors, {result.n_iter} iterations, "
            f"dual objective {result.objective_history[-1]:.6g}"
        )
    return SvmModel(
        classes=present,
        kernel=kernel,
        C=params.C,
        machines=machines,
        feature_set=set_id,
        normalizer=normalizer,
    )


def kkt_violation(
    machine: BinaryMachine, kernel: Kernel, C: float, X: np.ndarray, y: np.ndarray
) -> float:
    """
    Largest KKT violation over a binary machine's training points.
    Args:
        machine: Trained machine.
        kernel: Model kernel.
        C: Box constraint used in training.
        X: The machine's training rows, in training order.
        y: Their labels in {-1, +1}.
    Returns:
        max over t of the margin violation given alpha_t (0, free or C).
    Raises:
        ValueError: for a machine without training indices (e.g. one loaded from disk).
    """
    if machine.support_indices is None:
        raise ValueError("KKT check needs the support indices recorded during training.")
    margins = y * machine.decision(X, kernel)
    alpha = np.zeros(len(X))
    alpha[machine.support_indices] = np.abs(machine.dual_coef)
    at_zero = alpha <= 1e-12 * max(C, 1.0)
    at_c = alpha >= C * (1 - 1e-12)
    free = ~at_zero & ~at_c
    violation = np.zeros(len(X))
    violation[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    violation[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    violation[free] = np.abs(margins[free] - 1.0)
    return float(violation.max()) if len(violation) else 0.0


def _prepare_inputs(model: SvmModel, X: Sequence[FeatureVector] | np.ndarray) -> np.ndarray:
    if isinstance(X, np.ndarray):
        matrix = np.atleast_2d(np.asarray(X, dtype=np.float64))
    else:
        if model.feature_set is not None:
            wrong = {v.set_id for v in X} - {model.feature_set}
            if wrong:
                raise ShapeMismatchError(
                    f"Model expects {model.feature_set} vectors; got {sorted(wrong)}"
                )
        matrix = np.stack([v.values for v in X]) if X else np.zeros((0, model.n_features))
    if matrix.ndim != 2 or matrix.shape[1] != model.n_features:
        raise ShapeMismatchError(
            f"Model expects {model.n_features} features; got shape {matrix.shape}"
        )
    if model.normalizer is not None:
        matrix = model.normalizer.transform(matrix)
    return matrix


def svm_predict_batch(
    model: SvmModel, X: Sequence[FeatureVector] | np.ndarray
) -> tuple[list[str], np.ndarray]:
    """Labels and (n, n_classes) vote counts; vote ties go to the lowest class index."""
    matrix = _prepare_inputs(model, X)
    votes = np.zeros((len(matrix), len(model.classes)), dtype=np.int64)
    rows = np.arange(len(matrix))
    for machine in model.machines:
        i, j = machine.pair
        winner = np.where(machine.decision(matrix, model.kernel) > 0, i, j)
        np.add.at(votes, (rows, winner), 1)
    labels = [model.classes[k] for k in np.argmax(votes, axis=1)]
    return labels, votes


def svm_predict(model: SvmModel, v: FeatureVector | np.ndarray) -> tuple[str, dict[str, int]]:
    """Predict one vector; returns (label, votes per class)."""
    batch: Sequence[FeatureVector] | np.ndarray = (
        [v] if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)[np.newaxis, :]
    )
    labels, votes = svm_predict_batch(model, batch)
    return labels[0], dict(zip(model.classes, votes[0].tolist(), strict=True))
