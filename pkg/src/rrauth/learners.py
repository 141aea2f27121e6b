"""Regression engines behind the reference functions.

Two trainers are provided: a CART regression tree grown by exhaustive
variance-reduction splits (the production model) and a Gaussian-kernel
machine (binary max-margin classifier and epsilon-insensitive regressor)
whose dual is solved by pairwise coordinate ascent. Fit quality is reported
as RMSE/MAE in mV plus wall-clock training time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "DtParams",
    "DtLeaf",
    "DtSplit",
    "DtModel",
    "KernelModel",
    "FitReport",
    "train_dt",
    "predict_dt",
    "predict_curve",
    "count_leaves",
    "empirical_risk",
    "gaussian_kernel",
    "train_svm_binary",
    "train_svr",
    "kernel_predict",
    "kernel_predict_batch",
    "fit_report",
]


# ---------------------------------------------------------------------------
# decision tree regression


@dataclass(frozen=True)
class DtParams:
    min_leaf_size: int = 4
    max_depth: int = 32


@dataclass(frozen=True)
class DtLeaf:
    mean: float
    count: int


@dataclass(frozen=True)
class DtSplit:
    feature: int
    threshold: float
    left: "DtNode"
    right: "DtNode"


DtNode = Union[DtLeaf, DtSplit]


@dataclass(frozen=True)
class DtModel:
    root: DtNode
    n_features: int
    params: DtParams
    y_min: float
    y_max: float


def _sse(y: np.ndarray) -> float:
    return float(np.sum((y - y.mean()) ** 2))


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exhaustive scan over every feature's sorted unique midpoints.

    Returns (feature, threshold) minimizing the summed child SSE, or None if
    no split leaves both children with at least `min_leaf` samples. Ties go
    to the lowest feature index, then the lowest threshold.
    """
    n = y.size
    best_score = np.inf
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        yo = y[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]
        for i in cuts:
            nl = int(i) + 1
            if nl < min_leaf or n - nl < min_leaf:
                continue
            score = _sse(yo[:nl]) + _sse(yo[nl:])
            if score < best_score:
                best_score = score
                best = (f, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, params: DtParams) -> DtNode:
    n = y.size
    if n < 2 * params.min_leaf_size or depth >= params.max_depth or np.ptp(y) == 0:
        return DtLeaf(mean=float(y.mean()), count=n)
    best = _best_split(X, y, params.min_leaf_size)
    if best is None:
        return DtLeaf(mean=float(y.mean()), count=n)
    feature, threshold = best
    mask = X[:, feature] <= threshold
    return DtSplit(
        feature=feature,
        threshold=threshold,
        left=_grow(X[mask], y[mask], depth + 1, params),
        right=_grow(X[~mask], y[~mask], depth + 1, params),
    )


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def train_dt(X, y, params: DtParams = DtParams()) -> DtModel:
    """Grow a greedy variance-reduction regression tree.

    Splitting stops when a node is too small to yield two legal children,
    the depth limit is reached, or the node targets are constant. Fully
    deterministic: identical inputs produce identical trees.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError(f"length mismatch: {X.shape[0]} rows vs {y.size} targets")
    if y.size == 0:
        raise ValueError("empty training set")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    if params.min_leaf_size < 1 or params.max_depth < 0:
        raise ValueError("min_leaf_size must be >= 1 and max_depth >= 0")
    root = _grow(X, y, 0, params)
    return DtModel(root=root, n_features=X.shape[1], params=params,
                   y_min=float(y.min()), y_max=float(y.max()))


def predict_dt(model: DtModel, x) -> float:
    """Root-to-leaf traversal; left branch iff x[feature] <= threshold."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.size}")
    node = model.root
    while isinstance(node, DtSplit):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.mean


def predict_curve(model: DtModel, length: int) -> np.ndarray:
    """Predictions at scalar positions 0..length-1 (position-only models)."""
    if model.n_features != 1:
        raise ValueError("predict_curve requires a single-feature model")
    return np.array([predict_dt(model, [j]) for j in range(length)])


def count_leaves(model: DtModel) -> int:
    def walk(node: DtNode) -> int:
        if isinstance(node, DtLeaf):
            return 1
        return walk(node.left) + walk(node.right)

    return walk(model.root)


def empirical_risk(predict: Callable, X, y) -> float:
    """Mean absolute deviation of a predictor over a labeled set."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty input")
    if X.shape[0] != y.size:
        raise ValueError(f"length mismatch: {X.shape[0]} rows vs {y.size} targets")
    preds = np.array([predict(row) for row in X])
    return float(np.mean(np.abs(preds - y)))


# ---------------------------------------------------------------------------
# Gaussian-kernel machines


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Kernel expansion f(x) = sum_i coef_i k(x, x_i) + b.

    In classification mode coef_i = y_i * a_i with duals a in [0, C] and
    sum a_i y_i = 0; in regression mode coef_i is the signed coefficient in
    [-C, C] with sum coef_i = 0. `objective_history` holds the dual objective
    after each solver sweep.
    """

    mode: str  # "classification" | "regression"
    X: np.ndarray
    y: np.ndarray
    coef: np.ndarray
    dual: np.ndarray  # a_i (classification) or the stacked box variables (regression)
    b: float
    kernel_scale: float
    C: float
    epsilon: float | None
    objective_history: tuple[float, ...] = field(default_factory=tuple)


def gaussian_kernel(a, b, scale: float) -> float:
    """k(a, b) = exp(-||a - b||^2 / (2 scale^2)); k(x, x) = 1."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    d = a - b
    return float(np.exp(-np.dot(d, d) / (2.0 * scale * scale)))


def _gram(X: np.ndarray, scale: float) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.exp(-d2 / (2.0 * scale * scale))


def _solve_box_dual(K: np.ndarray, z: np.ndarray, c: np.ndarray, box: float,
                    idx: np.ndarray, tol: float, max_sweeps: int):
    """Maximize W(g) = c.g - 1/2 sum_mm' g_m g_m' z_m z_m' K[idx_m, idx_m']
    subject to sum z_m g_m = 0 and 0 <= g_m <= box.

    Pairwise coordinate ascent on the maximal violating pair; each update
    solves the two-variable subproblem exactly, so the objective never
    decreases. Stops when the KKT violation drops to `tol` or after
    `max_sweeps` passes of len(g) updates.
    """
    m = z.size
    n = K.shape[0]
    gamma = np.zeros(m)
    fx = np.zeros(n)  # raw kernel expansion at each distinct point
    history: list[float] = []
    converged = False
    for _ in range(max_sweeps):
        for _ in range(m):
            zg = z * c - fx[idx]
            up = ((z > 0) & (gamma < box)) | ((z < 0) & (gamma > 0))
            low = ((z < 0) & (gamma < box)) | ((z > 0) & (gamma > 0))
            if not up.any() or not low.any():
                converged = True
                break
            i = int(np.argmax(np.where(up, zg, -np.inf)))
            j = int(np.argmin(np.where(low, zg, np.inf)))
            gap = zg[i] - zg[j]
            if gap <= tol:
                converged = True
                break
            xi, xj = int(idx[i]), int(idx[j])
            quad = max(K[xi, xi] + K[xj, xj] - 2.0 * K[xi, xj], 1e-12)
            t = z[i] * gap / quad
            # keep both variables in the box; the paired move preserves sum z g
            s = z[i] * z[j]
            lo_t = max(-gamma[i], (gamma[j] - box) if s > 0 else -gamma[j])
            hi_t = min(box - gamma[i], gamma[j] if s > 0 else box - gamma[j])
            t = min(max(t, lo_t), hi_t)
            if t == 0.0:
                converged = True
                break
            gamma[i] = min(max(gamma[i] + t, 0.0), box)
            gamma[j] = min(max(gamma[j] - s * t, 0.0), box)
            fx += (t * z[i]) * (K[xi] - K[xj])
        w = float(c @ gamma - 0.5 * np.dot(z * gamma, fx[idx]))
        history.append(w)
        if converged:
            break

    zg = z * c - fx[idx]
    interior = (gamma > 1e-8 * box) & (gamma < box * (1.0 - 1e-8))
    if interior.any():
        b = float(zg[interior].mean())
    else:
        up = ((z > 0) & (gamma < box)) | ((z < 0) & (gamma > 0))
        low = ((z < 0) & (gamma < box)) | ((z > 0) & (gamma > 0))
        if up.any() and low.any():
            b = float((np.max(zg[up]) + np.min(zg[low])) / 2.0)
        else:
            b = float(zg.mean())
    return gamma, b, history


def train_svm_binary(X, y, C: float = 1.0, kernel_scale: float = 0.35,
                     tol: float = 1e-3, max_sweeps: int = 200) -> KernelModel:
    """Train the binary max-margin classifier on labels in {-1, +1}."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError(f"length mismatch: {X.shape[0]} rows vs {y.size} labels")
    if y.size < 2:
        raise ValueError("need at least 2 training points")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    if kernel_scale <= 0:
        raise ValueError(f"kernel_scale must be > 0, got {kernel_scale}")

    K = _gram(X, kernel_scale)
    idx = np.arange(y.size)
    alpha, b, history = _solve_box_dual(K, y.copy(), np.ones(y.size), C, idx,
                                        tol, max_sweeps)
    return KernelModel(mode="classification", X=X, y=y, coef=y * alpha,
                       dual=alpha, b=b, kernel_scale=kernel_scale, C=C,
                       epsilon=None, objective_history=tuple(history))


def auto_epsilon(y) -> float:
    """Insensitivity-tube width heuristic: interquartile range / 13.49."""
    y = np.asarray(y, dtype=float)
    q75, q25 = np.percentile(y, [75, 25])
    return float((q75 - q25) / 13.49)


def train_svr(X, y, C: float = 1.0, epsilon: float | None = None,
              kernel_scale: float = 0.35, tol: float = 1e-3,
              max_sweeps: int = 200) -> KernelModel:
    """Train the epsilon-insensitive kernel regressor.

    The regression dual is the same box-constrained QP as the classifier,
    doubled: one nonnegative variable per side of the tube. Both share the
    coordinate-ascent core. `epsilon=None` selects the IQR/13.49 heuristic.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size:
        raise ValueError(f"length mismatch: {X.shape[0]} rows vs {y.size} targets")
    if y.size < 2:
        raise ValueError("need at least 2 training points")
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    if epsilon is None:
        epsilon = auto_epsilon(y)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if kernel_scale <= 0:
        raise ValueError(f"kernel_scale must be > 0, got {kernel_scale}")

    n = y.size
    K = _gram(X, kernel_scale)
    z = np.concatenate([np.ones(n), -np.ones(n)])
    c = np.concatenate([y - epsilon, -y - epsilon])
    idx = np.concatenate([np.arange(n), np.arange(n)])
    gamma, b, history = _solve_box_dual(K, z, c, C, idx, tol, max_sweeps)
    beta = gamma[:n] - gamma[n:]
    return KernelModel(mode="regression", X=X, y=y, coef=beta, dual=gamma,
                       b=b, kernel_scale=kernel_scale, C=C, epsilon=float(epsilon),
                       objective_history=tuple(history))


def kernel_predict(model: KernelModel, x) -> float:
    """Raw kernel expansion value f(x); take the sign for a class label."""
    x = np.asarray(x, dtype=float).ravel()
    d = model.X - x
    k = np.exp(-np.sum(d * d, axis=1) / (2.0 * model.kernel_scale ** 2))
    return float(model.coef @ k + model.b)


def kernel_predict_batch(model: KernelModel, X) -> np.ndarray:
    X = _as_matrix(X)
    sq_m = np.sum(model.X * model.X, axis=1)
    sq_x = np.sum(X * X, axis=1)
    d2 = sq_x[:, None] + sq_m[None, :] - 2.0 * (X @ model.X.T)
    np.maximum(d2, 0.0, out=d2)
    k = np.exp(-d2 / (2.0 * model.kernel_scale ** 2))
    return k @ model.coef + model.b


# ---------------------------------------------------------------------------
# fit reporting


@dataclass(frozen=True)
class FitReport:
    rmse: float
    mae: float
    train_time: float

    def __post_init__(self) -> None:
        if self.rmse < 0 or self.mae < 0:
            raise ValueError("rmse and mae must be >= 0")
        if self.rmse < self.mae - 1e-12 * (1.0 + self.mae):
            raise ValueError(f"rmse {self.rmse} < mae {self.mae}")


def fit_report(predict: Callable, X, y, train_time: float) -> FitReport:
    """RMSE and MAE of a predictor over a labeled set, plus training time."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("empty input")
    if X.shape[0] != y.size:
        raise ValueError(f"length mismatch: {X.shape[0]} rows vs {y.size} targets")
    err = np.array([predict(row) for row in X]) - y
    return FitReport(rmse=float(np.sqrt(np.mean(err * err))),
                     mae=float(np.mean(np.abs(err))),
                     train_time=float(train_time))
