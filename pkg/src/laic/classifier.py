"""Single-layer softmax classifier over frozen embeddings.

Weights are a (dim, classes) float64 matrix W; logits for an embedding row z
are tau * (z @ W). Cross-entropy and its closed-form gradient live here, as
does the stop-gradient loss variant whose gradient touches only the label
column, the Adam training loop, and the closed-form fixed-point iteration the
stop-gradient loss admits when columns are constrained to the unit sphere.

All arithmetic is float64; float32 appears only when weights are serialized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import featurestore
from .featurestore import FeatureMatrix, LabelVector

UNIT_COLUMN_ATOL = 1e-8

STANDARD_CE = "standard_ce"
SECU = "secu"
LOSS_VARIANTS = (STANDARD_CE, SECU)


@dataclass
class ClassifierWeights:
    """(dim, classes) weight matrix; ``unit_columns`` asserts every column has
    unit Euclidean norm (within 1e-8)."""

    matrix: np.ndarray
    unit_columns: bool = False

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {w.shape}")
        if w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError(f"degenerate weight shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain NaN or Inf")
        if self.unit_columns:
            norms = np.sqrt((w * w).sum(axis=0))
            if not np.allclose(norms, 1.0, rtol=0.0, atol=UNIT_COLUMN_ATOL):
                raise ValueError("unit_columns set but column norms deviate from 1")
        self.matrix = w

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[1]


@dataclass
class TrainConfig:
    """Adam training settings. ``temperature`` is the inverse-softmax scale."""

    temperature: float = 12.5
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 2048
    seed: int = 0
    loss_variant: str = STANDARD_CE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant must be one of {LOSS_VARIANTS}")


@dataclass
class TrainResult:
    weights: ClassifierWeights
    epoch_losses: list[float] = field(default_factory=list)


@dataclass
class FixedPointResult:
    weights: ClassifierWeights        # unit columns
    residual: float                   # max column distance from its own update
    iterations: int
    converged: bool
    frozen_classes: list[int]         # classes with no members, held fixed


def _row(z) -> np.ndarray:
    x = np.asarray(z, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("embedding contains NaN or Inf")
    return x


def _check_dims(z: np.ndarray, weights: ClassifierWeights) -> None:
    if z.shape[0] != weights.dim:
        raise ValueError(f"embedding dim {z.shape[0]} != weight dim {weights.dim}")


def raw_logits(z, weights: ClassifierWeights) -> np.ndarray:
    """Unscaled inner products z @ W. Prediction indices are taken from this
    array (before temperature scaling) everywhere in the package, so argmax
    agreement between probability- and cosine-based rules is exact."""
    x = _row(z)
    _check_dims(x, weights)
    return x @ weights.matrix


def _softmax_scaled(raw: np.ndarray, tau: float) -> np.ndarray:
    t = tau * raw
    t = t - t.max()
    e = np.exp(t)
    return e / e.sum()


def softmax_probs(z, weights: ClassifierWeights, tau: float) -> np.ndarray:
    """Class probabilities softmax(tau * z @ W), max-subtraction stabilized."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return _softmax_scaled(raw_logits(z, weights), tau)


def ce_loss(z, y: int, weights: ClassifierWeights, tau: float) -> float:
    """Cross-entropy -log softmax_y; always >= 0."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    raw = raw_logits(z, weights)
    if not 0 <= y < raw.shape[0]:
        raise ValueError(f"label {y} out of range for {raw.shape[0]} classes")
    t = tau * raw
    m = t.max()
    lse = m + np.log(np.exp(t - m).sum())
    return max(float(lse - t[y]), 0.0)


def grad_ce(z, y: int, weights: ClassifierWeights, tau: float) -> np.ndarray:
    """(dim, classes) gradient of ce_loss w.r.t. W: tau * z (pi - onehot_y)^T."""
    x = _row(z)
    probs = softmax_probs(x, weights, tau)
    if not 0 <= y < probs.shape[0]:
        raise ValueError(f"label {y} out of range for {probs.shape[0]} classes")
    v = probs.copy()
    v[y] -= 1.0
    return tau * np.outer(x, v)


def secu_loss(z, y: int, weights: ClassifierWeights, tau: float) -> tuple[float, np.ndarray]:
    """Stop-gradient cross-entropy: the value equals ``ce_loss`` bitwise, but
    the gradient is nonzero only in column y, tau * (pi_y - 1) * z."""
    x = _row(z)
    value = ce_loss(x, y, weights, tau)
    probs = softmax_probs(x, weights, tau)
    grad = np.zeros((x.shape[0], probs.shape[0]), dtype=np.float64)
    grad[:, y] = tau * (probs[y] - 1.0) * x
    return value, grad


def _label_array(labels) -> np.ndarray:
    if isinstance(labels, LabelVector):
        arr = np.asarray(labels.labels, dtype=np.int64)
    else:
        arr = np.asarray(labels, dtype=np.int64).reshape(-1)
    if arr.size and arr.min() < 0:
        raise ValueError("training labels must be >= 0")
    return arr


def train_adam(images, pseudo_labels, cfg: TrainConfig) -> TrainResult:
    """Minimize the mean per-sample loss with Adam.

    Minibatches are drawn from a fresh shuffle each epoch (last partial batch
    kept). Initial weights are seeded Gaussian, scale 1/sqrt(dim). Returns the
    trained weights plus the per-epoch mean loss curve. Deterministic for a
    fixed config: one seeded generator drives init and shuffling.
    """
    x = images.as_float64() if isinstance(images, FeatureMatrix) else np.asarray(
        images, dtype=np.float64)
    y = _label_array(pseudo_labels)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if y.shape[0] != n:
        raise ValueError(f"label count {y.shape[0]} != rows {n}")
    classes = int(y.max()) + 1
    if np.unique(y).size == 1:
        warnings.warn("training labels are all one class", stacklevel=2)

    d = x.shape[1]
    tau = cfg.temperature
    rng = np.random.default_rng(cfg.seed)
    w = rng.standard_normal((d, classes)) / np.sqrt(d)

    m = np.zeros_like(w)
    v = np.zeros_like(w)
    step = 0
    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            b = idx.shape[0]
            t = tau * (xb @ w)
            t_max = t.max(axis=1, keepdims=True)
            e = np.exp(t - t_max)
            denom = e.sum(axis=1, keepdims=True)
            probs = e / denom
            lse = t_max[:, 0] + np.log(denom[:, 0])
            loss_sum += float((lse - t[np.arange(b), yb]).sum())

            if cfg.loss_variant == STANDARD_CE:
                delta = probs
                delta[np.arange(b), yb] -= 1.0
            else:
                delta = np.zeros_like(probs)
                delta[np.arange(b), yb] = probs[np.arange(b), yb] - 1.0
            grad = tau * (xb.T @ delta) / b

            step += 1
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
            m_hat = m / (1 - cfg.beta1 ** step)
            v_hat = v / (1 - cfg.beta2 ** step)
            w = w - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        epoch_losses.append(loss_sum / n)
    return TrainResult(weights=ClassifierWeights(w), epoch_losses=epoch_losses)


def _unit_cols(w: np.ndarray) -> np.ndarray:
    return w / np.sqrt((w * w).sum(axis=0))


def centroid_limit(images, pseudo_labels) -> ClassifierWeights:
    """Per-class normalized mean embeddings as unit weight columns: the limit
    the fixed-point update approaches as tau -> 0. Empty classes are an error."""
    x = images.as_float64() if isinstance(images, FeatureMatrix) else np.asarray(
        images, dtype=np.float64)
    y = _label_array(pseudo_labels)
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"label count {y.shape[0]} != rows {x.shape[0]}")
    classes = int(y.max()) + 1
    w = np.empty((x.shape[1], classes), dtype=np.float64)
    for j in range(classes):
        members = x[y == j]
        if members.shape[0] == 0:
            raise ValueError(f"class {j} has no members")
        w[:, j] = members.mean(axis=0)
    return ClassifierWeights(_unit_cols(w), unit_columns=True)


def fixed_point_weights(images, pseudo_labels, tau: float, max_iters: int = 2000,
                        tol: float = 1e-8) -> FixedPointResult:
    """Iterate the closed-form optimum of the stop-gradient loss on the sphere:

        w_j  <-  normalize( sum_{i: y_i = j} (1 - pi_ij) e_i )

    with pi the tau-scaled softmax under the current weights. Classes with no
    members cannot move; their columns are frozen at the normalized global
    mean and reported. Iteration is plain; half-step damping engages only
    after two consecutive iterations fail to shrink the residual meaningfully
    (a grown or flat residual means the update is circling the attractor
    rather than approaching it, and averaged steps break such cycles).
    Terminates when the update residual drops below ``tol``.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    x = images.as_float64() if isinstance(images, FeatureMatrix) else np.asarray(
        images, dtype=np.float64)
    y = _label_array(pseudo_labels)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError(f"label count {y.shape[0]} != rows {n}")
    classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=classes)
    frozen = [j for j in range(classes) if counts[j] == 0]

    global_dir = x.mean(axis=0)
    global_norm = np.sqrt((global_dir * global_dir).sum())
    if global_norm < featurestore.ZERO_NORM:
        global_dir = np.zeros_like(global_dir)
        global_dir[0] = 1.0
    else:
        global_dir = global_dir / global_norm

    w = np.empty((x.shape[1], classes), dtype=np.float64)
    for j in range(classes):
        w[:, j] = global_dir if counts[j] == 0 else x[y == j].mean(axis=0)
    w = _unit_cols(w)

    members = [np.flatnonzero(y == j) for j in range(classes)]
    prev_residual = np.inf
    stall = 0
    step = 1.0
    iterations = 0
    converged = False
    for _ in range(max_iters):
        t = tau * (x @ w)
        t_max = t.max(axis=1, keepdims=True)
        e = np.exp(t - t_max)
        probs = e / e.sum(axis=1, keepdims=True)

        target = w.copy()
        for j in range(classes):
            idx = members[j]
            if idx.size == 0:
                continue
            coef = 1.0 - probs[idx, j]
            total = coef.sum()
            if total < 1e-300:
                continue  # all members perfectly confident: column already fixed
            col = coef @ x[idx]
            target[:, j] = col / np.sqrt((col * col).sum())

        residual = float(np.sqrt(((target - w) ** 2).sum(axis=0)).max())
        if residual < tol:
            converged = True
            break
        stall = stall + 1 if residual > 0.99 * prev_residual else 0
        prev_residual = residual
        if stall >= 2:
            step = max(step * 0.5, 0.0625)
            stall = 0
        if step == 1.0:
            w = target
        else:
            blend = w + step * (target - w)
            norms = np.sqrt((blend * blend).sum(axis=0))
            dead = norms < 1e-12
            if dead.any():
                blend[:, dead] = target[:, dead]
                norms = np.sqrt((blend * blend).sum(axis=0))
            w = blend / norms
        iterations += 1

    return FixedPointResult(
        weights=ClassifierWeights(w, unit_columns=True),
        residual=fixed_point_residual(x, y, w, tau),
        iterations=iterations,
        converged=converged,
        frozen_classes=frozen,
    )


def fixed_point_residual(x: np.ndarray, y: np.ndarray, w: np.ndarray,
                         tau: float) -> float:
    """Max over non-empty classes of || w_j - normalize(sum (1-pi_ij) e_i) ||."""
    t = tau * (x @ w)
    t_max = t.max(axis=1, keepdims=True)
    e = np.exp(t - t_max)
    probs = e / e.sum(axis=1, keepdims=True)
    worst = 0.0
    for j in range(w.shape[1]):
        idx = np.flatnonzero(y == j)
        if idx.size == 0:
            continue
        coef = 1.0 - probs[idx, j]
        total = coef.sum()
        if total < 1e-300:
            continue
        col = coef @ x[idx]
        col = col / np.sqrt((col * col).sum())
        worst = max(worst, float(np.sqrt(((col - w[:, j]) ** 2).sum())))
    return worst


def save_weights(weights: ClassifierWeights, path) -> None:
    """Serialize W in the package's binary matrix format (float32 at rest)."""
    featurestore.write_laic(
        featurestore.FeatureMatrix(weights.matrix.astype(np.float32), role="text"),
        None, path)


def load_weights(path) -> ClassifierWeights:
    """Read weights saved by ``save_weights``. float32 rounding perturbs column
    norms past the unit tolerance, so the flag is not reasserted."""
    matrix, _ = featurestore.read_laic(path, role="text")
    return ClassifierWeights(matrix.as_float64())
