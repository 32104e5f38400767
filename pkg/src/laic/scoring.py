"""Gradient-norm scoring of candidate nouns and positive-semantics filtering.

For a unit-norm text embedding r and trained weights W, the score is the
squared Frobenius norm of the cross-entropy gradient taken at the predicted
label. It collapses to the closed form

    S = tau^2 * ||r||^2 * (sum_k pi_k^2 + 1 - 2 * max_j pi_j)

so no gradient matrix is materialized; ``score_direct`` keeps the explicit
route as a verification oracle. Low scores mean confident, image-aligned
nouns. Two degenerate scores are included: ``msp_score`` (keeps only the
top-probability term) and ``cosine_score`` (drops the softmax entirely).

Filtering keeps, per predicted cluster, the ``beta`` best-scoring nouns
(smallest for gradnorm/msp, largest for cosine); the union over clusters is
the positive-semantics set fed to the counterpart builder.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierWeights, grad_ce, raw_logits, _softmax_scaled
from .featurestore import FeatureMatrix, NORM_ATOL

SCORE_KINDS = ("gradnorm", "msp", "cosine")


def _warn_if_not_unit(norm_sq: float, what: str) -> None:
    if abs(math.sqrt(norm_sq) - 1.0) > NORM_ATOL:
        warnings.warn(f"{what} is not unit-norm; scores use the general form",
                      stacklevel=3)


def gradnorm_score(r, weights: ClassifierWeights, tau: float) -> tuple[float, int, np.ndarray]:
    """Closed-form score, predicted cluster, and the probability row.

    Unit-norm input is expected (warned otherwise); the ||r||^2 factor keeps
    the closed form equal to the explicit gradient norm either way.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    raw = raw_logits(r, weights)
    x = np.asarray(r, dtype=np.float64).reshape(-1)
    norm_sq = float(x @ x)
    _warn_if_not_unit(norm_sq, "text embedding")
    probs = _softmax_scaled(raw, tau)
    pred = int(np.argmax(raw))
    s = tau * tau * norm_sq * (float(probs @ probs) + 1.0 - 2.0 * float(probs.max()))
    return max(s, 0.0), pred, probs


def score_direct(r, weights: ClassifierWeights, tau: float) -> float:
    """Oracle route: materialize the gradient at the predicted label and sum
    its squared entries. Used by verification and tests only."""
    raw = raw_logits(r, weights)
    pred = int(np.argmax(raw))
    g = grad_ce(r, pred, weights, tau)
    return float((g * g).sum())


def msp_score(r, weights: ClassifierWeights, tau: float) -> float:
    """Keep only the top-probability term: tau^2 * (1 - max_j pi_j)^2."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    probs = _softmax_scaled(raw_logits(r, weights), tau)
    return tau * tau * (1.0 - float(probs.max())) ** 2


def cosine_score(r, weights: ClassifierWeights) -> tuple[float, int]:
    """Largest inner product against the weight columns and its index.

    With unit inputs and unit columns these are cosines; otherwise raw inner
    products are used and a warning is raised.
    """
    raw = raw_logits(r, weights)
    x = np.asarray(r, dtype=np.float64).reshape(-1)
    _warn_if_not_unit(float(x @ x), "text embedding")
    col_norms = np.sqrt((weights.matrix * weights.matrix).sum(axis=0))
    if not np.allclose(col_norms, 1.0, rtol=0.0, atol=NORM_ATOL):
        warnings.warn("weight columns are not unit-norm; scores are raw inner products",
                      stacklevel=2)
    pred = int(np.argmax(raw))
    return float(raw[pred]), pred


@dataclass
class ScoreTable:
    """Columnar per-noun scores; row i describes noun i of the text matrix."""

    num_clusters: int
    predicted: np.ndarray            # (m,) int32
    gradnorm: np.ndarray             # (m,) float64
    msp: np.ndarray                  # (m,) float64
    cosine: np.ndarray               # (m,) float64
    probs: np.ndarray | None = None  # (m, num_clusters) float64, optional

    def __len__(self) -> int:
        return int(self.predicted.shape[0])

    def column(self, score_kind: str) -> np.ndarray:
        if score_kind not in SCORE_KINDS:
            raise ValueError(f"score_kind must be one of {SCORE_KINDS}")
        return getattr(self, score_kind)

    def to_csv(self, path) -> None:
        """Columns: index, predicted_cluster, gradnorm, msp, cosine. Floats are
        written with shortest round-trip repr, so files are byte-stable."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index,predicted_cluster,gradnorm,msp,cosine\n")
            for i in range(len(self)):
                fh.write(f"{i},{int(self.predicted[i])},"
                         f"{float(self.gradnorm[i])!r},"
                         f"{float(self.msp[i])!r},"
                         f"{float(self.cosine[i])!r}\n")


def score_all(texts: FeatureMatrix, weights: ClassifierWeights, tau: float,
              store_probs: bool = False) -> ScoreTable:
    """Score every text row. Implemented as the per-row loop over the scalar
    ops, so batch output is identical to scoring rows one by one."""
    m = texts.rows
    if texts.dim != weights.dim:
        raise ValueError(f"text dim {texts.dim} != weight dim {weights.dim}")
    predicted = np.empty(m, dtype=np.int32)
    grad = np.empty(m, dtype=np.float64)
    msp = np.empty(m, dtype=np.float64)
    cos = np.empty(m, dtype=np.float64)
    probs = np.empty((m, weights.num_classes), dtype=np.float64) if store_probs else None
    data = texts.as_float64()
    with warnings.catch_warnings():
        warnings.simplefilter("once")
        for i in range(m):
            r = data[i]
            s, pred, p = gradnorm_score(r, weights, tau)
            predicted[i] = pred
            grad[i] = s
            msp[i] = msp_score(r, weights, tau)
            cos[i], _ = cosine_score(r, weights)
            if probs is not None:
                probs[i] = p
    return ScoreTable(num_clusters=weights.num_classes, predicted=predicted,
                      gradnorm=grad, msp=msp, cosine=cos, probs=probs)


@dataclass
class FilterResult:
    """Per-cluster thresholds and kept noun indices, plus their union."""

    score_kind: str
    beta: int
    thresholds: dict[int, float]
    selected: dict[int, np.ndarray]
    union: np.ndarray = field(repr=False)

    def to_json(self, path) -> None:
        """Clusters map to {threshold, indices}; infinite sentinel thresholds
        (clusters with fewer than beta nouns) are encoded as null."""
        clusters = {}
        for k in sorted(self.thresholds):
            t = self.thresholds[k]
            clusters[str(k)] = {
                "threshold": None if math.isinf(t) else t,
                "indices": [int(i) for i in self.selected[k]],
            }
        doc = {"score_kind": self.score_kind, "beta": self.beta, "clusters": clusters}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def from_json(path) -> "FilterResult":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        kind = doc["score_kind"]
        if kind not in SCORE_KINDS:
            raise ValueError(f"score_kind must be one of {SCORE_KINDS}")
        sentinel = -math.inf if kind == "cosine" else math.inf
        thresholds: dict[int, float] = {}
        selected: dict[int, np.ndarray] = {}
        for key, entry in doc["clusters"].items():
            k = int(key)
            t = entry["threshold"]
            thresholds[k] = sentinel if t is None else float(t)
            selected[k] = np.asarray(entry["indices"], dtype=np.int64)
        union = np.unique(np.concatenate([v for v in selected.values()] or
                                         [np.empty(0, dtype=np.int64)]))
        return FilterResult(score_kind=kind, beta=int(doc["beta"]),
                            thresholds=thresholds, selected=selected, union=union)


def filter_positive(table: ScoreTable, beta: int,
                    score_kind: str = "gradnorm") -> FilterResult:
    """Keep the beta best nouns per predicted cluster.

    "Best" is smallest score for gradnorm/msp and largest for cosine; ties
    break on the lower noun index (stable sort on (score, index)). Exactly
    min(beta, cluster size) nouns are kept per cluster. The threshold is the
    score of the last kept noun, or an infinite sentinel when the cluster has
    fewer than beta nouns (so every member is kept).
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    if score_kind not in SCORE_KINDS:
        raise ValueError(f"score_kind must be one of {SCORE_KINDS}")
    scores = table.column(score_kind)
    descending = score_kind == "cosine"
    sentinel = -math.inf if descending else math.inf

    thresholds: dict[int, float] = {}
    selected: dict[int, np.ndarray] = {}
    empty: list[int] = []
    for k in range(table.num_clusters):
        members = np.flatnonzero(table.predicted == k)
        if members.size == 0:
            empty.append(k)
            thresholds[k] = sentinel
            selected[k] = np.empty(0, dtype=np.int64)
            continue
        key = -scores[members] if descending else scores[members]
        order = members[np.lexsort((members, key))]
        keep = order[:min(beta, order.size)]
        selected[k] = keep.astype(np.int64)
        thresholds[k] = float(scores[keep[-1]]) if order.size >= beta else sentinel
    if empty:
        warnings.warn(f"clusters with no predicted nouns: {empty}", stacklevel=2)
    union = np.unique(np.concatenate(list(selected.values())))
    return FilterResult(score_kind=score_kind, beta=beta, thresholds=thresholds,
                        selected=selected, union=union)
