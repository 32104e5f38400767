"""Clustering metrics and filter-quality measurements.

ACC maximizes one-to-one cluster/class matching (Hungarian assignment on the
padded confusion matrix). NMI uses natural logs with the 2I/(Hu+Hv)
normalization. ARI is the pair-counting adjusted index. Degenerate cases are
pinned: when both partitions are single clusters (zero entropy / zero denom),
identical partitions score 1.0 and different ones 0.0 (NMI: 0.0 whenever
either entropy is zero and the partitions differ).

Err_pos measures, per cluster, the fraction of truly positive nouns that the
threshold rejects; precision/recall measure the kept set against ground-truth
positivity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .scoring import FilterResult, ScoreTable


def _check_pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.int64).reshape(-1)
    t = np.asarray(truth, dtype=np.int64).reshape(-1)
    if p.shape[0] != t.shape[0]:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {t.shape[0]}")
    if p.shape[0] == 0:
        raise ValueError("empty label arrays")
    if p.min() < 0 or t.min() < 0:
        raise ValueError("labels must be >= 0")
    return p, t


def _contingency(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    rows, cols = int(p.max()) + 1, int(t.max()) + 1
    table = np.zeros((rows, cols), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def _canon(x: np.ndarray) -> np.ndarray:
    """Relabel by order of first occurrence, canonicalizing partition names."""
    _, first = np.unique(x, return_index=True)
    remap = {int(x[i]): rank for rank, i in enumerate(np.sort(first))}
    return np.asarray([remap[int(v)] for v in x], dtype=np.int64)


def _same_partition(p: np.ndarray, t: np.ndarray) -> bool:
    return bool(np.array_equal(_canon(p), _canon(t)))


def clustering_accuracy(pred, truth) -> float:
    """Best one-to-one matching accuracy between cluster ids and class ids."""
    p, t = _check_pair(pred, truth)
    table = _contingency(p, t)
    size = max(table.shape)
    cost = np.zeros((size, size), dtype=np.int64)
    cost[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(cost.max() - cost)
    return float(cost[rows, cols].sum()) / p.shape[0]


def nmi(pred, truth) -> float:
    """Normalized mutual information, 2I/(Hu+Hv), natural logs."""
    p, t = _check_pair(pred, truth)
    table = _contingency(p, t).astype(np.float64)
    n = table.sum()
    pi = table.sum(axis=1) / n
    pj = table.sum(axis=0) / n
    h_u = float(-(pi[pi > 0] * np.log(pi[pi > 0])).sum())
    h_v = float(-(pj[pj > 0] * np.log(pj[pj > 0])).sum())
    if h_u == 0.0 and h_v == 0.0:
        return 1.0 if _same_partition(p, t) else 0.0
    if h_u == 0.0 or h_v == 0.0:
        return 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(pi, pj)[nz]
    info = float((pij * np.log(pij / outer)).sum())
    return max(0.0, min(2.0 * info / (h_u + h_v), 1.0))


def ari(pred, truth) -> float:
    """Adjusted Rand index via pair counting."""
    p, t = _check_pair(pred, truth)
    table = _contingency(p, t).astype(np.float64)
    n = table.sum()
    sum_ij = float((table * (table - 1) / 2).sum())
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    sum_a = float((a * (a - 1) / 2).sum())
    sum_b = float((b * (b - 1) / 2).sum())
    pairs = n * (n - 1) / 2
    expected = sum_a * sum_b / pairs if pairs > 0 else 0.0
    max_index = (sum_a + sum_b) / 2.0
    denom = max_index - expected
    if denom == 0.0:
        return 1.0 if _same_partition(p, t) else 0.0
    return float((sum_ij - expected) / denom)


def err_pos(table: ScoreTable, filt: FilterResult, positivity) -> dict[int, Optional[float]]:
    """Per cluster k: fraction of truly positive nouns predicted into k whose
    score falls strictly on the rejected side of the threshold. None when no
    positive noun lands in k."""
    pos = np.asarray(positivity, dtype=bool).reshape(-1)
    if pos.shape[0] != len(table):
        raise ValueError(f"positivity length {pos.shape[0]} != table rows {len(table)}")
    scores = table.column(filt.score_kind)
    descending = filt.score_kind == "cosine"
    out: dict[int, Optional[float]] = {}
    for k in range(table.num_clusters):
        members = np.flatnonzero((table.predicted == k) & pos)
        if members.size == 0:
            out[k] = None
            continue
        t = filt.thresholds.get(k)
        if t is None:
            raise ValueError(f"filter has no threshold for cluster {k}")
        rejected = scores[members] < t if descending else scores[members] > t
        out[k] = float(rejected.mean())
    return out


def filter_precision_recall(filt: FilterResult, positivity) -> tuple[Optional[float], Optional[float]]:
    """Precision and recall of the kept-noun union against true positivity.
    None when the respective denominator is zero."""
    pos = np.asarray(positivity, dtype=bool).reshape(-1)
    kept = filt.union
    if kept.size and (kept.min() < 0 or kept.max() >= pos.shape[0]):
        raise ValueError("filter indices out of range for positivity vector")
    true_kept = int(pos[kept].sum()) if kept.size else 0
    total_pos = int(pos.sum())
    precision = true_kept / kept.size if kept.size else None
    recall = true_kept / total_pos if total_pos else None
    return precision, recall


@dataclass
class MetricsReport:
    """Everything the pipeline reports for one run; serializes to the report
    JSON (sorted keys, so files are byte-stable)."""

    acc: Optional[float]
    nmi: Optional[float]
    ari: Optional[float]
    baseline_acc: Optional[float]
    err_pos: dict[int, Optional[float]] = field(default_factory=dict)
    precision: Optional[float] = None
    recall: Optional[float] = None
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "nmi": self.nmi,
            "ari": self.ari,
            "baseline_acc": self.baseline_acc,
            "err_pos": {str(k): v for k, v in sorted(self.err_pos.items())},
            "precision": self.precision,
            "recall": self.recall,
            "config": self.config,
            "seeds": self.seeds,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
