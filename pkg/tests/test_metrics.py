"""Clustering metrics (ACC/NMI/ARI) and filter-quality measurements."""

import itertools
import json
import math

import numpy as np
import pytest

from laic.metrics import (MetricsReport, ari, clustering_accuracy, err_pos,
                          filter_precision_recall, nmi)
from laic.scoring import FilterResult, ScoreTable, filter_positive


def brute_force_acc(pred, truth):
    """Best one-to-one matching by scanning every permutation of a padded
    square confusion matrix."""
    p = np.asarray(pred)
    t = np.asarray(truth)
    size = max(int(p.max()), int(t.max())) + 1
    table = np.zeros((size, size), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    best = max(sum(table[i, perm[i]] for i in range(size))
               for perm in itertools.permutations(range(size)))
    return best / p.shape[0]


def make_table(predicted, scores, num_clusters, kind="gradnorm"):
    m = len(predicted)
    cols = {"gradnorm": np.zeros(m), "msp": np.zeros(m), "cosine": np.zeros(m)}
    cols[kind] = np.asarray(scores, dtype=np.float64)
    return ScoreTable(num_clusters=num_clusters,
                      predicted=np.asarray(predicted, dtype=np.int32),
                      gradnorm=cols["gradnorm"], msp=cols["msp"],
                      cosine=cols["cosine"])


# ---------------------------------------------------------------------- ACC

def test_acc_perfect_under_relabeling():
    assert clustering_accuracy([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0


def test_acc_two_thirds():
    assert abs(clustering_accuracy([0, 1, 1], [0, 0, 1]) - 2 / 3) < 1e-12


def test_acc_matches_permutation_scan():
    rng = np.random.default_rng(30)
    for _ in range(200):
        n = int(rng.integers(4, 12))
        k = int(rng.integers(1, 5))
        pred = rng.integers(0, k, size=n)
        truth = rng.integers(0, k, size=n)
        assert clustering_accuracy(pred, truth) == brute_force_acc(pred, truth)


def test_acc_invariant_to_cluster_renaming():
    rng = np.random.default_rng(31)
    pred = rng.integers(0, 5, size=60)
    truth = rng.integers(0, 5, size=60)
    sigma = rng.permutation(5)
    assert clustering_accuracy(sigma[pred], truth) == \
        clustering_accuracy(pred, truth)


def test_acc_handles_more_clusters_than_classes():
    # Extra clusters pad the matching; every class can still be hit once.
    pred = [0, 1, 2, 3]
    truth = [0, 0, 1, 1]
    assert abs(clustering_accuracy(pred, truth) - 0.5) < 1e-12


# ---------------------------------------------------------------------- NMI

def test_nmi_identical_partitions():
    assert nmi([0, 1, 2, 0], [2, 0, 1, 2]) == 1.0


def test_nmi_constant_prediction_is_zero():
    assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0


def test_nmi_independent_four_points():
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0


def test_nmi_both_single_cluster():
    assert nmi([3, 3], [7, 7]) == 1.0


def test_nmi_symmetry():
    rng = np.random.default_rng(32)
    a = rng.integers(0, 4, size=100)
    b = rng.integers(0, 3, size=100)
    assert abs(nmi(a, b) - nmi(b, a)) < 1e-12
    assert 0.0 <= nmi(a, b) <= 1.0


# ---------------------------------------------------------------------- ARI

def test_ari_identical_partitions():
    assert ari([0, 1, 1, 2], [5, 3, 3, 0]) == 1.0


def test_ari_checkerboard_is_minus_half():
    assert abs(ari([0, 0, 1, 1], [0, 1, 0, 1]) - (-0.5)) < 1e-10


def test_ari_all_singletons():
    assert ari([0, 1, 2, 3], [3, 2, 1, 0]) == 1.0


def test_ari_symmetry():
    rng = np.random.default_rng(33)
    a = rng.integers(0, 4, size=100)
    b = rng.integers(0, 5, size=100)
    assert abs(ari(a, b) - ari(b, a)) < 1e-12


def test_random_shuffles_score_near_zero():
    rng = np.random.default_rng(34)
    truth = np.repeat(np.arange(10), 100)
    aris, nmis = [], []
    for _ in range(100):
        pred = truth.copy()
        rng.shuffle(pred)
        aris.append(abs(ari(pred, truth)))
        nmis.append(nmi(pred, truth))
    assert float(np.mean(aris)) < 0.05
    assert float(np.mean(nmis)) < 0.05


def test_metric_input_validation():
    with pytest.raises(ValueError, match="length mismatch"):
        clustering_accuracy([0, 1], [0])
    with pytest.raises(ValueError, match="empty"):
        nmi([], [])
    with pytest.raises(ValueError, match=">= 0"):
        ari([0, -1], [0, 1])


# ----------------------------------------------------------------- err_pos

def test_err_pos_zero_when_all_positives_kept():
    table = make_table([0, 0, 0], [0.1, 0.2, 0.3], 1)
    filt = filter_positive(table, beta=3)
    assert err_pos(table, filt, [True, True, True]) == {0: 0.0}


def test_err_pos_none_without_positives():
    table = make_table([0, 0, 1], [0.1, 0.2, 0.3], 2)
    filt = filter_positive(table, beta=1)
    out = err_pos(table, filt, [False, False, True])
    assert out[0] is None
    assert out[1] == 0.0


def test_err_pos_one_in_six():
    # Eight nouns in one cluster, scores 0.1..0.8; the five smallest are kept
    # (threshold 0.5). Positives are the six smallest, so exactly one positive
    # (0.6) falls strictly above the threshold.
    table = make_table([0] * 8, [(i + 1) / 10 for i in range(8)], 1)
    filt = filter_positive(table, beta=5)
    out = err_pos(table, filt, [True] * 6 + [False] * 2)
    assert abs(out[0] - 1 / 6) < 1e-12


def test_err_pos_threshold_tie_is_not_rejected():
    # Rejection is strict: a positive sitting exactly at the threshold counts
    # as kept even when the tie rule left it out of the selected set.
    table = make_table([0] * 4, [0.1, 0.2, 0.2, 0.2], 1)
    filt = filter_positive(table, beta=2)
    assert filt.selected[0].tolist() == [0, 1]
    assert err_pos(table, filt, [True] * 4) == {0: 0.0}


def test_err_pos_cosine_rejects_below_threshold():
    table = make_table([0] * 4, [0.9, 0.1, 0.5, 0.7], 1, kind="cosine")
    filt = filter_positive(table, beta=2, score_kind="cosine")
    out = err_pos(table, filt, [True, True, False, True])
    assert abs(out[0] - 1 / 3) < 1e-12  # only the 0.1 noun is below 0.7


def test_err_pos_validates_inputs():
    table = make_table([0, 0], [0.1, 0.2], 1)
    filt = filter_positive(table, beta=1)
    with pytest.raises(ValueError, match="positivity length"):
        err_pos(table, filt, [True])
    broken = FilterResult(score_kind="gradnorm", beta=1, thresholds={},
                          selected={}, union=np.empty(0, dtype=np.int64))
    with pytest.raises(ValueError, match="no threshold for cluster 0"):
        err_pos(table, broken, [True, True])


# -------------------------------------------------------- precision / recall

def manual_filter(union):
    idx = np.asarray(union, dtype=np.int64)
    return FilterResult(score_kind="gradnorm", beta=len(union) or 1,
                        thresholds={0: 1.0}, selected={0: idx}, union=idx)


def test_precision_recall_perfect():
    filt = manual_filter([0, 1, 2])
    assert filter_precision_recall(filt, [True, True, True]) == (1.0, 1.0)


def test_precision_recall_fractional():
    # 5 kept with 3 true positives among them; 10 positives overall.
    filt = manual_filter([0, 1, 2, 3, 4])
    pos = np.zeros(20, dtype=bool)
    pos[[0, 1, 2, 10, 11, 12, 13, 14, 15, 16]] = True
    prec, rec = filter_precision_recall(filt, pos)
    assert abs(prec - 0.6) < 1e-12
    assert abs(rec - 0.3) < 1e-12


def test_precision_none_for_empty_selection():
    prec, rec = filter_precision_recall(manual_filter([]), [True, False])
    assert prec is None
    assert rec == 0.0


def test_recall_none_without_positives():
    prec, rec = filter_precision_recall(manual_filter([0]), [False, False])
    assert prec == 0.0
    assert rec is None


def test_precision_recall_range_check():
    with pytest.raises(ValueError, match="out of range"):
        filter_precision_recall(manual_filter([5]), [True, False])


# ------------------------------------------------------------------- report

def test_report_json_schema(tmp_path):
    report = MetricsReport(acc=0.9, nmi=0.8, ari=0.7, baseline_acc=0.6,
                           err_pos={0: 0.5, 1: None}, precision=1.0,
                           recall=None, config={"k": 10},
                           seeds={"stage1": 0, "train": 1, "stage2": 2})
    path = tmp_path / "report.json"
    report.to_json(path)
    text = path.read_text()
    assert text.endswith("\n")
    doc = json.loads(text)
    assert set(doc) == {"acc", "nmi", "ari", "baseline_acc", "err_pos",
                        "precision", "recall", "config", "seeds"}
    assert doc["err_pos"] == {"0": 0.5, "1": None}
    assert doc["recall"] is None
    assert doc["config"] == {"k": 10}
    assert doc["seeds"]["stage2"] == 2
    # Key order is sorted, so serialization is byte-stable.
    assert json.dumps(doc, indent=2, sort_keys=True) + "\n" == text
