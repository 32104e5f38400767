"""End-to-end pipeline: pseudo-label, train, score, filter, attach text
counterparts, recluster, report.

Stage 1 clusters the image matrix into C pseudo-classes (C follows the
size-based rule unless pinned), trains the softmax classifier on the pseudo
labels, scores every candidate noun, and filters the positive-semantics set.
Stage 2 consumes only (images, the selected noun embeddings, kappa, seed):
each image gets a convex combination of selected nouns as its text
counterpart, the concatenation [image; counterpart] is clustered into K final
groups, and metrics are reported when ground truth is supplied.

The pipeline config's tau is authoritative for a run; it is copied into the
training config the run builds.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .classifier import TrainConfig, TrainResult, train_adam
from .featurestore import FeatureMatrix, LabelVector, write_laic
from .kmeans import KMeansResult, kmeans_fit
from .metrics import MetricsReport
from .scoring import (SCORE_KINDS, FilterResult, ScoreTable, filter_positive,
                      score_all)

AVG_CLUSTER_SIZE = 600


def choose_c(num_images: int, k: int) -> int:
    """Pseudo-class count: split into average-600-image groups when the
    dataset is large enough, otherwise 3 pseudo-classes per target cluster."""
    if num_images < 1 or k < 1:
        raise ValueError("num_images and k must be >= 1")
    if num_images / k > AVG_CLUSTER_SIZE:
        return max(1, num_images // AVG_CLUSTER_SIZE)
    return 3 * k


@dataclass
class PipelineConfig:
    k: int                                  # target cluster count
    c: int | None = None                    # pseudo-class count; None = auto rule
    tau: float = 12.5
    kappa: float = 0.006
    beta: int = 5
    score_kind: str = "gradnorm"
    renormalize_counterparts: bool = False
    stage1_seed: int = 0
    stage2_seed: int = 2
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.c is not None and self.c < 1:
            raise ValueError("c must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"score_kind must be one of {SCORE_KINDS}")

    @staticmethod
    def from_seed(seed: int, **kwargs) -> "PipelineConfig":
        """Derive the three stage seeds from one master seed: stage-1 k-means
        gets ``seed``, training ``seed + 1``, stage-2 k-means ``seed + 2``."""
        train = kwargs.pop("train", TrainConfig(seed=seed + 1))
        return PipelineConfig(stage1_seed=seed, stage2_seed=seed + 2,
                              train=train, **kwargs)

    def resolved_train(self) -> TrainConfig:
        return dataclasses.replace(self.train, temperature=self.tau)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["train"] = dataclasses.asdict(self.resolved_train())
        return doc


@dataclass
class CounterpartMatrix:
    """(n, dim) float64 rows: each image's convex mix of selected nouns."""

    values: np.ndarray


def build_counterparts(images: FeatureMatrix, selected_texts: np.ndarray,
                       kappa: float, renormalize: bool = False) -> CounterpartMatrix:
    """Softmax-attention pooling of the selected noun embeddings.

    Row i is sum_j softmax(e_i . r_j / kappa)_j * r_j over the selected nouns
    r_j. Weights are convex (nonnegative, sum 1); the output is inside the
    unit ball and is NOT renormalized unless asked. Order of the selected rows
    does not matter beyond float roundoff.
    """
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    sel = np.asarray(selected_texts, dtype=np.float64)
    if sel.ndim != 2 or sel.shape[0] == 0:
        raise ValueError("no positive-semantics nouns selected")
    if sel.shape[1] != images.dim:
        raise ValueError(f"noun dim {sel.shape[1]} != image dim {images.dim}")
    e = images.as_float64()
    logits = e @ sel.T / kappa
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    values = w @ sel
    if renormalize:
        norms = np.sqrt((values * values).sum(axis=1, keepdims=True))
        values = values / norms
    return CounterpartMatrix(values=values)


def concat_features(images: FeatureMatrix, counterparts: CounterpartMatrix) -> FeatureMatrix:
    """[image; counterpart] rows of width 2*dim. The image half is carried
    over bitwise; the counterpart half is rounded to float32 at this boundary."""
    v = counterparts.values
    if v.shape[0] != images.rows or v.shape[1] != images.dim:
        raise ValueError(f"counterpart shape {v.shape} does not match images "
                         f"({images.rows}, {images.dim})")
    joined = np.hstack([images.data, v.astype(np.float32)])
    return FeatureMatrix(joined, role="image")


def zero_shot_assign(images: FeatureMatrix, class_texts: FeatureMatrix) -> np.ndarray:
    """Nearest class-name embedding by inner product (the classifier-free
    baseline). Softmax scaling cannot change an argmax, so none is applied."""
    if class_texts.rows < 1:
        raise ValueError("empty class-name set")
    if class_texts.dim != images.dim:
        raise ValueError(f"class dim {class_texts.dim} != image dim {images.dim}")
    sims = images.as_float64() @ class_texts.as_float64().T
    return np.argmax(sims, axis=1).astype(np.int32)


@dataclass
class Stage1Result:
    c: int
    pseudo: KMeansResult
    train: TrainResult
    table: ScoreTable
    filt: FilterResult


@dataclass
class Stage2Result:
    counterparts: CounterpartMatrix
    concat: FeatureMatrix
    final: KMeansResult


@dataclass
class PipelineResult:
    stage1: Stage1Result
    stage2: Stage2Result
    baseline: KMeansResult
    report: MetricsReport


def run_stage1(images: FeatureMatrix, texts: FeatureMatrix,
               cfg: PipelineConfig) -> Stage1Result:
    """Pseudo-label, train, score, filter."""
    c = cfg.c if cfg.c is not None else choose_c(images.rows, cfg.k)
    if c > images.rows:
        raise ValueError(f"pseudo-class count {c} exceeds image count {images.rows}")
    if c < 2:
        warnings.warn("fewer than 2 pseudo-classes; scores will be degenerate",
                      stacklevel=2)
    pseudo = kmeans_fit(images, c, seed=cfg.stage1_seed)
    train = train_adam(images, pseudo.assignments, cfg.resolved_train())
    table = score_all(texts, train.weights, cfg.tau)
    filt = filter_positive(table, cfg.beta, cfg.score_kind)
    return Stage1Result(c=c, pseudo=pseudo, train=train, table=table, filt=filt)


def run_stage2(images: FeatureMatrix, selected_texts: np.ndarray,
               cfg: PipelineConfig) -> Stage2Result:
    """Counterparts, concatenation, final clustering. Touches nothing from
    stage 1 beyond the selected noun embeddings."""
    counterparts = build_counterparts(images, selected_texts, cfg.kappa,
                                      cfg.renormalize_counterparts)
    concat = concat_features(images, counterparts)
    final = kmeans_fit(concat, cfg.k, seed=cfg.stage2_seed)
    return Stage2Result(counterparts=counterparts, concat=concat, final=final)


def run_pipeline(images: FeatureMatrix, texts: FeatureMatrix, cfg: PipelineConfig,
                 truth: LabelVector | None = None,
                 positivity: np.ndarray | None = None,
                 out_dir: str | Path | None = None,
                 write_concat: bool = False) -> PipelineResult:
    """Full run. ``truth`` unlocks ACC/NMI/ARI (and the image-only k-means
    baseline comparison); ``positivity`` unlocks Err_pos and precision/recall.
    When ``out_dir`` is given the artifact files are written there.
    """
    stage1 = run_stage1(images, texts, cfg)
    selected = texts.as_float64()[stage1.filt.union]
    stage2 = run_stage2(images, selected, cfg)
    baseline = kmeans_fit(images, cfg.k, seed=cfg.stage2_seed)

    acc = nmi_v = ari_v = baseline_acc = None
    if truth is not None:
        t = truth.labels
        acc = metrics_mod.clustering_accuracy(stage2.final.assignments, t)
        nmi_v = metrics_mod.nmi(stage2.final.assignments, t)
        ari_v = metrics_mod.ari(stage2.final.assignments, t)
        baseline_acc = metrics_mod.clustering_accuracy(baseline.assignments, t)
    errs: dict[int, float | None] = {}
    precision = recall = None
    if positivity is not None:
        errs = metrics_mod.err_pos(stage1.table, stage1.filt, positivity)
        precision, recall = metrics_mod.filter_precision_recall(stage1.filt, positivity)

    report = MetricsReport(
        acc=acc, nmi=nmi_v, ari=ari_v, baseline_acc=baseline_acc,
        err_pos=errs, precision=precision, recall=recall,
        config=cfg.to_dict(),
        seeds={"stage1": cfg.stage1_seed, "train": cfg.train.seed,
               "stage2": cfg.stage2_seed},
    )
    result = PipelineResult(stage1=stage1, stage2=stage2, baseline=baseline,
                            report=report)
    if out_dir is not None:
        write_artifacts(result, Path(out_dir), write_concat=write_concat)
    return result


def write_artifacts(result: PipelineResult, out_dir: Path,
                    write_concat: bool = False) -> list[str]:
    """Persist scores.csv, filter.json, counterparts.laic, assignments.csv and
    report.json (plus concat.csv on request). Returns the file names written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    result.stage1.table.to_csv(out_dir / "scores.csv")
    written.append("scores.csv")
    result.stage1.filt.to_json(out_dir / "filter.json")
    written.append("filter.json")

    cp = result.stage2.counterparts.values.astype(np.float32)
    write_laic(FeatureMatrix(cp, role="text"), None, out_dir / "counterparts.laic")
    written.append("counterparts.laic")

    with open(out_dir / "assignments.csv", "w", encoding="utf-8") as fh:
        fh.write("index,cluster\n")
        for i, a in enumerate(result.stage2.final.assignments):
            fh.write(f"{i},{int(a)}\n")
    written.append("assignments.csv")

    result.report.to_json(out_dir / "report.json")
    written.append("report.json")

    if write_concat:
        concat = result.stage2.concat.data
        with open(out_dir / "concat.csv", "w", encoding="utf-8") as fh:
            for row in concat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        written.append("concat.csv")
    return written


def sweep(images: FeatureMatrix, texts: FeatureMatrix, base: PipelineConfig,
          param: str, values: list[float], truth: LabelVector) -> list[dict]:
    """Metric-vs-value ablation. kappa and beta sweeps reuse the stage-1
    artifacts (they do not depend on kappa/beta); tau sweeps retrain."""
    if param not in ("kappa", "tau", "beta"):
        raise ValueError("sweep param must be kappa, tau or beta")
    rows: list[dict] = []
    stage1 = run_stage1(images, texts, base) if param != "tau" else None
    for value in values:
        if param == "tau":
            cfg = dataclasses.replace(base, tau=float(value))
            s1 = run_stage1(images, texts, cfg)
        elif param == "kappa":
            cfg = dataclasses.replace(base, kappa=float(value))
            s1 = stage1
        else:
            cfg = dataclasses.replace(base, beta=int(value))
            s1 = dataclasses.replace(
                stage1, filt=filter_positive(stage1.table, int(value), base.score_kind))
        selected = texts.as_float64()[s1.filt.union]
        s2 = run_stage2(images, selected, cfg)
        rows.append({
            "value": float(value),
            "acc": metrics_mod.clustering_accuracy(s2.final.assignments, truth.labels),
            "nmi": metrics_mod.nmi(s2.final.assignments, truth.labels),
            "ari": metrics_mod.ari(s2.final.assignments, truth.labels),
        })
    return rows
