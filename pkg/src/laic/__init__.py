"""Language-assisted image clustering over precomputed embeddings.

Images and candidate nouns arrive as unit-norm embedding matrices. The
pipeline pseudo-labels the images, trains a softmax head, keeps the nouns
whose cross-entropy gradient is smallest (confident, image-aligned language),
attaches each image's attention-pooled noun counterpart, and clusters the
concatenated features.

Submodules import lazily so the CLI can pin BLAS threading before numpy
loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "FeatureMatrix": "featurestore",
    "LabelVector": "featurestore",
    "HuberSynthConfig": "featurestore",
    "HuberDataset": "featurestore",
    "generate_huber_dataset": "featurestore",
    "read_laic": "featurestore",
    "write_laic": "featurestore",
    "l2_normalize": "featurestore",
    "from_csv": "featurestore",
    "KMeansResult": "kmeans",
    "kmeans_fit": "kmeans",
    "kmeans_assign": "kmeans",
    "ClassifierWeights": "classifier",
    "TrainConfig": "classifier",
    "train_adam": "classifier",
    "fixed_point_weights": "classifier",
    "centroid_limit": "classifier",
    "ScoreTable": "scoring",
    "FilterResult": "scoring",
    "gradnorm_score": "scoring",
    "msp_score": "scoring",
    "cosine_score": "scoring",
    "score_all": "scoring",
    "filter_positive": "scoring",
    "PipelineConfig": "pipeline",
    "run_pipeline": "pipeline",
    "choose_c": "pipeline",
    "build_counterparts": "pipeline",
    "concat_features": "pipeline",
    "zero_shot_assign": "pipeline",
    "MetricsReport": "metrics",
    "clustering_accuracy": "metrics",
    "nmi": "metrics",
    "ari": "metrics",
}

__all__ = ["__version__", *sorted(_EXPORTS)]


def __getattr__(name: str):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module 'laic' has no attribute {name!r}")
    import importlib

    return getattr(importlib.import_module(f".{module}", __name__), name)
