"""Embedding matrix store: binary codec, CSV ingest, normalization, synthesis.

Matrices are float32 at rest (files and in-memory payload); consumers that do
arithmetic promote to float64 and round back only at I/O boundaries. Rows are
feature vectors. The canonical state after ``l2_normalize`` is one embedding
per row with unit Euclidean norm.

Binary format ``LAICFTR1`` (all integers little-endian):

    bytes 0-7   ASCII magic "LAICFTR1"
    u32         rows
    u32         dim
    u8          dtype code (0 = float32)
    7 bytes     zero padding
    payload     rows * dim float32 values, row-major
    (optional)  ASCII "LBL1", u32 rows, rows * int32 labels

The optional label block must agree with the matrix row count. Label value -1
means "unknown / negative".
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LAICFTR1"
LABEL_MAGIC = b"LBL1"
DTYPE_F32 = 0
UNKNOWN_LABEL = -1

_HEADER = struct.Struct("<8sIIB7x")
_LABEL_HEADER = struct.Struct("<4sI")

_ROLES = ("image", "text")

# Norm tolerances shared with the rest of the package: rows are "unit" when
# within NORM_ATOL of 1.0; anything below ZERO_NORM is treated as a zero row.
NORM_ATOL = 1e-4
ZERO_NORM = 1e-12


@dataclass(frozen=True)
class FeatureMatrix:
    """A (rows, dim) float32 matrix of embeddings, one vector per row.

    The payload is validated (finite, 2-D, rows >= 1, dim >= 2) and frozen
    against in-place writes. Unit row norms are NOT enforced here; call
    ``l2_normalize`` to establish that state.
    """

    data: np.ndarray
    role: str = "image"

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("feature matrix needs at least one row")
        if arr.shape[1] < 2:
            raise ValueError(f"feature dim must be >= 2, got {arr.shape[1]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains NaN or Inf")
        if self.role not in _ROLES:
            raise ValueError(f"role must be one of {_ROLES}, got {self.role!r}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def as_float64(self) -> np.ndarray:
        """Working-precision copy for arithmetic."""
        return self.data.astype(np.float64)


@dataclass(frozen=True)
class LabelVector:
    """Integer labels aligned with a FeatureMatrix; -1 marks unknown/negative.

    ``num_classes`` is the class count K when known, else 0.
    """

    labels: np.ndarray
    num_classes: int = 0

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.labels, dtype=np.int32)
        if arr.ndim != 1:
            raise ValueError(f"labels must be 1-D, got shape {arr.shape}")
        if arr.size and arr.min() < UNKNOWN_LABEL:
            raise ValueError("labels below -1 are not allowed")
        if self.num_classes < 0:
            raise ValueError("num_classes must be >= 0")
        if self.num_classes and arr.size and arr.max() >= self.num_classes:
            raise ValueError(
                f"label {int(arr.max())} out of range for {self.num_classes} classes"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def write_laic(matrix: FeatureMatrix, labels: LabelVector | None, path) -> None:
    """Serialize a matrix (and optional aligned labels) to ``path``."""
    rows, dim = matrix.rows, matrix.dim
    if rows > 0xFFFFFFFF or dim > 0xFFFFFFFF:
        raise ValueError("matrix too large for u32 header fields")
    if labels is not None and len(labels) != rows:
        raise ValueError(f"label count {len(labels)} != matrix rows {rows}")
    payload = np.ascontiguousarray(matrix.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, dim, DTYPE_F32))
        fh.write(payload.tobytes())
        if labels is not None:
            fh.write(_LABEL_HEADER.pack(LABEL_MAGIC, rows))
            fh.write(np.ascontiguousarray(labels.labels, dtype="<i4").tobytes())


def read_laic(path, role: str = "image") -> tuple[FeatureMatrix, LabelVector | None]:
    """Read a matrix written by ``write_laic``. Floats round-trip bitwise."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated header")
    magic, rows, dim, dtype_code = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if dtype_code != DTYPE_F32:
        raise ValueError(f"unsupported dtype code {dtype_code}")
    if rows < 1:
        raise ValueError("row count must be >= 1")
    if dim < 2:
        raise ValueError(f"feature dim must be >= 2, got {dim}")
    offset = _HEADER.size
    nbytes = rows * dim * 4
    if len(raw) < offset + nbytes:
        raise ValueError("truncated payload")
    data = np.frombuffer(raw, dtype="<f4", count=rows * dim, offset=offset)
    matrix = FeatureMatrix(data.reshape(rows, dim), role=role)
    offset += nbytes

    labels: LabelVector | None = None
    if offset < len(raw):
        if len(raw) < offset + _LABEL_HEADER.size:
            raise ValueError("truncated label block")
        lbl_magic, lbl_rows = _LABEL_HEADER.unpack_from(raw, offset)
        if lbl_magic != LABEL_MAGIC:
            raise ValueError(f"unexpected trailing data (magic {lbl_magic!r})")
        if lbl_rows != rows:
            raise ValueError(f"label block rows {lbl_rows} != matrix rows {rows}")
        offset += _LABEL_HEADER.size
        if len(raw) < offset + rows * 4:
            raise ValueError("truncated label block")
        vals = np.frombuffer(raw, dtype="<i4", count=rows, offset=offset)
        offset += rows * 4
        if offset != len(raw):
            raise ValueError("unexpected trailing data after label block")
        known = vals[vals >= 0]
        k = int(known.max()) + 1 if known.size else 0
        labels = LabelVector(vals, num_classes=k)
    return matrix, labels


def l2_normalize(matrix: FeatureMatrix) -> FeatureMatrix:
    """Scale every row to unit Euclidean norm (computed in float64).

    Raises ValueError naming the first row whose norm is (numerically) zero.
    """
    x = matrix.as_float64()
    norms = np.sqrt((x * x).sum(axis=1))
    bad = np.flatnonzero(norms < ZERO_NORM)
    if bad.size:
        raise ValueError(f"zero-norm row {int(bad[0])} cannot be normalized")
    return FeatureMatrix((x / norms[:, None]).astype(np.float32), role=matrix.role)


def from_csv(path, dim: int, role: str = "image") -> FeatureMatrix:
    """Parse comma-separated float rows; every line must have exactly ``dim``
    fields. Errors carry the 1-based line number."""
    if dim < 2:
        raise ValueError(f"feature dim must be >= 2, got {dim}")
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != dim:
                raise ValueError(
                    f"line {lineno}: expected {dim} fields, got {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ValueError("no data rows in CSV")
    return FeatureMatrix(np.asarray(rows, dtype=np.float32), role=role)


@dataclass(frozen=True)
class HuberSynthConfig:
    """Synthetic contamination-mixture dataset on the unit sphere.

    Images are drawn around K class prototypes. Texts are a two-component
    mixture: with probability ``mixing`` a text is positive (drawn around one
    of the same prototypes), otherwise negative (uniform on the sphere, or
    around decoy prototypes when ``decoy_prototypes`` > 0).

    A point "around" prototype p with concentration c is
    ``normalize(p + g / sqrt(c))`` with g standard normal. Concentration 0 is
    the infinite-noise limit (uniform on the sphere); ``inf`` collapses onto
    the prototype exactly.
    """

    dim: int
    num_classes: int
    num_images: int
    num_texts: int
    mixing: float
    concentration_pos: float
    concentration_neg: float = 0.0
    decoy_prototypes: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.num_images < 1 or self.num_texts < 1:
            raise ValueError("num_images and num_texts must be >= 1")
        if not 0.0 < self.mixing <= 1.0:
            raise ValueError("mixing must lie in (0, 1]")
        if self.concentration_pos < 0 or self.concentration_neg < 0:
            raise ValueError("concentrations must be >= 0")
        if self.decoy_prototypes < 0:
            raise ValueError("decoy_prototypes must be >= 0")


@dataclass(frozen=True)
class HuberDataset:
    images: FeatureMatrix
    image_labels: LabelVector
    texts: FeatureMatrix
    text_labels: LabelVector
    positivity: np.ndarray = field(repr=False)
    prototypes: np.ndarray = field(repr=False)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.sqrt((x * x).sum(axis=1))[:, None]


def _around(protos: np.ndarray, idx: np.ndarray, noise: np.ndarray,
            concentration: float) -> np.ndarray:
    """Sample rows around ``protos[idx]`` at the given concentration."""
    if concentration == 0.0:
        return _unit_rows(noise)
    if math.isinf(concentration):
        return protos[idx]
    return _unit_rows(protos[idx] + noise / math.sqrt(concentration))


def generate_huber_dataset(cfg: HuberSynthConfig) -> HuberDataset:
    """Draw the full synthetic dataset from one seeded generator.

    Identical configs produce bit-identical outputs; generation is
    single-threaded vectorized numpy, so results do not depend on thread
    count. All returned matrices satisfy the unit-row-norm postcondition of
    ``l2_normalize``.
    """
    rng = np.random.default_rng(cfg.seed)
    d, k = cfg.dim, cfg.num_classes

    protos = _unit_rows(rng.standard_normal((k, d)))
    decoys = None
    if cfg.decoy_prototypes:
        decoys = _unit_rows(rng.standard_normal((cfg.decoy_prototypes, d)))

    img_cls = rng.integers(0, k, size=cfg.num_images)
    img_noise = rng.standard_normal((cfg.num_images, d))
    images = _around(protos, img_cls, img_noise, cfg.concentration_pos)

    positivity = rng.random(cfg.num_texts) < cfg.mixing
    txt_cls = rng.integers(0, k, size=cfg.num_texts)
    txt_noise = rng.standard_normal((cfg.num_texts, d))
    texts = np.empty((cfg.num_texts, d), dtype=np.float64)
    pos_rows = _around(protos, txt_cls, txt_noise, cfg.concentration_pos)
    if decoys is not None:
        decoy_idx = rng.integers(0, cfg.decoy_prototypes, size=cfg.num_texts)
        neg_rows = _around(decoys, decoy_idx, txt_noise, cfg.concentration_neg)
    else:
        neg_rows = _unit_rows(txt_noise)
    texts[positivity] = pos_rows[positivity]
    texts[~positivity] = neg_rows[~positivity]

    txt_labels = np.where(positivity, txt_cls, UNKNOWN_LABEL).astype(np.int32)
    return HuberDataset(
        images=FeatureMatrix(images.astype(np.float32), role="image"),
        image_labels=LabelVector(img_cls.astype(np.int32), num_classes=k),
        texts=FeatureMatrix(texts.astype(np.float32), role="text"),
        text_labels=LabelVector(txt_labels, num_classes=k),
        positivity=positivity.copy(),
        prototypes=protos,
    )
