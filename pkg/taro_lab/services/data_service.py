"""
Synthetic clusters, CSV ingestion and view augmentation
"""
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from taro_lab.config import settings
from taro_lab.schemas.configs import AugmentationConfig, SyntheticDatasetSpec
from taro_lab.utils.error_handler import DataError, ParseError, SchemaError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SeedLike = Union[int, np.random.Generator]


@dataclass(frozen=True)
class LabeledSplit:
    """
    Features and labels of one split

    SSL training only ever receives `features`; labels are read by
    evaluation and analysis code.
    """
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise SchemaError(f"features must be [N x d], got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise SchemaError(f"{self.labels.shape[0]} labels for {self.features.shape[0]} rows")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0


@dataclass(frozen=True)
class Dataset:
    train: LabeledSplit
    test: LabeledSplit
    spec: Optional[SyntheticDatasetSpec] = None

    @property
    def dim(self) -> int:
        return self.train.dim

    @property
    def n_classes(self) -> int:
        return max(self.train.n_classes, self.test.n_classes)


def _generator(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _centers(spec: SyntheticDatasetSpec, basis: np.ndarray) -> np.ndarray:
    if spec.layout == "ring":
        radius = spec.separation / (2.0 * np.sin(np.pi / spec.n_classes))
        angles = 2.0 * np.pi * np.arange(spec.n_classes) / spec.n_classes
        return radius * (np.outer(np.cos(angles), basis[:, 0]) + np.outer(np.sin(angles), basis[:, 1]))
    return basis[:, :spec.n_classes].T * (spec.separation / np.sqrt(2.0))


def generate_clusters(spec: SyntheticDatasetSpec) -> Dataset:
    """
    Gaussian clusters around equidistant or ring-shaped centers

    equidistant: centers are orthonormal directions (random rotation)
    scaled by separation / sqrt(2), so every pair is separation apart.
    ring: centers sit on a circle in a random plane with neighbouring
    classes separation apart, so each class has two close rivals.
    Each class is split train/test at spec.train_fraction and each split
    is shuffled.

    Args:
        spec: Dataset description

    Returns:
        Dataset with both splits
    """
    rng = np.random.default_rng(spec.seed)
    basis, _ = np.linalg.qr(rng.normal(size=(spec.dim, spec.dim)))
    centers = _centers(spec, basis) + spec.shift

    n_train = int(round(spec.train_fraction * spec.samples_per_class))
    n_train = min(max(n_train, 1), spec.samples_per_class - 1)

    train_x, train_y, test_x, test_y = [], [], [], []
    for label, center in enumerate(centers):
        points = center + spec.within_std * rng.normal(size=(spec.samples_per_class, spec.dim))
        order = rng.permutation(spec.samples_per_class)
        train_x.append(points[order[:n_train]])
        test_x.append(points[order[n_train:]])
        train_y.append(np.full(n_train, label, dtype=np.int64))
        test_y.append(np.full(spec.samples_per_class - n_train, label, dtype=np.int64))

    def _shuffled(xs, ys) -> LabeledSplit:
        features, labels = np.concatenate(xs), np.concatenate(ys)
        order = rng.permutation(len(labels))
        return LabeledSplit(features=features[order], labels=labels[order])

    dataset = Dataset(train=_shuffled(train_x, train_y), test=_shuffled(test_x, test_y), spec=spec)
    logger.info(
        f"Generated {spec.n_classes} clusters in {spec.dim} dims: "
        f"{len(dataset.train)} train / {len(dataset.test)} test samples"
    )
    return dataset


def feature_std(features: np.ndarray) -> np.ndarray:
    """Per-coordinate standard deviation of a feature matrix"""
    return np.std(features, axis=0)


def default_epsilon(features: np.ndarray, scale: float = 0.1) -> float:
    """scale x the mean per-coordinate standard deviation"""
    return scale * float(np.mean(feature_std(features)))


def augment_views(
    x: np.ndarray,
    config: AugmentationConfig,
    seed: SeedLike,
    scale: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two independent random views of a batch

    Each view is s * (x * keep) + noise, with a per-sample global scale s,
    per-coordinate dropout mask keep and Gaussian noise of std
    noise_scale * scale. Random draws happen even at zero strength, so the
    generator advances identically for every configuration.

    Args:
        x: Inputs [B x d] (or [d])
        config: Augmentation strengths
        seed: Seed or generator
        scale: Per-coordinate feature std for the noise (1 when None)

    Returns:
        (t1x, t2x), same shape as x
    """
    rng = _generator(seed)
    x = np.asarray(x, dtype=np.float64)
    batch_shape = x.shape[:-1] + (1,)
    unit = np.ones(x.shape[-1]) if scale is None else np.asarray(scale, dtype=np.float64)

    def _view() -> np.ndarray:
        noise = rng.normal(size=x.shape) * (config.noise_scale * unit)
        keep = rng.random(size=x.shape) >= config.dropout
        factor = rng.uniform(config.scale_min, config.scale_max, size=batch_shape)
        return factor * (x * keep) + noise

    return _view(), _view()


def _format(value: float) -> str:
    return repr(float(value))


def save_csv_dataset(split: LabeledSplit, path: PathLike):
    """Write `label,feat_0..feat_{d-1}` with round-trip float formatting"""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["label"] + [f"feat_{j}" for j in range(split.dim)])
        for label, row in zip(split.labels, split.features):
            writer.writerow([int(label)] + [_format(v) for v in row])
    logger.info(f"Wrote {len(split)} rows to {path}")


def load_csv_dataset(path: PathLike, expected_dim: Optional[int] = None) -> LabeledSplit:
    """
    Parse a labeled CSV split

    Args:
        path: File with header `label,feat_0,...,feat_{d-1}`
        expected_dim: Required feature width, if known

    Returns:
        LabeledSplit with float64 features and int64 labels

    Raises:
        FileNotFoundError: Missing file
        SchemaError: Bad header, inconsistent width or wrong dimension
        ParseError: Non-numeric field or invalid label (names the line)
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path} is empty")
        dim = len(header) - 1
        if dim < 1 or header[0] != "label" or header[1:] != [f"feat_{j}" for j in range(dim)]:
            raise SchemaError(f"{path}: header must be label,feat_0,...,feat_{{d-1}}")
        if expected_dim is not None and dim != expected_dim:
            raise SchemaError(f"{path} has {dim} features, expected {expected_dim}")

        labels, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != dim + 1:
                raise SchemaError(f"{path}: line {line} has {len(row) - 1} features, header has {dim}")
            try:
                label = int(row[0])
            except ValueError:
                raise ParseError(f"label {row[0]!r} is not an integer", line=line)
            if label < 0:
                raise ParseError(f"negative label {label}", line=line)
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as e:
                raise ParseError(f"non-numeric feature: {e}", line=line)
            if not np.all(np.isfinite(values)):
                raise ParseError("non-finite feature value", line=line)
            labels.append(label)
            rows.append(values)

    if not rows:
        raise DataError(f"{path} has no data rows")
    logger.debug(f"Loaded {len(rows)} rows x {dim} features from {path}")
    return LabeledSplit(
        features=np.asarray(rows, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
    )


def save_dataset(dataset: Dataset, out_dir: PathLike):
    """Write train.csv, test.csv and spec.json into a data directory"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_csv_dataset(dataset.train, out_dir / settings.TRAIN_CSV)
    save_csv_dataset(dataset.test, out_dir / settings.TEST_CSV)
    spec = dataset.spec.model_dump() if dataset.spec is not None else {}
    (out_dir / settings.DATASET_SPEC_FILENAME).write_text(
        json.dumps(spec, indent=2) + "\n", encoding="utf-8"
    )


def load_dataset(data_dir: PathLike, expected_dim: Optional[int] = None) -> Dataset:
    """
    Read a data directory written by save_dataset (spec.json is optional)

    Raises:
        FileNotFoundError: Directory or split file missing
    """
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory {data_dir} does not exist")
    train = load_csv_dataset(data_dir / settings.TRAIN_CSV, expected_dim)
    test = load_csv_dataset(data_dir / settings.TEST_CSV, train.dim)

    spec = None
    spec_path = data_dir / settings.DATASET_SPEC_FILENAME
    if spec_path.exists():
        raw = json.loads(spec_path.read_text(encoding="utf-8") or "{}")
        if raw:
            spec = SyntheticDatasetSpec.model_validate(raw)
    return Dataset(train=train, test=test, spec=spec)
