"""
Checkpoints, metric files and embedding export

Every file is written from a deterministic byte string: JSON documents use
a fixed key order and Python's shortest round-trip float repr, CSV files
use the same float formatting and "\\n" line endings.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from taro_lab.autodiff import Tensor
from taro_lab.models.siamnet import SiamNet, encode, forward_embed, parameter_shapes
from taro_lab.schemas.configs import AttackConfig, RunConfig, ScoreConfig
from taro_lab.schemas.reports import (
    CHECKPOINT_FORMAT_VERSION,
    Checkpoint,
    EpochRecord,
    TensorRecord,
)
from taro_lab.services.attacks import attack_targeted, attack_untargeted_ssl, check_ball
from taro_lab.services.data_service import LabeledSplit
from taro_lab.services.target_selection import Pairing, select_targets
from taro_lab.utils.error_handler import CheckpointError, ConfigError, ShapeMismatchError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

EXPORT_BATCH_SIZE = 64


def to_record(values) -> TensorRecord:
    data = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    return TensorRecord(shape=list(data.shape), data=data.ravel().tolist())


def from_record(record: TensorRecord) -> np.ndarray:
    return np.asarray(record.data, dtype=np.float64).reshape(record.shape)


def dump_json(payload: Any, path: PathLike):
    """Write a JSON document (pydantic models are dumped in json mode)"""
    if hasattr(payload, "model_dump"):
        payload = payload.model_dump(mode="json")
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def save_checkpoint(
    net: SiamNet,
    config: RunConfig,
    path: PathLike,
    epoch: int = 0,
    optimizer_state: Optional[Dict[str, np.ndarray]] = None,
    seed_state: Optional[Dict[str, Any]] = None,
    epoch_records: Optional[List[EpochRecord]] = None
) -> Checkpoint:
    """
    Serialize a net plus everything needed to resume training

    Args:
        net: Parameters to store (head included if present)
        config: Run configuration echo
        path: Output JSON file
        epoch: Completed epochs
        optimizer_state: SGD momentum buffers
        seed_state: Generator state dict of the training stream
        epoch_records: Per-epoch training trace so far

    Returns:
        The Checkpoint that was written
    """
    checkpoint = Checkpoint(
        format_version=CHECKPOINT_FORMAT_VERSION,
        config=config,
        epoch=epoch,
        params={name: to_record(t) for name, t in net.items()},
        optimizer_state={name: to_record(v) for name, v in (optimizer_state or {}).items()},
        seed_state=seed_state or {},
        epoch_records=list(epoch_records or []),
    )
    dump_json(checkpoint, path)
    logger.info(f"Saved checkpoint at epoch {epoch} to {path}")
    return checkpoint


def load_checkpoint(path: PathLike) -> Checkpoint:
    """
    Read and version-check a checkpoint

    Raises:
        FileNotFoundError: Missing file
        CheckpointError: Corrupt payload or unsupported format version
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise CheckpointError(f"{path} does not hold a checkpoint object")
    version = raw.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version!r} is not supported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    try:
        return Checkpoint.model_validate(raw)
    except ValidationError as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e.error_count()} invalid fields")


def net_from_checkpoint(checkpoint: Checkpoint) -> SiamNet:
    """
    Rebuild the net and check every shape against the configured architecture

    Raises:
        ShapeMismatchError: Stored shapes disagree with checkpoint.config
        CheckpointError: Head parameters present but not exactly head.W and head.b
    """
    expected = parameter_shapes(checkpoint.config.model, checkpoint.config.ssl_mode)
    stored = {name: record for name, record in checkpoint.params.items() if not name.startswith("head.")}
    if set(stored) != set(expected):
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        raise ShapeMismatchError(f"checkpoint parameters differ from config: missing {missing}, extra {extra}")
    for name, shape in expected.items():
        if tuple(stored[name].shape) != shape:
            raise ShapeMismatchError(f"{name} has shape {tuple(stored[name].shape)}, config implies {shape}")

    head = sorted(name for name in checkpoint.params if name.startswith("head."))
    if head and head != ["head.W", "head.b"]:
        raise CheckpointError(f"checkpoint head is incomplete or unknown: {head}")

    params = {name: Tensor(from_record(checkpoint.params[name])) for name in expected}
    net = SiamNet(params)
    if head:
        net = net.with_head(from_record(checkpoint.params["head.W"]), from_record(checkpoint.params["head.b"]))
    return net


class MetricsWriter:
    """Appends one EpochRecord per line to metrics.jsonl"""

    def __init__(self, path: PathLike, records: Optional[List[EpochRecord]] = None):
        self.path = Path(path)
        lines = [self._line(record) for record in records or []]
        self.path.write_text("".join(lines), encoding="utf-8")

    @staticmethod
    def _line(record: EpochRecord) -> str:
        return json.dumps(record.model_dump(mode="json")) + "\n"

    def write(self, record: EpochRecord):
        with self.path.open("a", encoding="utf-8", newline="") as handle:
            handle.write(self._line(record))


def read_metrics(path: PathLike) -> List[EpochRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [EpochRecord.model_validate_json(line) for line in lines if line.strip()]


def _format(value: float) -> str:
    return repr(float(value))


def write_rows_csv(path: PathLike, header: List[str], rows: List[List[Any]]):
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def export_embeddings(
    net: SiamNet,
    split: LabeledSplit,
    path: PathLike,
    attack_config: AttackConfig,
    attack: str = "targeted",
    score_config: Optional[ScoreConfig] = None,
    rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """
    Write encoder features of clean and attacked samples

    Columns are sample_id,label,is_adversarial,e_0..e_k; clean rows come
    first, then one adversarial row per sample. Targeted export mines a
    target for every sample within its export batch with the TARO score.

    Args:
        net: Trained net
        split: Samples to export
        path: Output CSV
        attack_config: PGD settings
        attack: "targeted" or "untargeted"
        score_config: Target-selection settings
        rng: Generator for random starts

    Returns:
        The adversarial inputs [N x d], for re-verification
    """
    if attack not in ("targeted", "untargeted"):
        raise ConfigError(f"unknown export attack {attack!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    score_config = score_config or ScoreConfig(exclusion="same_batch")
    features = split.features

    adversarial = []
    for start in range(0, len(split), EXPORT_BATCH_SIZE):
        x = features[start:start + EXPORT_BATCH_SIZE]
        if attack == "targeted" and len(x) >= 2:
            embeddings = forward_embed(net, x)
            chosen = select_targets(embeddings, pairing=Pairing.same_batch(len(x)), config=score_config)
            x_adv = attack_targeted(net, x, x[chosen], attack_config, rng)
        else:
            x_adv = attack_untargeted_ssl(net, x, x, attack_config, "positive_pair", rng=rng)
        check_ball(x, x_adv, attack_config.epsilon)
        adversarial.append(x_adv.data)
    x_adv_all = np.concatenate(adversarial) if adversarial else np.zeros((0, split.dim))

    clean_e = encode(net, features).data
    adv_e = encode(net, x_adv_all).data
    header = ["sample_id", "label", "is_adversarial"] + [f"e_{j}" for j in range(clean_e.shape[1])]
    rows = []
    for flag, block in ((0, clean_e), (1, adv_e)):
        for i, row in enumerate(block):
            rows.append([i, int(split.labels[i]), flag] + [_format(v) for v in row])
    write_rows_csv(path, header, rows)
    logger.info(f"Exported {len(rows)} embedding rows ({attack} attack) to {path}")
    return x_adv_all
