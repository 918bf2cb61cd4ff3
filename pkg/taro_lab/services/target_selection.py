"""
Score-based target mining for targeted attacks
"""
import logging
from typing import List, Optional, Sequence

import numpy as np

from taro_lab.autodiff import EPS_NORM, Tensor
from taro_lab.models.siamnet import EmbeddingSet
from taro_lab.schemas.configs import ScoreConfig
from taro_lab.schemas.reports import TargetClassReport
from taro_lab.utils.error_handler import (
    ConfigError,
    DegenerateVectorError,
    DimensionError,
    SelectionError,
)

logger = logging.getLogger(__name__)


def _array(v) -> np.ndarray:
    return v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)


def score_entropy(p_prime, tau: float):
    """
    Shannon entropy of softmax(p' / tau)

    Args:
        p_prime: Predictor output [d], or [M x d] for one entropy per row
        tau: Score temperature

    Returns:
        float for a vector, ndarray [M] for a matrix
    """
    if tau <= 0:
        raise ConfigError(f"score temperature must be positive, got {tau}")
    logits = _array(p_prime) / tau
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    entropy = -np.sum(np.exp(log_probs) * log_probs, axis=-1)
    return float(entropy) if entropy.ndim == 0 else entropy


def score_similarity(e, e_prime):
    """
    Cosine similarity of encoder features

    Vectors give a float; [B x d] against [M x d] gives the [B x M] matrix.

    Raises:
        DegenerateVectorError: A feature vector has (near) zero norm
    """
    a, b = _array(e), _array(e_prime)
    a2, b2 = np.atleast_2d(a), np.atleast_2d(b)
    if a2.shape[1] != b2.shape[1]:
        raise DimensionError(f"feature widths differ: {a2.shape[1]} vs {b2.shape[1]}")
    norm_a = np.linalg.norm(a2, axis=1, keepdims=True)
    norm_b = np.linalg.norm(b2, axis=1, keepdims=True)
    if np.any(norm_a <= EPS_NORM) or np.any(norm_b <= EPS_NORM):
        raise DegenerateVectorError("cannot score a zero feature vector")
    sims = (a2 / norm_a) @ (b2 / norm_b).T
    if a.ndim == 1 and b.ndim == 1:
        return float(sims[0, 0])
    return sims


class Pairing:
    """
    Which candidates each base sample may not target

    cross_view: candidates are the other view of the batch; index i holds
    the positive of base i and is excluded.
    same_batch: candidates are the batch itself; the sample and its positive
    partner (if any) are excluded.
    """

    def __init__(self, excluded: Sequence[Sequence[int]], n_candidates: int):
        self.excluded: List[frozenset] = [frozenset(int(j) for j in row) for row in excluded]
        self.n_candidates = n_candidates
        for row in self.excluded:
            if any(j < 0 or j >= n_candidates for j in row):
                raise DimensionError(f"excluded index outside [0, {n_candidates})")

    @classmethod
    def cross_view(cls, batch_size: int) -> "Pairing":
        return cls([[i] for i in range(batch_size)], batch_size)

    @classmethod
    def same_batch(cls, batch_size: int, positives: Optional[Sequence[int]] = None) -> "Pairing":
        if positives is None:
            return cls([[i] for i in range(batch_size)], batch_size)
        return cls([[i, positives[i]] for i in range(batch_size)], batch_size)

    @classmethod
    def for_config(cls, config: ScoreConfig, batch_size: int) -> "Pairing":
        if config.exclusion == "cross_view":
            return cls.cross_view(batch_size)
        return cls.same_batch(batch_size)

    def __len__(self) -> int:
        return len(self.excluded)

    def mask(self) -> np.ndarray:
        """[B x M] booleans, True where candidate j is excluded for base i"""
        out = np.zeros((len(self.excluded), self.n_candidates), dtype=bool)
        for i, row in enumerate(self.excluded):
            out[i, list(row)] = True
        return out

    def check(self):
        if len(self.excluded) < 2:
            raise SelectionError("target selection needs a batch of at least 2")
        if np.any(np.all(self.mask(), axis=1)):
            raise SelectionError("some base sample has no eligible target")

    def verify(self, targets: np.ndarray):
        """
        Raises:
            SelectionError: A target is the sample itself or its positive
        """
        targets = np.asarray(targets)
        if targets.shape != (len(self.excluded),):
            raise SelectionError(f"expected {len(self.excluded)} targets, got shape {targets.shape}")
        bad = [i for i, (j, row) in enumerate(zip(targets.tolist(), self.excluded)) if j in row]
        if bad:
            raise SelectionError(f"targets of samples {bad[:5]} point at the sample or its positive")


def _row_normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(matrix * matrix, axis=1, keepdims=True))
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


def score_matrix(
    base: EmbeddingSet,
    candidates: EmbeddingSet,
    pairing: Pairing,
    config: ScoreConfig
) -> np.ndarray:
    """
    Final target scores [B x M]; excluded entries are -inf

    Per base row, the similarity term (excluded entries set to -1) and the
    candidate entropy term are each divided by their Euclidean norm over
    the row before being added.
    """
    e_base, e_cand = _array(base.e), _array(candidates.e)
    if e_base.ndim != 2 or e_cand.ndim != 2:
        raise DimensionError("target selection needs batched embeddings")
    if e_base.shape[0] != len(pairing) or e_cand.shape[0] != pairing.n_candidates:
        raise DimensionError(
            f"pairing is {len(pairing)} x {pairing.n_candidates}, "
            f"embeddings are {e_base.shape[0]} x {e_cand.shape[0]}"
        )
    pairing.check()
    excluded = pairing.mask()

    similarity = np.where(excluded, -1.0, score_similarity(e_base, e_cand))
    entropy = np.broadcast_to(
        score_entropy(_array(candidates.p), config.tau_score), similarity.shape
    ).copy()

    sim_term = _row_normalize(similarity)
    ent_term = _row_normalize(entropy)
    if config.components == "taro":
        scores = sim_term + ent_term
    elif config.components == "similarity":
        scores = sim_term
    else:
        scores = ent_term
    return np.where(excluded, -np.inf, scores)


def select_targets(
    base: EmbeddingSet,
    candidates: Optional[EmbeddingSet] = None,
    pairing: Optional[Pairing] = None,
    config: Optional[ScoreConfig] = None
) -> np.ndarray:
    """
    Pick one target per base sample: argmax of the score over eligible candidates

    Ties go to the lowest index.

    Args:
        base: Embeddings of the samples to attack
        candidates: Candidate pool (the base batch itself when None)
        pairing: Exclusions (derived from config when None)
        config: Score settings

    Returns:
        int array [B] of candidate indices

    Raises:
        SelectionError: Batch smaller than 2 or a row without eligible candidate
    """
    config = config or ScoreConfig()
    candidates = candidates if candidates is not None else base
    if pairing is None:
        pairing = Pairing.for_config(config, len(base))
    scores = score_matrix(base, candidates, pairing, config)
    # np.argmax returns the first maximum
    return np.argmax(scores, axis=1)


def random_targets(pairing: Pairing, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random eligible target per base sample"""
    pairing.check()
    excluded = pairing.mask()
    picks = np.empty(len(pairing), dtype=np.intp)
    for i in range(len(pairing)):
        eligible = np.flatnonzero(~excluded[i])
        picks[i] = eligible[rng.integers(len(eligible))]
    return picks


def target_class_distribution(
    selected: np.ndarray,
    base_labels: np.ndarray,
    target_probs: np.ndarray,
    base_probs: np.ndarray,
    n_classes: int
) -> TargetClassReport:
    """
    Per base class: which classes the chosen targets fall into

    Args:
        selected: Target index per base sample, into the rows of target_probs
        base_labels: True class of each base sample
        target_probs: Probe probabilities of the candidate pool [M x C]
        base_probs: Probe probabilities of the base samples [B x C]
        n_classes: C

    Returns:
        TargetClassReport whose count rows sum to the number of base samples
    """
    selected = np.asarray(selected, dtype=np.intp)
    base_labels = np.asarray(base_labels, dtype=np.intp)
    if selected.shape != base_labels.shape:
        raise DimensionError("one selected target per base sample required")

    picked_probs = target_probs[selected]
    picked_class = np.argmax(picked_probs, axis=1)

    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (base_labels, picked_class), 1)

    mean_probability = np.zeros((n_classes, n_classes))
    base_confusion = np.zeros((n_classes, n_classes))
    top_confused: List[List[int]] = []
    confused_fraction: List[float] = []
    for c in range(n_classes):
        rows = base_labels == c
        if np.any(rows):
            mean_probability[c] = picked_probs[rows].mean(axis=0)
            base_confusion[c] = base_probs[rows].mean(axis=0)
        others = [k for k in np.argsort(-base_confusion[c], kind="stable") if k != c]
        top = [int(k) for k in others[:2]]
        top_confused.append(top)
        total = counts[c].sum()
        confused_fraction.append(float(counts[c, top].sum() / total) if total else 0.0)

    logger.debug(f"Target class distribution over {len(selected)} base samples")
    return TargetClassReport(
        n_classes=n_classes,
        counts=counts.tolist(),
        mean_probability=mean_probability.tolist(),
        base_confusion=base_confusion.tolist(),
        top_confused=top_confused,
        confused_fraction=confused_fraction,
    )
