"""
Self-supervised, adversarial and probe losses

All losses accept a single vector or a batch. Batched losses are averaged
over samples, which keeps the per-sample input gradients separable: an
attack on a batch moves every row exactly as it would move alone (up to
the positive 1/B factor, which the signed PGD step ignores).
"""
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from taro_lab.autodiff import (
    Tensor,
    add,
    as_tensor,
    concat,
    cosine_similarity,
    l2_normalize,
    logsumexp,
    matmul,
    mean,
    mul,
    neg,
    reduce_sum,
    reshape,
    stop_gradient,
    sub,
    transpose,
)
from taro_lab.models.siamnet import EmbeddingSet, SiamNet, forward_embed
from taro_lab.utils.error_handler import ContractError, DimensionError

logger = logging.getLogger(__name__)

Negatives = Union[Tensor, np.ndarray, Sequence[Tensor], None]


def negative_cosine(p, z) -> Tensor:
    """
    -cos(p, stop_gradient(z)), one value per row

    Args:
        p: Predictor output [d] or [B x d]
        z: Projection of the other view, same shape; never receives gradient

    Returns:
        Scalar tensor, or [B] for batches
    """
    return neg(cosine_similarity(p, stop_gradient(z)))


def ss_from_embeddings(a: EmbeddingSet, b: EmbeddingSet) -> Tensor:
    """Symmetric SimSiam loss between two already embedded inputs"""
    per_sample = add(negative_cosine(a.p, b.z), negative_cosine(b.p, a.z))
    return mean(mul(per_sample, 0.5))


def loss_ss(net: SiamNet, x1, x2) -> Tensor:
    """
    Symmetric positive-pair loss

    -1/2 cos(h(g(f(x1))), sg(g(f(x2)))) - 1/2 cos(h(g(f(x2))), sg(g(f(x1)))),
    averaged over the batch. Lies in [-1, 1] per sample.

    Args:
        net: SiamNet with predictor (contrastive nets use p = z)
        x1: First input [d] or [B x d]
        x2: Second input, same shape

    Returns:
        Scalar loss tensor
    """
    x1, x2 = as_tensor(x1), as_tensor(x2)
    if x1.shape != x2.shape:
        raise DimensionError(f"loss_ss inputs differ in shape: {x1.shape} vs {x2.shape}")
    return ss_from_embeddings(forward_embed(net, x1), forward_embed(net, x2))


def loss_targeted_attack(net: SiamNet, x_pert, x_target) -> Tensor:
    """Attack objective pulling x_pert towards x_target: -loss_ss"""
    return neg(loss_ss(net, x_pert, x_target))


def loss_taro_ss(net: SiamNet, t1x, t1x_adv, t2x_adv) -> Tensor:
    """
    Positive-pair training loss over the clean view and both adversarial views

    L_ss(t1x, t1x_adv) + L_ss(t1x_adv, t2x_adv) + L_ss(t2x_adv, t1x); every
    input is embedded once and the three pairings share those embeddings.
    """
    clean = forward_embed(net, t1x)
    adv1 = forward_embed(net, t1x_adv)
    adv2 = forward_embed(net, t2x_adv)
    return add(
        add(ss_from_embeddings(clean, adv1), ss_from_embeddings(adv1, adv2)),
        ss_from_embeddings(adv2, clean),
    )


def _as_rows(v) -> Tensor:
    v = as_tensor(v)
    if v.ndim == 1:
        return reshape(v, (1, v.shape[0]))
    if v.ndim != 2:
        raise DimensionError(f"embeddings must be [d] or [B x d], got {v.shape}")
    return v


def _stack_negatives(negatives: Negatives, width: int) -> Optional[Tensor]:
    if negatives is None:
        return None
    if isinstance(negatives, (Tensor, np.ndarray)):
        stacked = as_tensor(negatives)
        if stacked.ndim == 1:
            stacked = _as_rows(stacked)
    else:
        rows = [_as_rows(n) for n in negatives]
        if not rows:
            return None
        stacked = concat(rows, axis=0)
    if stacked.shape[0] == 0:
        return None
    if stacked.shape[1] != width:
        raise DimensionError(f"negatives have width {stacked.shape[1]}, anchors {width}")
    return stacked


def in_batch_negatives(views: Sequence) -> Tuple[Tensor, np.ndarray]:
    """
    Negatives for every anchor from the other instances of a batch

    Args:
        views: Embeddings of the same B instances under each view, [B x d] each

    Returns:
        (stacked views [kB x d], mask [B x kB]) where mask[i, j] is False
        whenever column j belongs to instance i
    """
    rows = [_as_rows(v) for v in views]
    batch = rows[0].shape[0]
    stacked = concat(rows, axis=0)
    owner = np.arange(stacked.shape[0]) % batch
    mask = owner[None, :] != np.arange(batch)[:, None]
    return stacked, mask


def nt_xent_rows(
    anchors,
    positives: Sequence,
    negatives: Negatives,
    tau: float,
    negative_mask: Optional[np.ndarray] = None
) -> Tensor:
    """
    Per-anchor nt-xent values

    -log( sum_pos exp(s(z,z+)/tau) / (sum_pos exp(s(z,z+)/tau) + sum_neg exp(s(z,z-)/tau)) )
    evaluated in the stable form lse(all) - lse(positives). With no positives
    the numerator set is {1} (a zero logit), which is the attack form
    log(1 + sum_neg exp(s(z,z-)/tau)).

    Args:
        anchors: [B x d]
        positives: Sequence of [B x d]; row i of each is a positive of anchor i
        negatives: [M x d] shared by all anchors, or None
        tau: Temperature
        negative_mask: [B x M] booleans, False drops a negative for that anchor

    Returns:
        [B] tensor
    """
    if tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")
    anchors = _as_rows(anchors)
    batch, width = anchors.shape
    unit = l2_normalize(anchors, axis=1)

    positive_logits = []
    for positive in positives:
        positive = _as_rows(positive)
        if positive.shape != anchors.shape:
            raise DimensionError(f"positive shape {positive.shape} differs from anchors {anchors.shape}")
        sims = reduce_sum(mul(unit, l2_normalize(positive, axis=1)), axis=1)
        positive_logits.append(reshape(mul(sims, 1.0 / tau), (batch, 1)))
    if not positive_logits:
        positive_logits = [Tensor(np.zeros((batch, 1)))]

    parts = list(positive_logits)
    masks = [np.ones((batch, len(positive_logits)), dtype=bool)]
    stacked = _stack_negatives(negatives, width)
    if stacked is not None:
        neg_unit = l2_normalize(stacked, axis=1)
        parts.append(mul(matmul(unit, transpose(neg_unit)), 1.0 / tau))
        if negative_mask is None:
            negative_mask = np.ones((batch, stacked.shape[0]), dtype=bool)
        negative_mask = np.asarray(negative_mask, dtype=bool)
        if negative_mask.shape != (batch, stacked.shape[0]):
            raise DimensionError(
                f"negative mask {negative_mask.shape} does not fit {batch} anchors x {stacked.shape[0]} negatives"
            )
        masks.append(negative_mask)

    everything = concat(parts, axis=1)
    return sub(
        logsumexp(everything, axis=1, mask=np.concatenate(masks, axis=1)),
        logsumexp(concat(positive_logits, axis=1), axis=1),
    )


def loss_nt_xent(
    z,
    positives: Sequence,
    negatives: Negatives,
    tau: float,
    negative_mask: Optional[np.ndarray] = None
) -> Tensor:
    """
    Multi-positive normalized temperature-scaled cross entropy

    Args:
        z: Anchor [d] or anchors [B x d]
        positives: Non-empty sequence of positives shaped like z
        negatives: Sequence of [d] vectors or an [M x d] tensor (may be empty)
        tau: Temperature
        negative_mask: Optional [B x M] exclusion mask

    Returns:
        Scalar loss, averaged over anchors

    Raises:
        ContractError: Empty positive set or non-positive temperature
    """
    if len(positives) == 0:
        raise ContractError("nt-xent needs at least one positive")
    return mean(nt_xent_rows(z, positives, negatives, tau, negative_mask))


def loss_ours_rocl_attack(
    z,
    negatives: Negatives,
    z_target,
    tau: float,
    w: float,
    negative_mask: Optional[np.ndarray] = None
) -> Tensor:
    """
    Targeted contrastive attack objective

    log(1 + sum_neg exp(s(z, z-)/tau)) + w * s(z, z_target), averaged over
    anchors. Maximizing it pushes z away from the negatives and towards the
    target. Without negatives only the weighted similarity remains.

    Args:
        z: Projection of the perturbed input [d] or [B x d]
        negatives: Negative projections (constants)
        z_target: Target projection per anchor, shaped like z
        tau: Temperature
        w: Similarity weight (>= 0)
        negative_mask: Optional [B x M] exclusion mask
    """
    if w < 0:
        raise ContractError(f"similarity weight must be non-negative, got {w}")
    anchors = _as_rows(z)
    targets = _as_rows(z_target)
    if targets.shape != anchors.shape:
        raise DimensionError(f"target shape {targets.shape} differs from anchors {anchors.shape}")
    spread = nt_xent_rows(anchors, [], negatives, tau, negative_mask)
    pull = mul(cosine_similarity(anchors, targets, axis=1), w)
    return mean(add(spread, pull))


def loss_taro_contrastive(
    z1,
    z2,
    z1_adv,
    negatives: Negatives,
    tau: float,
    negative_mask: Optional[np.ndarray] = None
) -> Tensor:
    """nt-xent of the clean view against {other view, its adversarial view}"""
    return loss_nt_xent(z1, [z2, z1_adv], negatives, tau, negative_mask)


def loss_cross_entropy(logits, labels) -> Tensor:
    """
    Softmax cross entropy

    Args:
        logits: [C] or [B x C]
        labels: Class index, or [B] indices

    Returns:
        Scalar loss, averaged over the batch

    Raises:
        ContractError: A label lies outside [0, C)
    """
    logits = _as_rows(logits)
    n_classes = logits.shape[1]
    labels = np.atleast_1d(np.asarray(labels))
    if labels.shape != (logits.shape[0],):
        raise DimensionError(f"{labels.shape[0]} labels for {logits.shape[0]} rows of logits")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ContractError("labels must be integers")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ContractError(f"label out of range [0, {n_classes})")

    one_hot = np.zeros(logits.shape)
    one_hot[np.arange(logits.shape[0]), labels] = 1.0
    picked = reduce_sum(mul(logits, one_hot), axis=1)
    return mean(sub(logsumexp(logits, axis=1), picked))
