"""
Linear-probe evaluation protocol and target-class analysis
"""
import logging
from typing import Optional

import numpy as np

from taro_lab.autodiff import Tape, Tensor, backward
from taro_lab.models.optimizer import SGD
from taro_lab.models.siamnet import SiamNet, classify_logits, encode, forward_embed, head_logits
from taro_lab.schemas.configs import AttackConfig, OptimizerConfig, ProbeConfig, RunConfig
from taro_lab.schemas.reports import Metrics, TargetClassReport, TransferReport
from taro_lab.services.attacks import attack_supervised_eval, pgd_ascend
from taro_lab.services.data_service import Dataset, LabeledSplit, augment_views, feature_std
from taro_lab.services.losses import loss_cross_entropy
from taro_lab.services.target_selection import Pairing, select_targets, target_class_distribution
from taro_lab.services.training_service import resolve_attacks
from taro_lab.utils.error_handler import DimensionError
from taro_lab.utils.seeding import stream

logger = logging.getLogger(__name__)

HEAD_PARAMS = ["head.W", "head.b"]
EVAL_BATCH_SIZE = 256


def _check_dim(net: SiamNet, split: LabeledSplit):
    if split.dim != net.input_dim:
        raise DimensionError(f"data has {split.dim} features, encoder expects {net.input_dim}")


def _probe_features(
    net: SiamNet,
    x: np.ndarray,
    y: np.ndarray,
    attack: Optional[AttackConfig],
    rng: np.random.Generator
) -> Tensor:
    """Frozen encoder features of a probe batch, adversarial when attack is set"""
    if attack is None:
        return encode(net, x).detach()

    def lossfn(x_pert):
        return loss_cross_entropy(classify_logits(net, x_pert), y)

    return encode(net, pgd_ascend(lossfn, x, attack, rng)).detach()


def fit_linear_head(
    net: SiamNet,
    train: LabeledSplit,
    probe: ProbeConfig,
    seed: int = 0,
    n_classes: Optional[int] = None,
    attack: Optional[AttackConfig] = None
) -> SiamNet:
    """
    Train a linear head on frozen encoder features

    The head starts at zero. With an attack configured, every step
    re-crafts PGD examples against the current head (adversarial training of
    the probe); otherwise the head sees clean features.

    Args:
        net: Encoder to freeze (any existing head is replaced)
        train: Labeled training split
        probe: Epochs, batch size and SGD settings
        seed: Run seed for the probe streams
        n_classes: Number of classes (from the labels when None)
        attack: PGD settings for robust linear evaluation

    Returns:
        Copy of net with the trained head
    """
    _check_dim(net, train)
    n_classes = n_classes or train.n_classes
    net = net.with_head(np.zeros((n_classes, net.encoder_dim)), np.zeros(n_classes))
    optimizer = SGD(
        OptimizerConfig(lr=probe.lr, momentum=probe.momentum, weight_decay=probe.weight_decay),
        names=HEAD_PARAMS,
    )
    order_rng = stream(seed, "probe")
    attack_rng = stream(seed, "probe_attack")

    for epoch in range(probe.epochs):
        order = order_rng.permutation(len(train))
        for start in range(0, len(train), probe.batch_size):
            idx = order[start:start + probe.batch_size]
            x, y = train.features[idx], train.labels[idx]
            features = _probe_features(net, x, y, attack, attack_rng)

            tape = Tape()
            tracked = net.track(tape, names=HEAD_PARAMS)
            loss = loss_cross_entropy(head_logits(tracked, features), y)
            grads = backward(loss, [tracked.params[name] for name in HEAD_PARAMS])
            net = optimizer.step(net, dict(zip(HEAD_PARAMS, grads)))
    logger.debug(f"Fitted {'robust ' if attack else ''}linear head over {probe.epochs} epochs")
    return net


def predict_proba(net: SiamNet, x: np.ndarray) -> np.ndarray:
    """Probe class probabilities [N x C]"""
    logits = classify_logits(net, x).data
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def evaluate_head(
    net: SiamNet,
    test: LabeledSplit,
    eval_attack: Optional[AttackConfig],
    seed: int = 0
) -> Metrics:
    """
    Clean and robust accuracy (percent) of encoder + head

    Robust accuracy uses attack_supervised_eval, so it never exceeds clean
    accuracy.
    """
    _check_dim(net, test)
    rng = stream(seed, "eval_attack")
    clean_hits, robust_hits = 0, 0
    for start in range(0, len(test), EVAL_BATCH_SIZE):
        x = test.features[start:start + EVAL_BATCH_SIZE]
        y = test.labels[start:start + EVAL_BATCH_SIZE]
        clean_hits += int(np.sum(np.argmax(classify_logits(net, x).data, axis=1) == y))
        if eval_attack is not None:
            worst = attack_supervised_eval(net, x, y, eval_attack, rng)
            robust_hits += int(np.sum(np.argmax(classify_logits(net, worst).data, axis=1) == y))

    total = max(len(test), 1)
    return Metrics(
        clean_acc=100.0 * clean_hits / total,
        robust_acc=100.0 * robust_hits / total if eval_attack is not None else None,
    )


def linear_evaluation(
    net: SiamNet,
    train: LabeledSplit,
    test: LabeledSplit,
    eval_attack: Optional[AttackConfig],
    probe: Optional[ProbeConfig] = None,
    seed: int = 0,
    n_classes: Optional[int] = None
) -> Metrics:
    """
    Standard linear evaluation: clean-trained head, clean and PGD accuracy

    Args:
        net: Trained encoder (frozen)
        train: Probe training split
        test: Held-out split
        eval_attack: PGD settings for robust accuracy (None skips it)
        probe: Probe training settings
        seed: Run seed
        n_classes: Class count (from both splits when None)

    Returns:
        Metrics with clean_acc and robust_acc
    """
    n_classes = n_classes or max(train.n_classes, test.n_classes)
    head = fit_linear_head(net, train, probe or ProbeConfig(), seed, n_classes)
    metrics = evaluate_head(head, test, eval_attack, seed)
    logger.info(f"Linear evaluation: clean {metrics.clean_acc:.2f}%, robust {metrics.robust_acc}")
    return metrics


def robust_linear_evaluation(
    net: SiamNet,
    train: LabeledSplit,
    test: LabeledSplit,
    train_attack: AttackConfig,
    eval_attack: Optional[AttackConfig],
    probe: Optional[ProbeConfig] = None,
    seed: int = 0,
    n_classes: Optional[int] = None
) -> Metrics:
    """
    Robust linear evaluation: head trained on PGD examples, same test protocol

    With train_attack.epsilon == 0 this reproduces linear_evaluation exactly.
    """
    n_classes = n_classes or max(train.n_classes, test.n_classes)
    head = fit_linear_head(net, train, probe or ProbeConfig(), seed, n_classes, attack=train_attack)
    metrics = evaluate_head(head, test, eval_attack, seed)
    logger.info(f"Robust linear evaluation: clean {metrics.clean_acc:.2f}%, robust {metrics.robust_acc}")
    return metrics


def transfer_evaluation(
    net: SiamNet,
    dataset: Dataset,
    train_attack: AttackConfig,
    eval_attack: AttackConfig,
    probe: Optional[ProbeConfig] = None,
    seed: int = 0
) -> TransferReport:
    """
    Linear and robust linear evaluation of a pretrained encoder on new data

    Raises:
        DimensionError: New data width differs from the encoder input
    """
    _check_dim(net, dataset.train)
    n_classes = dataset.n_classes
    return TransferReport(
        linear=linear_evaluation(net, dataset.train, dataset.test, eval_attack, probe, seed, n_classes),
        robust_linear=robust_linear_evaluation(
            net, dataset.train, dataset.test, train_attack, eval_attack, probe, seed, n_classes
        ),
    )


def evaluate_run(
    net: SiamNet,
    dataset: Dataset,
    config: RunConfig,
    robust_head: bool = False,
    eval_attack: Optional[AttackConfig] = None
) -> Metrics:
    """Evaluate a trained net with the attack settings its run config implies"""
    train_attack, default_eval = resolve_attacks(config, dataset.train.features)
    eval_attack = eval_attack or default_eval
    if robust_head:
        return robust_linear_evaluation(
            net, dataset.train, dataset.test, train_attack, eval_attack, config.probe, config.seed, dataset.n_classes
        )
    return linear_evaluation(net, dataset.train, dataset.test, eval_attack, config.probe, config.seed, dataset.n_classes)


def analyze_targets(net: SiamNet, split: LabeledSplit, config: RunConfig) -> TargetClassReport:
    """
    Which classes the TARO score picks as targets

    A clean linear probe supplies class probabilities. The split is batched
    as in training; within each batch targets for view 1 are mined among
    view 2 and mapped back to their instances, whose clean probe
    probabilities are then compared with those of the base samples.
    """
    _check_dim(net, split)
    n_classes = split.n_classes
    head = fit_linear_head(net, split, config.probe, config.seed, n_classes)
    probs = predict_proba(head, split.features)

    rng = stream(config.seed, "analysis")
    scale = feature_std(split.features)
    order = rng.permutation(len(split))
    size = min(config.batch_size, len(split))
    base_idx, target_idx = [], []
    for start in range(0, len(split) - size + 1, size):
        idx = order[start:start + size]
        t1, t2 = augment_views(split.features[idx], config.augmentation, rng, scale)
        chosen = select_targets(
            forward_embed(net, t1), forward_embed(net, t2), Pairing.cross_view(len(idx)), config.score
        )
        base_idx.extend(idx.tolist())
        target_idx.extend(idx[chosen].tolist())

    base_idx = np.asarray(base_idx, dtype=np.intp)
    report = target_class_distribution(
        np.asarray(target_idx, dtype=np.intp), split.labels[base_idx], probs, probs[base_idx], n_classes
    )
    logger.info(f"Analyzed targets of {len(base_idx)} samples, confused fraction {report.confused_fraction}")
    return report
