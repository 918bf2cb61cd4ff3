"""
l-infinity projected gradient ascent and the attacks built on it
"""
import logging
from typing import Callable, Optional

import numpy as np

from taro_lab.autodiff import Tape, Tensor, as_tensor, backward
from taro_lab.models.siamnet import SiamNet, classify_logits, forward_embed
from taro_lab.schemas.configs import AttackConfig, LossConfig, SslMode
from taro_lab.services.losses import (
    Negatives,
    loss_cross_entropy,
    loss_nt_xent,
    loss_ours_rocl_attack,
    loss_ss,
    loss_targeted_attack,
)
from taro_lab.utils.error_handler import AttackError, ConfigError, NonFiniteError

logger = logging.getLogger(__name__)

# Slack allowed when re-checking ||x_adv - x||_inf <= epsilon
BALL_TOLERANCE = 1e-12


def project_linf(delta, epsilon: float) -> Tensor:
    """Clip every coordinate of a perturbation into [-epsilon, epsilon]"""
    if epsilon < 0:
        raise ConfigError(f"epsilon must be non-negative, got {epsilon}")
    return Tensor(np.clip(as_tensor(delta).data, -epsilon, epsilon))


def _feasible(x: np.ndarray, delta: np.ndarray, config: AttackConfig) -> np.ndarray:
    if config.clamp_range is None:
        return delta
    low, high = config.clamp_range
    return np.clip(x + delta, low, high) - x


def linf_distance(a, b) -> float:
    """max |a - b| over all coordinates"""
    diff = as_tensor(a).data - as_tensor(b).data
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def check_ball(x, x_adv, epsilon: float):
    """
    Raises:
        AttackError: x_adv left the epsilon ball around x
    """
    distance = linf_distance(x, x_adv)
    if distance > epsilon + BALL_TOLERANCE:
        raise AttackError(f"adversarial input at distance {distance} exceeds epsilon {epsilon}")


def pgd_ascend(
    lossfn: Callable[[Tensor], Tensor],
    x,
    config: AttackConfig,
    rng: Optional[np.random.Generator] = None
) -> Tensor:
    """
    Maximize lossfn over the l-infinity ball around x

    delta <- clip(delta + alpha * sign(grad), -eps, eps) for K steps, from a
    uniform random start when enabled. sign(0) is 0, so a flat objective
    leaves the point where it started.

    Args:
        lossfn: Maps the perturbed input (a tracked Tensor) to a scalar Tensor
        x: Clean input [d] or [B x d]
        config: Radius, step size, step count and start
        rng: Generator for the random start

    Returns:
        Constant adversarial input with ||x_adv - x||_inf <= epsilon

    Raises:
        AttackError: Non-finite gradient
    """
    x = as_tensor(x).data
    rng = rng if rng is not None else np.random.default_rng(0)
    eps = config.epsilon

    if config.random_start:
        delta = rng.uniform(-eps, eps, size=x.shape)
    else:
        delta = np.zeros(x.shape)
    delta = _feasible(x, delta, config)

    for step in range(config.steps):
        tape = Tape()
        x_pert = tape.watch(x + delta)
        try:
            (grad,) = backward(lossfn(x_pert), [x_pert])
        except NonFiniteError as e:
            raise AttackError(f"non-finite attack gradient at step {step}: {e}")
        delta = project_linf(delta + config.alpha * np.sign(grad.data), eps).data
        delta = _feasible(x, delta, config)

    x_adv = Tensor(x + delta)
    check_ball(x, x_adv, eps)
    return x_adv


def _constant_z(net: SiamNet, x) -> Tensor:
    return forward_embed(net, as_tensor(x).detach()).z


def attack_untargeted_ssl(
    net: SiamNet,
    x_base,
    x_pos,
    config: AttackConfig,
    mode: SslMode,
    negatives: Negatives = None,
    negative_mask: Optional[np.ndarray] = None,
    tau: float = 0.5,
    rng: Optional[np.random.Generator] = None
) -> Tensor:
    """
    Push x_base away from its positive

    positive_pair maximizes L_ss(x_base + delta, x_pos); contrastive
    maximizes nt-xent of x_base + delta against the constant projection of
    x_pos and of the negative inputs.

    Args:
        net: Current (constant) net
        x_base: Inputs to perturb
        x_pos: Their positives, same shape
        config: PGD settings
        mode: positive_pair or contrastive
        negatives: Negative inputs [M x d] (contrastive only)
        negative_mask: [B x M] exclusion mask
        tau: nt-xent temperature
        rng: Generator for the random start
    """
    if mode == "positive_pair":
        def lossfn(x_pert):
            return loss_ss(net, x_pert, x_pos)
    elif mode == "contrastive":
        z_pos = _constant_z(net, x_pos)
        z_neg = None if negatives is None else _constant_z(net, negatives)

        def lossfn(x_pert):
            return loss_nt_xent(forward_embed(net, x_pert).z, [z_pos], z_neg, tau, negative_mask)
    else:
        raise ConfigError(f"unknown ssl mode {mode!r}")
    return pgd_ascend(lossfn, x_base, config, rng)


def attack_targeted(
    net: SiamNet,
    x_base,
    x_target,
    config: AttackConfig,
    rng: Optional[np.random.Generator] = None
) -> Tensor:
    """
    Pull x_base towards x_target in embedding space

    Maximizes -L_ss(x_base + delta, x_target).
    """
    def lossfn(x_pert):
        return loss_targeted_attack(net, x_pert, x_target)

    return pgd_ascend(lossfn, x_base, config, rng)


def attack_targeted_contrastive(
    net: SiamNet,
    x_base,
    x_target,
    config: AttackConfig,
    loss_config: LossConfig,
    negatives: Negatives = None,
    negative_mask: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None
) -> Tensor:
    """
    Targeted attack for contrastive nets

    Maximizes log(1 + sum exp(s(z, z-)/tau)) + w * s(z, z_target) with the
    negative and target projections held constant.
    """
    z_target = _constant_z(net, x_target)
    z_neg = None if negatives is None else _constant_z(net, negatives)

    def lossfn(x_pert):
        return loss_ours_rocl_attack(
            forward_embed(net, x_pert).z, z_neg, z_target, loss_config.tau, loss_config.w, negative_mask
        )

    return pgd_ascend(lossfn, x_base, config, rng)


def attack_supervised_eval(
    net: SiamNet,
    x,
    labels,
    config: AttackConfig,
    rng: Optional[np.random.Generator] = None
) -> Tensor:
    """
    Cross-entropy PGD against encoder + probe head, keeping the worse point

    Per sample the result is the adversarial input if it is misclassified,
    else the clean input if that is misclassified, else whichever of the two
    has the higher loss. Robust accuracy therefore never exceeds clean
    accuracy.

    Args:
        net: Net with a classification head
        x: Inputs [d] or [B x d]
        labels: Labels [B] (a single label for one vector)
        config: PGD settings (evaluation uses K=20, alpha=eps/10)
        rng: Generator for the random start

    Returns:
        Worst-case inputs, same shape as x
    """
    x = as_tensor(x).detach()
    if x.ndim == 1:
        worst = attack_supervised_eval(net, x.data[None, :], labels, config, rng)
        return Tensor(worst.data[0])
    labels = np.atleast_1d(np.asarray(labels))

    def lossfn(x_pert):
        return loss_cross_entropy(classify_logits(net, x_pert), labels)

    x_adv = pgd_ascend(lossfn, x, config, rng)
    logits_clean = classify_logits(net, x).data
    logits_adv = classify_logits(net, x_adv).data
    wrong_adv = np.argmax(logits_adv, axis=1) != labels
    wrong_clean = np.argmax(logits_clean, axis=1) != labels
    higher_loss = _per_sample_ce(logits_adv, labels) >= _per_sample_ce(logits_clean, labels)

    use_adv = wrong_adv | (~wrong_clean & higher_loss)
    worst = np.where(use_adv[:, None], x_adv.data, x.data)
    return Tensor(worst)


def _per_sample_ce(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    peak = np.max(logits, axis=1, keepdims=True)
    lse = np.squeeze(peak, axis=1) + np.log(np.sum(np.exp(logits - peak), axis=1))
    return lse - logits[np.arange(len(labels)), labels]
