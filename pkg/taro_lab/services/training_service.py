"""
Adversarial self-supervised training loops

One trainer covers both SSL modes and all three attack modes; the public
train_* functions pin the combination they stand for.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from taro_lab.autodiff import EPS_NORM, Tape, Tensor, add, backward, mul
from taro_lab.models.optimizer import SGD
from taro_lab.models.siamnet import SiamNet, forward_embed
from taro_lab.schemas.configs import AttackConfig, RunConfig
from taro_lab.schemas.reports import Checkpoint, EpochRecord, Metrics
from taro_lab.services.attacks import (
    attack_targeted,
    attack_targeted_contrastive,
    attack_untargeted_ssl,
    check_ball,
    linf_distance,
)
from taro_lab.services.data_service import (
    Dataset,
    augment_views,
    default_epsilon,
    feature_std,
    generate_clusters,
    load_dataset,
)
from taro_lab.services.losses import in_batch_negatives, loss_taro_contrastive, loss_taro_ss
from taro_lab.services.persistence import from_record, net_from_checkpoint
from taro_lab.services.target_selection import Pairing, random_targets, select_targets
from taro_lab.utils.error_handler import (
    ConfigError,
    DegenerateVectorError,
    DivergenceError,
    NonFiniteError,
)
from taro_lab.utils.seeding import generator_state, restore_generator, stream

logger = logging.getLogger(__name__)

EpochCallback = Callable[["TrainingState"], None]

COLLAPSE_SPREAD = 0.05


@dataclass
class TrainingState:
    """Everything a checkpoint needs after a completed epoch"""
    net: SiamNet
    epoch: int
    records: List[EpochRecord]
    optimizer_state: Dict[str, np.ndarray]
    rng_state: Dict
    wall_time: float = 0.0

    @property
    def metrics(self) -> Metrics:
        return Metrics(epoch_losses=[r.loss for r in self.records], wall_time=self.wall_time)


def resolve_attacks(config: RunConfig, features: np.ndarray) -> Tuple[AttackConfig, AttackConfig]:
    """
    Training and evaluation attack settings, filling defaults from the data

    Unset attacks use epsilon = config.epsilon_scale x feature std with K=10,
    alpha=eps/4 for training and K=20, alpha=eps/10 for evaluation.
    """
    epsilon = default_epsilon(features, config.epsilon_scale)
    train_attack = config.train_attack or AttackConfig.for_training(epsilon)
    eval_attack = config.eval_attack or AttackConfig.for_evaluation(epsilon)
    return train_attack, eval_attack


def load_run_dataset(config: RunConfig) -> Dataset:
    """The dataset a run trains on: CSV splits when data_dir is set, else generated"""
    if config.data_dir is not None:
        dataset = load_dataset(config.data_dir, config.model.input_dim)
    else:
        dataset = generate_clusters(config.dataset)
    if dataset.dim != config.model.input_dim:
        raise ConfigError(f"data has {dataset.dim} features, model expects {config.model.input_dim}")
    return dataset


def representation_spread(net: SiamNet, features: np.ndarray) -> float:
    """
    Per-dimension std of the l2-normalized projections, scaled by sqrt(width)

    Close to 1 for projections spread over the sphere, 0 when every input
    maps to the same direction.
    """
    z = forward_embed(net, features).z.data
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    unit = z / np.maximum(norms, EPS_NORM)
    return float(np.mean(np.std(unit, axis=0)) * np.sqrt(z.shape[1]))


class AdversarialTrainer:
    """
    Runs epochs of view generation, attack, loss and SGD update

    Only unlabeled feature matrices reach this class.
    """

    def __init__(self, config: RunConfig, features: np.ndarray):
        """
        Initialize trainer

        Args:
            config: Run configuration
            features: Training features [N x d] (fixes feature std and default epsilon)
        """
        self.config = config
        self.features = np.asarray(features, dtype=np.float64)
        self.scale = feature_std(self.features)
        self.attack, _ = resolve_attacks(config, self.features)
        self.optimizer = SGD(config.optimizer)

    def _mine(self, base, candidates, rng: np.random.Generator) -> np.ndarray:
        pairing = Pairing.cross_view(len(base))
        if self.config.attack_mode == "random_target":
            targets = random_targets(pairing, rng)
        else:
            targets = select_targets(base, candidates, pairing, self.config.score)
        pairing.verify(targets)
        return targets

    def adversaries(self, net: SiamNet, t1: np.ndarray, t2: np.ndarray, rng: np.random.Generator):
        """
        Adversarial versions of both views under the configured attack

        Targets for view 1 are mined among view 2 and vice versa; index i of
        the other view is the positive and never a target.

        Raises:
            SelectionError: Mining returned a sample's own positive
        """
        cfg = self.config
        contrastive = cfg.ssl_mode == "contrastive"
        negatives, mask = in_batch_negatives([Tensor(t1), Tensor(t2)]) if contrastive else (None, None)

        if cfg.attack_mode == "untargeted":
            return tuple(
                attack_untargeted_ssl(
                    net, base, positive, self.attack, cfg.ssl_mode,
                    negatives=negatives, negative_mask=mask, tau=cfg.loss.tau, rng=rng
                )
                for base, positive in ((t1, t2), (t2, t1))
            )

        emb1, emb2 = forward_embed(net, t1), forward_embed(net, t2)
        idx1 = self._mine(emb1, emb2, rng)
        idx2 = self._mine(emb2, emb1, rng)
        if contrastive:
            return (
                attack_targeted_contrastive(net, t1, t2[idx1], self.attack, cfg.loss, negatives, mask, rng),
                attack_targeted_contrastive(net, t2, t1[idx2], self.attack, cfg.loss, negatives, mask, rng),
            )
        return (
            attack_targeted(net, t1, t2[idx1], self.attack, rng),
            attack_targeted(net, t2, t1[idx2], self.attack, rng),
        )

    def training_loss(self, tracked: SiamNet, t1, t2, adv1, adv2) -> Tensor:
        if self.config.ssl_mode == "positive_pair":
            return loss_taro_ss(tracked, t1, adv1, adv2)

        tau = self.config.loss.tau
        z1, z2 = forward_embed(tracked, t1).z, forward_embed(tracked, t2).z
        z1_adv, z2_adv = forward_embed(tracked, adv1).z, forward_embed(tracked, adv2).z
        negatives, mask = in_batch_negatives([z1, z2])
        return mul(add(
            loss_taro_contrastive(z1, z2, z1_adv, negatives, tau, mask),
            loss_taro_contrastive(z2, z1, z2_adv, negatives, tau, mask),
        ), 0.5)

    def train_step(
        self,
        net: SiamNet,
        batch: np.ndarray,
        rng: np.random.Generator
    ) -> Tuple[SiamNet, float, float]:
        """
        One update on one batch

        Returns:
            (updated net, loss value, largest adversarial displacement)
        """
        t1, t2 = augment_views(batch, self.config.augmentation, rng, self.scale)
        adv1, adv2 = self.adversaries(net, t1, t2, rng)
        check_ball(t1, adv1, self.attack.epsilon)
        check_ball(t2, adv2, self.attack.epsilon)
        displacement = max(linf_distance(t1, adv1), linf_distance(t2, adv2))

        tape = Tape()
        tracked = net.track(tape)
        loss = self.training_loss(tracked, t1, t2, adv1, adv2)
        grads = backward(loss, tracked.tensors())
        net = self.optimizer.step(net, dict(zip(tracked.names(), grads)))
        return net, loss.item(), displacement

    def batches(self, rng: np.random.Generator) -> List[np.ndarray]:
        """Shuffled full batches; the remainder is dropped"""
        n = len(self.features)
        size = min(self.config.batch_size, n)
        order = rng.permutation(n)
        return [order[start:start + size] for start in range(0, n - size + 1, size)]

    def fit(
        self,
        net: Optional[SiamNet] = None,
        resume: Optional[Checkpoint] = None,
        on_epoch: Optional[EpochCallback] = None
    ) -> TrainingState:
        """
        Train until config.epochs

        Args:
            net: Starting net (freshly initialized from the init stream when None)
            resume: Checkpoint to continue from (net, momentum, generator, trace)
            on_epoch: Called with the state after every completed epoch

        Returns:
            Final TrainingState

        Raises:
            DivergenceError: Non-finite loss or parameters
        """
        cfg = self.config
        records: List[EpochRecord] = []
        start_epoch = 0
        rng = stream(cfg.seed, "train")

        if resume is not None:
            check_resumable(resume, cfg)
            net = net_from_checkpoint(resume).without_head()
            self.optimizer.load_state_dict({k: from_record(v) for k, v in resume.optimizer_state.items()})
            if resume.seed_state:
                rng = restore_generator(resume.seed_state)
            records = list(resume.epoch_records)
            start_epoch = resume.epoch
            logger.info(f"Resuming from epoch {start_epoch}")
        elif net is None:
            net = SiamNet.initialize(cfg.model, cfg.ssl_mode, stream(cfg.seed, "init"))

        started = time.perf_counter()
        state = TrainingState(net, start_epoch, records, self.optimizer.state_dict(), generator_state(rng))
        for epoch in range(start_epoch + 1, cfg.epochs + 1):
            tic = time.perf_counter()
            losses, displacement = [], 0.0
            for step, idx in enumerate(self.batches(rng)):
                try:
                    net, loss, moved = self.train_step(net, self.features[idx], rng)
                except (NonFiniteError, DegenerateVectorError, DivergenceError) as e:
                    raise DivergenceError(f"training diverged at epoch {epoch}, step {step}: {e}", epoch, step)
                losses.append(loss)
                displacement = max(displacement, moved)

            mean_loss = float(np.mean(losses)) if losses else 0.0
            records.append(EpochRecord(
                epoch=epoch, loss=mean_loss, batches=len(losses), max_displacement=displacement
            ))
            try:
                spread = representation_spread(net, self.features)
            except NonFiniteError as e:
                raise DivergenceError(f"training diverged at epoch {epoch}: {e}", epoch, len(losses))
            logger.info(
                f"Epoch {epoch}/{cfg.epochs}: loss {mean_loss:.6f}, spread {spread:.3f}, "
                f"max displacement {displacement:.4g}, {time.perf_counter() - tic:.2f}s"
            )
            if spread < COLLAPSE_SPREAD:
                logger.warning(f"Projections are collapsing at epoch {epoch} (spread {spread:.4f})")
            state = TrainingState(
                net, epoch, list(records), self.optimizer.state_dict(), generator_state(rng),
                wall_time=time.perf_counter() - started,
            )
            if on_epoch is not None:
                on_epoch(state)

        state.wall_time = time.perf_counter() - started
        return state


def check_resumable(checkpoint: Checkpoint, config: RunConfig):
    """
    Raises:
        ConfigError: Checkpoint was written by a run with different settings
    """
    ours = config.model_dump(exclude={"epochs"})
    theirs = checkpoint.config.model_dump(exclude={"epochs"})
    if ours != theirs:
        changed = sorted(k for k in ours if ours[k] != theirs.get(k))
        raise ConfigError(f"checkpoint was written with different settings: {changed}")
    if checkpoint.epoch > config.epochs:
        raise ConfigError(f"checkpoint is at epoch {checkpoint.epoch}, run asks for {config.epochs}")


def _train(config: RunConfig, dataset: Optional[Dataset], **kwargs) -> Tuple[SiamNet, Metrics]:
    dataset = dataset if dataset is not None else load_run_dataset(config)
    state = AdversarialTrainer(config, dataset.train.features).fit(**kwargs)
    return state.net, state.metrics


def train_taro_positive_pair(config: RunConfig, dataset: Optional[Dataset] = None, **kwargs):
    """
    TARO training for positive-pair-only SSL

    Per batch: two views, targets mined for each view, targeted PGD on both
    views, descent on loss_taro_ss. attack_mode random_target swaps the
    score for uniform target draws.

    Returns:
        (trained SiamNet, Metrics with the epoch losses)
    """
    if config.ssl_mode != "positive_pair" or config.attack_mode == "untargeted":
        raise ConfigError("train_taro_positive_pair needs ssl_mode=positive_pair and a targeted attack mode")
    return _train(config, dataset, **kwargs)


def train_untargeted_baseline(config: RunConfig, dataset: Optional[Dataset] = None, **kwargs):
    """Adversarial SSL with untargeted PGD in either SSL mode"""
    if config.attack_mode != "untargeted":
        raise ConfigError("train_untargeted_baseline needs attack_mode=untargeted")
    return _train(config, dataset, **kwargs)


def train_taro_contrastive(config: RunConfig, dataset: Optional[Dataset] = None, **kwargs):
    """
    TARO training for contrastive SSL

    Targets are mined for both views; adversaries come from the targeted
    contrastive attack and training descends on the averaged two-anchor
    loss_taro_contrastive.
    """
    if config.ssl_mode != "contrastive" or config.attack_mode == "untargeted":
        raise ConfigError("train_taro_contrastive needs ssl_mode=contrastive and a targeted attack mode")
    return _train(config, dataset, **kwargs)


def train_model(config: RunConfig, dataset: Optional[Dataset] = None, **kwargs):
    """Dispatch to the training function matching config's modes"""
    if config.attack_mode == "untargeted":
        return train_untargeted_baseline(config, dataset, **kwargs)
    if config.ssl_mode == "contrastive":
        return train_taro_contrastive(config, dataset, **kwargs)
    return train_taro_positive_pair(config, dataset, **kwargs)
