"""
Integration tests for the adversarial SSL training loops
"""
from pathlib import Path

import numpy as np
import pytest

from taro_lab.models.siamnet import SiamNet
from taro_lab.schemas.configs import OptimizerConfig, RunConfig
from taro_lab.services import target_selection
from taro_lab.services.data_service import generate_clusters
from taro_lab.services.persistence import load_checkpoint, save_checkpoint
from taro_lab.services.training_service import (
    AdversarialTrainer,
    check_resumable,
    representation_spread,
    resolve_attacks,
    train_model,
    train_taro_contrastive,
    train_taro_positive_pair,
    train_untargeted_baseline,
)
from taro_lab.utils.error_handler import ConfigError, DivergenceError, SelectionError
from taro_lab.utils.seeding import stream

BENCHMARK_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "benchmark.json"


def same_params(a: SiamNet, b: SiamNet) -> bool:
    return a.names() == b.names() and all(
        np.array_equal(a.params[name].data, b.params[name].data) for name in a.names()
    )


def with_updates(config, **updates):
    return config.model_validate({**config.model_dump(), **updates})


@pytest.mark.integration
class TestTrainingLoop:
    """Epoch loop, determinism and resume"""

    def test_zero_epochs_returns_initial_net(self, tiny_run_config, tiny_dataset):
        config = with_updates(tiny_run_config, epochs=0)
        net, metrics = train_taro_positive_pair(config, tiny_dataset)
        initial = SiamNet.initialize(config.model, config.ssl_mode, stream(config.seed, "init"))
        assert same_params(net, initial)
        assert metrics.epoch_losses == []

    def test_records_per_epoch(self, tiny_run_config, tiny_dataset):
        state = AdversarialTrainer(tiny_run_config, tiny_dataset.train.features).fit()
        assert state.epoch == 2
        assert [r.epoch for r in state.records] == [1, 2]
        # 64 training rows in batches of 8
        assert all(r.batches == 8 for r in state.records)
        assert all(np.isfinite(r.loss) and -3.0 <= r.loss <= 3.0 for r in state.records)
        assert all(r.max_displacement <= tiny_run_config.train_attack.epsilon + 1e-12 for r in state.records)

    def test_training_changes_parameters(self, tiny_run_config, tiny_dataset):
        net, _ = train_model(tiny_run_config, tiny_dataset)
        initial = SiamNet.initialize(tiny_run_config.model, "positive_pair", stream(tiny_run_config.seed, "init"))
        assert not same_params(net, initial)

    def test_identical_seeds_are_bitwise_reproducible(self, tiny_run_config, tiny_dataset):
        first = AdversarialTrainer(tiny_run_config, tiny_dataset.train.features).fit()
        second = AdversarialTrainer(tiny_run_config, tiny_dataset.train.features).fit()
        assert same_params(first.net, second.net)
        assert [r.loss for r in first.records] == [r.loss for r in second.records]

    def test_different_seeds_differ(self, tiny_run_config, tiny_dataset):
        first = AdversarialTrainer(tiny_run_config, tiny_dataset.train.features).fit()
        other = with_updates(tiny_run_config, seed=12)
        second = AdversarialTrainer(other, tiny_dataset.train.features).fit()
        assert not same_params(first.net, second.net)

    def test_resume_matches_straight_run(self, tmp_path, tiny_run_config, tiny_dataset):
        features = tiny_dataset.train.features
        straight = AdversarialTrainer(tiny_run_config, features).fit()

        first_half = with_updates(tiny_run_config, epochs=1)
        partial = AdversarialTrainer(first_half, features).fit()
        path = tmp_path / "checkpoint.json"
        save_checkpoint(
            partial.net, first_half, path,
            epoch=partial.epoch,
            optimizer_state=partial.optimizer_state,
            seed_state=partial.rng_state,
            epoch_records=partial.records,
        )

        resumed = AdversarialTrainer(tiny_run_config, features).fit(resume=load_checkpoint(path))
        assert resumed.epoch == 2
        assert same_params(resumed.net, straight.net)
        assert [r.loss for r in resumed.records] == [r.loss for r in straight.records]

    def test_on_epoch_callback(self, tiny_run_config, tiny_dataset):
        seen = []
        AdversarialTrainer(tiny_run_config, tiny_dataset.train.features).fit(
            on_epoch=lambda state: seen.append(state.epoch)
        )
        assert seen == [1, 2]

    def test_divergence_reports_epoch(self, tiny_run_config, tiny_dataset):
        config = with_updates(tiny_run_config, optimizer=OptimizerConfig(lr=1e300).model_dump())
        with pytest.raises(DivergenceError) as excinfo:
            AdversarialTrainer(config, tiny_dataset.train.features).fit()
        assert excinfo.value.epoch == 1


@pytest.mark.integration
class TestTrainingModes:
    """Each attack / SSL mode combination trains end to end"""

    @pytest.mark.parametrize(
        "ssl_mode,attack_mode",
        [
            ("positive_pair", "untargeted"),
            ("positive_pair", "random_target"),
            ("contrastive", "untargeted"),
            ("contrastive", "taro_target"),
            ("contrastive", "random_target"),
        ],
    )
    def test_mode_trains(self, tiny_run_config, tiny_dataset, ssl_mode, attack_mode):
        config = with_updates(tiny_run_config, ssl_mode=ssl_mode, attack_mode=attack_mode, epochs=1)
        net, metrics = train_model(config, tiny_dataset)
        assert len(metrics.epoch_losses) == 1
        assert np.isfinite(metrics.epoch_losses[0])
        assert net.has_predictor == (ssl_mode == "positive_pair")

    def test_contrastive_loss_is_non_negative(self, tiny_run_config, tiny_dataset):
        config = with_updates(tiny_run_config, ssl_mode="contrastive", epochs=1)
        _, metrics = train_taro_contrastive(config, tiny_dataset)
        assert metrics.epoch_losses[0] >= 0.0

    def test_positive_pair_function_rejects_contrastive(self, tiny_run_config, tiny_dataset):
        with pytest.raises(ConfigError):
            train_taro_positive_pair(with_updates(tiny_run_config, ssl_mode="contrastive"), tiny_dataset)

    def test_positive_pair_function_rejects_untargeted(self, tiny_run_config, tiny_dataset):
        with pytest.raises(ConfigError):
            train_taro_positive_pair(with_updates(tiny_run_config, attack_mode="untargeted"), tiny_dataset)

    def test_baseline_rejects_targeted(self, tiny_run_config, tiny_dataset):
        with pytest.raises(ConfigError):
            train_untargeted_baseline(tiny_run_config, tiny_dataset)

    def test_contrastive_function_rejects_positive_pair(self, tiny_run_config, tiny_dataset):
        with pytest.raises(ConfigError):
            train_taro_contrastive(tiny_run_config, tiny_dataset)

    def test_mining_rejects_positive_as_target(self, tiny_run_config, tiny_dataset, monkeypatch):
        def diagonal_scores(base, candidates, pairing, config):
            return np.where(np.eye(len(pairing), dtype=bool), 0.0, -np.inf)

        monkeypatch.setattr(target_selection, "score_matrix", diagonal_scores)
        with pytest.raises(SelectionError):
            AdversarialTrainer(tiny_run_config, tiny_dataset.train.features).fit()


@pytest.mark.unit
class TestRunSettings:
    """Attack defaults and resume compatibility"""

    def test_default_attacks_follow_feature_std(self, tiny_run_config, tiny_dataset):
        config = with_updates(tiny_run_config, train_attack=None, eval_attack=None)
        train_attack, eval_attack = resolve_attacks(config, tiny_dataset.train.features)
        epsilon = 0.1 * float(np.mean(np.std(tiny_dataset.train.features, axis=0)))
        assert train_attack.epsilon == pytest.approx(epsilon)
        assert (train_attack.steps, eval_attack.steps) == (10, 20)
        assert train_attack.alpha == pytest.approx(epsilon / 4)
        assert eval_attack.alpha == pytest.approx(epsilon / 10)

    def test_epsilon_scale(self, tiny_run_config, tiny_dataset):
        config = with_updates(tiny_run_config, train_attack=None, eval_attack=None, epsilon_scale=0.25)
        train_attack, eval_attack = resolve_attacks(config, tiny_dataset.train.features)
        epsilon = 0.25 * float(np.mean(np.std(tiny_dataset.train.features, axis=0)))
        assert train_attack.epsilon == pytest.approx(epsilon)
        assert eval_attack.epsilon == pytest.approx(epsilon)

    def test_explicit_attacks_win(self, tiny_run_config, tiny_dataset):
        train_attack, eval_attack = resolve_attacks(tiny_run_config, tiny_dataset.train.features)
        assert train_attack == tiny_run_config.train_attack
        assert eval_attack == tiny_run_config.eval_attack

    def test_resume_with_changed_settings(self, tmp_path, tiny_run_config, positive_pair_net):
        path = tmp_path / "c.json"
        save_checkpoint(positive_pair_net, tiny_run_config, path, epoch=1)
        with pytest.raises(ConfigError):
            check_resumable(load_checkpoint(path), with_updates(tiny_run_config, seed=99))

    def test_resume_past_target_epochs(self, tmp_path, tiny_run_config, positive_pair_net):
        path = tmp_path / "c.json"
        save_checkpoint(positive_pair_net, tiny_run_config, path, epoch=2)
        with pytest.raises(ConfigError):
            check_resumable(load_checkpoint(path), with_updates(tiny_run_config, epochs=1))

    def test_targeted_modes_need_batches_of_two(self, tiny_run_config):
        with pytest.raises(ValueError):
            with_updates(tiny_run_config, batch_size=1)

    def test_untargeted_contrastive_needs_batches_of_two(self, tiny_run_config):
        for w in (0.0, 2.0):
            with pytest.raises(ValueError):
                with_updates(
                    tiny_run_config, ssl_mode="contrastive", attack_mode="untargeted",
                    batch_size=1, loss={"tau": 0.5, "w": w}
                )

    def test_untargeted_positive_pair_allows_batches_of_one(self, tiny_run_config):
        config = with_updates(tiny_run_config, attack_mode="untargeted", batch_size=1)
        assert config.batch_size == 1


@pytest.mark.unit
class TestRepresentationSpread:
    """Collapse statistic over normalized projections"""

    def test_identical_rows_have_no_spread(self, identity_net):
        assert representation_spread(identity_net(), np.tile([1.0, 2.0], (5, 1))) == pytest.approx(0.0)

    def test_spread_over_axes(self, identity_net):
        x = np.array([[1.0, 0.0], [0.0, 2.0], [-3.0, 0.0], [0.0, -1.0]])
        assert representation_spread(identity_net(), x) == pytest.approx(1.0)

    def test_scale_does_not_matter(self, identity_net, rng):
        x = rng.normal(size=(10, 2))
        assert representation_spread(identity_net(), 5.0 * x) == pytest.approx(representation_spread(identity_net(), x))


@pytest.mark.integration
@pytest.mark.slow
class TestBenchmarkConfig:
    """The trend benchmark's base run trains without collapsing"""

    def test_stays_off_the_loss_floor(self):
        config = RunConfig.model_validate_json(BENCHMARK_CONFIG.read_text(encoding="utf-8"))
        config = with_updates(config, epochs=10)
        dataset = generate_clusters(config.dataset)
        state = AdversarialTrainer(config, dataset.train.features).fit()
        # loss_taro_ss is bounded below by -3
        assert all(r.loss > -3.0 + 1e-2 for r in state.records)
        assert representation_spread(state.net, dataset.train.features) > 0.1
