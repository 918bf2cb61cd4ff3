"""
Tests for the linear-probe protocols and target analysis
"""
import numpy as np
import pytest

from taro_lab.schemas.configs import AttackConfig, ProbeConfig
from taro_lab.services.data_service import Dataset, LabeledSplit
from taro_lab.services.evaluation_service import (
    analyze_targets,
    evaluate_head,
    evaluate_run,
    fit_linear_head,
    linear_evaluation,
    predict_proba,
    robust_linear_evaluation,
    transfer_evaluation,
)
from taro_lab.utils.error_handler import DimensionError

PROBE = ProbeConfig(epochs=20, batch_size=16)


@pytest.mark.integration
class TestLinearEvaluation:
    """Clean and robust linear probes"""

    def test_separable_clusters_through_identity_encoder(self, identity_net, tiny_dataset):
        metrics = linear_evaluation(identity_net(4), tiny_dataset.train, tiny_dataset.test, None, PROBE)
        assert metrics.clean_acc >= 90.0
        assert metrics.robust_acc is None

    def test_robust_accuracy_bounded_by_clean(self, positive_pair_net, tiny_dataset):
        attack = AttackConfig(epsilon=0.5, alpha=0.1, steps=5)
        metrics = linear_evaluation(positive_pair_net, tiny_dataset.train, tiny_dataset.test, attack, PROBE)
        assert 0.0 <= metrics.robust_acc <= metrics.clean_acc <= 100.0

    def test_zero_radius_attack_keeps_accuracy(self, positive_pair_net, tiny_dataset):
        attack = AttackConfig(epsilon=0.0, alpha=0.0, steps=3)
        metrics = linear_evaluation(positive_pair_net, tiny_dataset.train, tiny_dataset.test, attack, PROBE)
        assert metrics.robust_acc == metrics.clean_acc

    def test_robust_probe_at_zero_radius_matches_clean_probe(self, positive_pair_net, tiny_dataset):
        train, test = tiny_dataset.train, tiny_dataset.test
        eval_attack = AttackConfig(epsilon=0.1, alpha=0.02, steps=2)
        clean = linear_evaluation(positive_pair_net, train, test, eval_attack, PROBE, seed=4)
        robust = robust_linear_evaluation(
            positive_pair_net, train, test, AttackConfig(epsilon=0.0, alpha=0.0, steps=2), eval_attack, PROBE, seed=4
        )
        assert robust == clean

    def test_head_starts_at_zero(self, positive_pair_net, tiny_dataset):
        net = fit_linear_head(positive_pair_net, tiny_dataset.train, ProbeConfig(epochs=0))
        assert np.all(net.params["head.W"].data == 0.0)
        np.testing.assert_allclose(predict_proba(net, tiny_dataset.test.features[:3]), 0.25)

    def test_probe_leaves_encoder_untouched(self, positive_pair_net, tiny_dataset):
        net = fit_linear_head(positive_pair_net, tiny_dataset.train, ProbeConfig(epochs=2, batch_size=16))
        for name, tensor in positive_pair_net.items():
            np.testing.assert_array_equal(net.params[name].data, tensor.data)

    def test_probe_is_deterministic(self, positive_pair_net, tiny_dataset):
        first = fit_linear_head(positive_pair_net, tiny_dataset.train, PROBE, seed=3)
        second = fit_linear_head(positive_pair_net, tiny_dataset.train, PROBE, seed=3)
        np.testing.assert_array_equal(first.params["head.W"].data, second.params["head.W"].data)

    def test_dimension_mismatch(self, positive_pair_net):
        split = LabeledSplit(features=np.zeros((4, 3)), labels=np.array([0, 1, 0, 1]))
        with pytest.raises(DimensionError):
            linear_evaluation(positive_pair_net, split, split, None, PROBE)

    def test_evaluate_head_empty_attack(self, identity_net, tiny_dataset):
        head = fit_linear_head(identity_net(4), tiny_dataset.train, PROBE)
        metrics = evaluate_head(head, tiny_dataset.test, None)
        assert metrics.robust_acc is None

    def test_evaluate_run_uses_configured_attack(self, positive_pair_net, tiny_dataset, tiny_run_config):
        metrics = evaluate_run(positive_pair_net, tiny_dataset, tiny_run_config)
        assert metrics.robust_acc is not None
        assert metrics.robust_acc <= metrics.clean_acc


@pytest.mark.integration
class TestTransferEvaluation:
    """Pretrained encoder on another dataset"""

    def test_same_dataset_matches_direct_protocols(self, positive_pair_net, tiny_dataset):
        train_attack = AttackConfig(epsilon=0.1, alpha=0.05, steps=2)
        eval_attack = AttackConfig(epsilon=0.1, alpha=0.02, steps=2)
        report = transfer_evaluation(positive_pair_net, tiny_dataset, train_attack, eval_attack, PROBE, seed=2)
        direct = linear_evaluation(
            positive_pair_net, tiny_dataset.train, tiny_dataset.test, eval_attack, PROBE, 2, tiny_dataset.n_classes
        )
        assert report.linear == direct
        assert report.robust_linear.robust_acc <= report.robust_linear.clean_acc

    def test_dimension_mismatch(self, positive_pair_net):
        split = LabeledSplit(features=np.zeros((4, 5)), labels=np.array([0, 1, 0, 1]))
        attack = AttackConfig(epsilon=0.1, alpha=0.02, steps=1)
        with pytest.raises(DimensionError):
            transfer_evaluation(positive_pair_net, Dataset(train=split, test=split), attack, attack, PROBE)


@pytest.mark.integration
class TestAnalyzeTargets:
    """Target-class histogram of a trained net"""

    def test_counts_cover_full_batches(self, positive_pair_net, tiny_dataset, tiny_run_config):
        report = analyze_targets(positive_pair_net, tiny_dataset.test, tiny_run_config)
        assert report.n_classes == 4
        # 16 test rows in batches of 8
        assert sum(sum(row) for row in report.counts) == 16
        assert all(len(pair) == 2 for pair in report.top_confused)
        assert all(0.0 <= f <= 1.0 for f in report.confused_fraction)

    def test_deterministic(self, positive_pair_net, tiny_dataset, tiny_run_config):
        first = analyze_targets(positive_pair_net, tiny_dataset.test, tiny_run_config)
        second = analyze_targets(positive_pair_net, tiny_dataset.test, tiny_run_config)
        assert first == second
