"""
Unit tests for the siamese net and the SGD optimizer
"""
import numpy as np
import pytest

from taro_lab.autodiff import Tape, Tensor, backward, reduce_sum
from taro_lab.models.optimizer import SGD
from taro_lab.models.siamnet import (
    SiamNet,
    classify_logits,
    encode,
    forward_embed,
    head_logits,
    parameter_shapes,
)
from taro_lab.schemas.configs import OptimizerConfig
from taro_lab.utils.error_handler import ContractError, DivergenceError, ShapeMismatchError


@pytest.mark.unit
class TestSiamNet:
    """Construction, shapes and forward pass"""

    def test_parameter_shapes_positive_pair(self, small_model_config):
        shapes = parameter_shapes(small_model_config, "positive_pair")
        assert shapes["encoder.0.W"] == (8, 4)
        assert shapes["encoder.1.W"] == (6, 8)
        assert shapes["projector.1.b"] == (5,)
        assert shapes["predictor.0.W"] == (3, 5)
        assert shapes["predictor.1.W"] == (5, 3)

    def test_contrastive_has_no_predictor(self, small_model_config, contrastive_net):
        shapes = parameter_shapes(small_model_config, "contrastive")
        assert not any(name.startswith("predictor.") for name in shapes)
        assert not contrastive_net.has_predictor
        assert contrastive_net.names() == list(shapes)

    def test_initialization_bounds(self, positive_pair_net):
        for name, tensor in positive_pair_net.items():
            fan_in = positive_pair_net.params[name[:-2] + ".W"].shape[1]
            assert np.all(np.abs(tensor.data) <= 1.0 / np.sqrt(fan_in))

    def test_initialization_is_seeded(self, small_model_config):
        first = SiamNet.initialize(small_model_config, "positive_pair", np.random.default_rng(5))
        second = SiamNet.initialize(small_model_config, "positive_pair", np.random.default_rng(5))
        assert all(np.array_equal(first.params[n].data, second.params[n].data) for n in first.names())

    def test_embedding_widths(self, positive_pair_net, rng):
        out = forward_embed(positive_pair_net, rng.normal(size=(3, 4)))
        assert out.e.shape == (3, 6)
        assert out.z.shape == (3, 5)
        assert out.p.shape == out.z.shape
        assert len(out) == 3

    def test_single_vector(self, positive_pair_net, rng):
        out = forward_embed(positive_pair_net, rng.normal(size=4))
        assert out.e.shape == (6,)
        assert len(out) == 1

    def test_contrastive_p_is_z(self, contrastive_net, rng):
        out = forward_embed(contrastive_net, rng.normal(size=(2, 4)))
        assert out.p is out.z

    def test_identity_net(self, identity_net):
        x = np.array([[1.0, -2.0], [0.5, 3.0]])
        out = forward_embed(identity_net(2), x)
        for tensor in (out.e, out.z, out.p):
            np.testing.assert_array_equal(tensor.data, x)

    def test_broken_chain(self):
        with pytest.raises(ShapeMismatchError):
            SiamNet({
                "encoder.0.W": Tensor(np.ones((3, 2))),
                "encoder.0.b": Tensor(np.zeros(3)),
                "projector.0.W": Tensor(np.ones((2, 4))),
                "projector.0.b": Tensor(np.zeros(2)),
            })

    def test_predictor_must_close_on_projector_space(self, identity_net):
        params = dict(identity_net(2).params)
        params["predictor.0.W"] = Tensor(np.ones((3, 2)))
        params["predictor.0.b"] = Tensor(np.zeros(3))
        with pytest.raises(ShapeMismatchError):
            SiamNet(params)

    def test_missing_projector(self):
        with pytest.raises(ShapeMismatchError):
            SiamNet({"encoder.0.W": Tensor(np.eye(2)), "encoder.0.b": Tensor(np.zeros(2))})

    def test_with_params_unknown_name(self, positive_pair_net):
        with pytest.raises(ContractError):
            positive_pair_net.with_params({"decoder.0.W": Tensor(np.zeros(2))})

    def test_with_params_leaves_original(self, positive_pair_net):
        original = positive_pair_net.params["encoder.0.b"].data.copy()
        updated = positive_pair_net.with_params({"encoder.0.b": Tensor(np.zeros(8))})
        np.testing.assert_array_equal(positive_pair_net.params["encoder.0.b"].data, original)
        np.testing.assert_array_equal(updated.params["encoder.0.b"].data, np.zeros(8))


@pytest.mark.unit
class TestHead:
    """Linear probe head"""

    def test_head_logits(self, identity_net):
        net = identity_net(2).with_head(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0.5, 0.0]))
        logits = head_logits(net, np.array([[1.0, 1.0]]))
        np.testing.assert_array_equal(logits.data, [[1.5, 2.0]])

    def test_classify_logits_goes_through_encoder(self, identity_net):
        net = identity_net(2).with_head(np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(classify_logits(net, np.array([3.0, -1.0])).data, [3.0, -1.0])

    def test_missing_head(self, positive_pair_net, rng):
        with pytest.raises(ContractError):
            head_logits(positive_pair_net, rng.normal(size=6))
        with pytest.raises(ContractError):
            classify_logits(positive_pair_net, rng.normal(size=4))

    def test_head_width_must_match_encoder(self, positive_pair_net):
        with pytest.raises(ShapeMismatchError):
            positive_pair_net.with_head(np.ones((3, 5)), np.zeros(3))

    def test_without_head(self, positive_pair_net):
        net = positive_pair_net.with_head(np.ones((3, 6)), np.zeros(3))
        assert net.has_head
        assert not net.without_head().has_head

    def test_probe_gradient_does_not_reach_encoder(self, positive_pair_net, rng):
        tape = Tape()
        net = positive_pair_net.with_head(np.ones((3, 6)), np.zeros(3)).track(tape)
        logits = head_logits(net, encode(net, rng.normal(size=(2, 4))))
        grads = backward(reduce_sum(logits), [net.params["encoder.0.W"], net.params["head.W"]])
        np.testing.assert_array_equal(grads[0].data, np.zeros((8, 4)))
        assert np.any(grads[1].data != 0.0)


@pytest.mark.unit
class TestSGD:
    """Momentum SGD with weight decay"""

    def test_plain_step(self, identity_net):
        net = identity_net(2)
        optimizer = SGD(OptimizerConfig(lr=0.1, momentum=0.0, weight_decay=0.0), ["encoder.0.b"])
        updated = optimizer.step(net, {"encoder.0.b": Tensor(np.array([1.0, -2.0]))})
        np.testing.assert_allclose(updated.params["encoder.0.b"].data, [-0.1, 0.2])
        np.testing.assert_array_equal(updated.params["encoder.0.W"].data, np.eye(2))

    def test_momentum_accumulates(self, identity_net):
        net = identity_net(2)
        optimizer = SGD(OptimizerConfig(lr=1.0, momentum=0.5, weight_decay=0.0), ["encoder.0.b"])
        grad = {"encoder.0.b": Tensor(np.array([1.0, 0.0]))}
        net = optimizer.step(net, grad)
        net = optimizer.step(net, grad)
        # velocities 1.0 then 1.5
        np.testing.assert_allclose(net.params["encoder.0.b"].data, [-2.5, 0.0])

    def test_weight_decay(self, identity_net):
        net = identity_net(2)
        optimizer = SGD(OptimizerConfig(lr=0.5, momentum=0.0, weight_decay=0.1), ["encoder.0.W"])
        updated = optimizer.step(net, {"encoder.0.W": Tensor(np.zeros((2, 2)))})
        np.testing.assert_allclose(updated.params["encoder.0.W"].data, 0.95 * np.eye(2))

    def test_state_dict_round_trip(self, identity_net):
        net = identity_net(2)
        config = OptimizerConfig(lr=0.1, momentum=0.9, weight_decay=0.0)
        grad = {"encoder.0.b": Tensor(np.array([1.0, 1.0]))}
        first = SGD(config, ["encoder.0.b"])
        net = first.step(net, grad)

        second = SGD(config, ["encoder.0.b"])
        second.load_state_dict(first.state_dict())
        a, b = first.step(net, grad), second.step(net, grad)
        np.testing.assert_array_equal(a.params["encoder.0.b"].data, b.params["encoder.0.b"].data)

    def test_divergence(self, identity_net):
        optimizer = SGD(OptimizerConfig(lr=1e300, momentum=0.0, weight_decay=0.0), ["encoder.0.b"])
        with pytest.raises(DivergenceError):
            optimizer.step(identity_net(2), {"encoder.0.b": Tensor(np.array([1e10, 0.0]))})
