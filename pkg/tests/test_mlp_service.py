"""Unit tests for the real-valued MLP: activations, forward, training and gradients."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from common.enums import ActivationKind
from common.exceptions import ConfigurationError, InputError, TrainingError
from common.models import Dataset, TrainedModel, WeightMatrix
from common.schemas import NetworkConfig
from services.mlp.mlp_service import (
    accuracy,
    activation,
    backprop,
    forward,
    gradient_check,
    initialize_model,
    load_model,
    model_from_document,
    model_to_document,
    save_model,
    train,
)

ALL_KINDS = list(ActivationKind)

# ============================================================================
# TEST FIXTURES AND UTILITIES
# ============================================================================


def random_model(sizes: list[int], kinds: list[ActivationKind], seed: int, scale: float = 0.8) -> TrainedModel:
    rng = np.random.default_rng(seed)
    config = NetworkConfig(layer_sizes=sizes, activation_per_layer=kinds, seed=seed)
    weights = [
        WeightMatrix(
            values=rng.uniform(-scale, scale, size=(sizes[i], sizes[i + 1])),
            bias=rng.uniform(-scale, scale, size=sizes[i + 1]),
        )
        for i in range(len(sizes) - 1)
    ]
    return TrainedModel(config=config, weights=weights)


# ============================================================================
# ACTIVATION TESTS
# ============================================================================


class TestActivation:
    """Closed-form values and shape of the four activations."""

    def test_sigmoid_symmetry_point(self):
        """sigmoid(0) is exactly one half."""
        assert activation("sigmoid", 0.0) == 0.5

    def test_sigmoid_of_two(self):
        assert activation("sigmoid", 2.0) == pytest.approx(0.880797, abs=1e-6)

    def test_approx_tanh_saturates(self):
        assert activation("approx_tanh", 3.7) == 1.0

    def test_approx_sigmoid_clamp(self):
        assert activation(ActivationKind.APPROX_SIGMOID, 0.0) == 0.5
        assert activation(ActivationKind.APPROX_SIGMOID, 2.0) == 1.0
        assert activation(ActivationKind.APPROX_SIGMOID, -2.0) == 0.0
        assert activation(ActivationKind.APPROX_SIGMOID, 1.0) == 0.75

    def test_configurable_slopes(self):
        assert activation("approx_tanh", 0.25, tanh_slope=2.0) == 0.5
        assert activation("approx_sigmoid", 1.0, sigmoid_slope=0.5) == 1.0

    def test_unknown_kind_is_configuration_error(self):
        with pytest.raises(ConfigurationError, match="relu"):
            activation("relu", 1.0)

    def test_scalar_in_scalar_out(self):
        assert isinstance(activation("tanh", 0.3), float)
        assert activation("tanh", np.array([0.3, 0.4])).shape == (2,)

    def test_sigmoid_is_stable_for_large_inputs(self):
        """No overflow warnings or NaN at extreme pre-activations."""
        out = activation("sigmoid", np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(0.0)
        assert out[1] == pytest.approx(1.0)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_ranges_and_monotonicity(self, kind):
        """Outputs are monotone non-decreasing and inside the mathematical range."""
        xs = np.linspace(-20.0, 20.0, 4001)
        out = activation(kind, xs)
        lo, hi = kind.output_range
        assert np.all(out >= lo)
        assert np.all(out <= hi)
        assert np.all(np.diff(out) >= 0.0)

    def test_sigmoid_and_tanh_open_interval(self):
        xs = np.linspace(-10.0, 10.0, 101)
        assert np.all((activation("sigmoid", xs) > 0) & (activation("sigmoid", xs) < 1))
        assert np.all(np.abs(activation("tanh", xs)) < 1)


# ============================================================================
# FORWARD TESTS
# ============================================================================


class TestForward:
    """Layer-by-layer inference."""

    def test_zero_network_outputs_half(self):
        config = NetworkConfig(layer_sizes=[3, 4, 2])
        model = TrainedModel(
            config=config,
            weights=[WeightMatrix(np.zeros((3, 4)), np.zeros(4)), WeightMatrix(np.zeros((4, 2)), np.zeros(2))],
        )
        acts = forward(model, np.array([5.0, -2.0, 0.1]))
        assert np.all(acts[-1] == 0.5)
        assert np.all(acts[1] == 0.5)

    def test_identity_like_pass_through(self):
        config = NetworkConfig(layer_sizes=[1, 1], activation_per_layer=["approx_tanh"])
        model = TrainedModel(config=config, weights=[WeightMatrix(values=[[1.0]], bias=[0.0])])
        assert forward(model, np.array([0.3]))[-1][0] == pytest.approx(0.3)

    def test_matches_independent_dot_product(self):
        """A 3-4-2 network agrees with a hand-rolled summation."""
        model = random_model([3, 4, 2], [ActivationKind.SIGMOID, ActivationKind.TANH], seed=4)
        x = np.array([0.2, -0.7, 1.3])
        hidden = []
        for j in range(4):
            z = sum(x[i] * model.weights[0].values[i, j] for i in range(3)) + model.weights[0].bias[j]
            hidden.append(1.0 / (1.0 + math.exp(-z)))
        expected = []
        for k in range(2):
            z = sum(hidden[j] * model.weights[1].values[j, k] for j in range(4)) + model.weights[1].bias[k]
            expected.append(math.tanh(z))
        np.testing.assert_allclose(forward(model, x)[-1], expected, rtol=1e-12)

    def test_returns_every_layer(self):
        model = random_model([3, 5, 4, 2], [ActivationKind.SIGMOID] * 3, seed=1)
        acts = forward(model, np.ones(3))
        assert [a.shape for a in acts] == [(3,), (5,), (4,), (2,)]

    def test_batch_matches_single(self):
        model = random_model([3, 4, 2], [ActivationKind.TANH, ActivationKind.SIGMOID], seed=9)
        batch = np.random.default_rng(0).normal(size=(5, 3))
        stacked = forward(model, batch)[-1]
        for row, x in enumerate(batch):
            np.testing.assert_allclose(forward(model, x)[-1], stacked[row], rtol=1e-12)

    def test_deterministic(self):
        model = random_model([3, 4, 2], [ActivationKind.SIGMOID] * 2, seed=2)
        x = np.array([0.1, 0.2, 0.3])
        np.testing.assert_array_equal(forward(model, x)[-1], forward(model, x)[-1])

    def test_dimension_mismatch_is_input_error(self):
        model = random_model([3, 4, 2], [ActivationKind.SIGMOID] * 2, seed=2)
        with pytest.raises(InputError, match="trailing dimension 3"):
            forward(model, np.ones(4))

    def test_non_finite_input_rejected(self):
        model = random_model([3, 4, 2], [ActivationKind.SIGMOID] * 2, seed=2)
        with pytest.raises(InputError):
            forward(model, np.array([0.0, np.nan, 1.0]))


# ============================================================================
# TRAINING TESTS
# ============================================================================


class TestTrain:
    """Gradient-descent training."""

    def test_separable_blobs(self, blobs):
        config = NetworkConfig(layer_sizes=[2, 4, 2], epochs=200, seed=1, learning_rate=0.5)
        model = train(config, blobs)
        assert accuracy(model, blobs) >= 0.95

    def test_final_loss_not_above_initial(self, trained_model):
        history = trained_model.training_loss_history
        assert len(history) == trained_model.config.epochs + 1
        assert history[-1] <= history[0]

    def test_zero_epochs_returns_initialization(self, iris_like):
        config = NetworkConfig(layer_sizes=[4, 5, 3], epochs=0, seed=12)
        model = train(config, iris_like)
        initial = initialize_model(config)
        assert all(a.allclose(b) for a, b in zip(model.weights, initial.weights, strict=True))
        assert len(model.training_loss_history) == 1

    def test_bit_reproducible(self, small_config, iris_like):
        first = train(small_config, iris_like)
        second = train(small_config, iris_like)
        assert all(a.allclose(b) for a, b in zip(first.weights, second.weights, strict=True))
        assert first.training_loss_history == second.training_loss_history

    def test_different_seeds_differ(self, small_config, iris_like):
        first = train(small_config, iris_like)
        second = train(small_config.model_copy(update={"seed": 4}), iris_like)
        assert not first.weights[0].allclose(second.weights[0])

    def test_mini_batches(self, iris_like):
        config = NetworkConfig(layer_sizes=[4, 6, 3], epochs=40, seed=3, batch_size=8, learning_rate=1.0)
        model = train(config, iris_like)
        assert model.training_loss_history[-1] < model.training_loss_history[0]

    def test_divergence_names_epoch(self):
        mixed = Dataset(
            features=[[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0]],
            labels=[0, 1, 0, 1],
            n_classes=2,
            name="mixed",
        )
        config = NetworkConfig(layer_sizes=[2, 2], epochs=5, seed=0, learning_rate=math.inf)
        with pytest.raises(TrainingError, match="epoch 1"):
            train(config, mixed)

    def test_empty_dataset_rejected(self, small_config):
        empty = Dataset(features=np.zeros((0, 4)), labels=np.zeros(0), n_classes=3, name="empty")
        with pytest.raises(InputError, match="empty"):
            train(small_config, empty)

    def test_label_beyond_output_layer(self, iris_like):
        config = NetworkConfig(layer_sizes=[4, 5, 2], epochs=1)
        with pytest.raises(InputError, match="exceeds output layer size"):
            train(config, iris_like)

    def test_initial_weights_in_range(self):
        config = NetworkConfig(layer_sizes=[10, 20, 5], init_scale=0.5, seed=8)
        model = initialize_model(config)
        for layer in model.weights:
            assert np.all(np.abs(layer.values) <= 0.5)
            assert np.all(layer.bias == 0.0)


# ============================================================================
# GRADIENT CHECK TESTS
# ============================================================================


class TestGradientCheck:
    """Analytic backprop against central finite differences."""

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_small_network_every_kind(self, kind):
        model = random_model([3, 4, 2], [kind, kind], seed=6)
        assert gradient_check(model, (np.array([0.3, -0.2, 0.8]), 1), epsilon=1e-5) < 1e-4

    def test_zero_weights(self):
        config = NetworkConfig(layer_sizes=[3, 4, 2])
        model = TrainedModel(
            config=config,
            weights=[WeightMatrix(np.zeros((3, 4)), np.zeros(4)), WeightMatrix(np.zeros((4, 2)), np.zeros(2))],
        )
        assert gradient_check(model, (np.array([1.0, 0.5, -0.5]), 0)) < 1e-4

    def test_six_layer_network(self):
        kinds = [ActivationKind.TANH, ActivationKind.SIGMOID, ActivationKind.TANH, ActivationKind.SIGMOID, "sigmoid"]
        model = random_model([3, 4, 4, 3, 3, 2], kinds, seed=21)
        assert gradient_check(model, (np.array([0.5, 0.1, -0.4]), 1)) < 1e-4

    def test_corrupted_gradient_detected(self):
        model = random_model([3, 4, 2], [ActivationKind.SIGMOID] * 2, seed=6)

        def corrupted(weights, biases, config, x, y):
            return [(2.0 * dw + 0.1, db) for dw, db in backprop(weights, biases, config, x, y)]

        assert gradient_check(model, (np.array([0.3, -0.2, 0.8]), 1), gradient_fn=corrupted) > 1e-2

    @pytest.mark.parametrize("epsilon", [0.0, -1e-5, 0.1])
    def test_epsilon_out_of_range(self, epsilon):
        model = random_model([2, 2], [ActivationKind.SIGMOID], seed=0)
        with pytest.raises(InputError, match="epsilon"):
            gradient_check(model, (np.zeros(2), 0), epsilon=epsilon)

    @pytest.mark.property
    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        depth=st.integers(min_value=1, max_value=5),
        kind=st.sampled_from(ALL_KINDS),
    )
    def test_random_networks(self, seed, depth, kind):
        """Random nets up to six layers stay within tolerance away from kinks."""
        rng = np.random.default_rng(seed)
        sizes = [int(n) for n in rng.integers(2, 5, size=depth + 1)]
        model = random_model(sizes, [kind] * depth, seed=seed)
        x = rng.uniform(-1.0, 1.0, size=sizes[0])
        label = int(rng.integers(0, sizes[-1]))
        assert gradient_check(model, (x, label), epsilon=1e-5) < 1e-4


# ============================================================================
# SERIALIZATION TESTS
# ============================================================================


class TestSerialization:
    """Trained model JSON documents."""

    def test_document_layout(self, trained_model):
        document = model_to_document(trained_model)
        assert document.layer_sizes == [4, 6, 3]
        assert document.activations == ["sigmoid", "sigmoid"]
        assert len(document.weights[0]) == 24
        assert document.weights[0][1] == trained_model.weights[0].values[0, 1]
        assert document.seed == 3

    def test_file_round_trip_is_exact(self, trained_model, tmp_path):
        path = save_model(tmp_path / "nested" / "model.json", trained_model)
        loaded, document = load_model(path)
        assert all(a.allclose(b) for a, b in zip(trained_model.weights, loaded.weights, strict=True))
        assert loaded.training_loss_history == trained_model.training_loss_history
        assert document.network == trained_model.config

    def test_wrong_weight_count(self, trained_model):
        document = model_to_document(trained_model)
        broken = document.model_copy(update={"weights": [document.weights[0][:-1], document.weights[1]]})
        with pytest.raises(ValueError, match="Layer 0"):
            model_from_document(broken)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValueError, match="not found"):
            load_model(tmp_path / "absent.json")
