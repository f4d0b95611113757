import numpy as np
import pytest
from numpy.testing import assert_array_equal

from mtimpute.dae import DaeNetwork, build_dae, dae_widths
from mtimpute.errors import StructuralError
from mtimpute.nn_core import DenseLayer, forward


def test_boston_width_ramp():
    net = build_dae(14, theta=7, rng=np.random.default_rng(0))
    assert net.widths == [14, 21, 28, 35, 28, 21, 14]
    assert [layer.activation for layer in net.layers] == ["tanh"] * 5 + ["identity"]
    assert net.dropout.rate == 0.5


def test_sonar_width_ramp():
    assert dae_widths(61, 7) == [61, 68, 75, 82, 75, 68, 61]


def test_theta_zero_keeps_width_constant():
    assert dae_widths(4, 0) == [4] * 7


def test_xavier_bounds_and_zero_biases():
    net = build_dae(6, theta=3, rng=np.random.default_rng(1))
    for layer in net.layers:
        limit = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        assert np.all(np.abs(layer.weights) <= limit)
        assert_array_equal(layer.biases, np.zeros(layer.out_dim))


def test_same_seed_same_weights():
    a = build_dae(5, rng=np.random.default_rng(42))
    b = build_dae(5, rng=np.random.default_rng(42))
    for p, q in zip(a.parameters(), b.parameters()):
        assert_array_equal(p, q)


def test_output_width_matches_input(rng):
    net = build_dae(9, rng=rng)
    assert forward(net, rng.normal(size=(4, 9))).shape == (4, 9)


@pytest.mark.parametrize("width, theta", [(0, 7), (3, -1)])
def test_invalid_topology(width, theta):
    with pytest.raises(StructuralError):
        build_dae(width, theta=theta)


def test_network_must_follow_ramp(rng):
    layers = [DenseLayer.initialized(3, 3, "tanh", rng), DenseLayer.initialized(3, 3, "identity", rng)]
    with pytest.raises(StructuralError):
        DaeNetwork(layers=layers, input_width=3, theta=0)


def test_hidden_layers_must_be_tanh(rng):
    widths = dae_widths(2, 1)
    layers = [DenseLayer.initialized(a, b, "identity", rng) for a, b in zip(widths, widths[1:])]
    with pytest.raises(StructuralError):
        DaeNetwork(layers=layers, input_width=2, theta=1)
