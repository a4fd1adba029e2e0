import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liprpinn.errors import DimensionError
from liprpinn.gradcheck import random_network
from liprpinn.network import (Architecture, Network, dumps_checkpoint, evaluate, evaluate_values,
                              flatten, load_checkpoint, loads_checkpoint, param_count,
                              save_checkpoint, unflatten, xavier_init, zero_network)

WRAPPED = Architecture((1, 50, 50, 1), residual=True, wrapper="poisson1d_dirichlet_zero")


@pytest.mark.parametrize("widths,count", [((1, 50, 50, 1), 2701), ((1, 1, 1), 4),
                                          ((2, 50, 50, 1), 2751)])
def test_param_count(widths, count):
    assert param_count(Architecture(widths)) == count
    assert xavier_init(Architecture(widths), 0).params.size == count


@pytest.mark.parametrize("kwargs", [
    dict(widths=(1, 1)),                       # L < 2
    dict(widths=(4, 5, 5, 1)),                 # n0 > 3
    dict(widths=(1, 5, 5, 2)),                 # n_L != 1
    dict(widths=(1, 0, 5, 1)),
    dict(widths=(2, 5, 5, 1), residual=True),  # skip needs n0 = 1
    dict(widths=(1, 5, 5, 1), wrapper="bogus"),
])
def test_invalid_architectures(kwargs):
    with pytest.raises(DimensionError):
        Architecture(**kwargs)


def test_param_vector_length_checked():
    with pytest.raises(DimensionError):
        Network(Architecture((1, 2, 1)), np.zeros(5))


def test_xavier_deterministic_and_zero_bias():
    arch = Architecture((2, 50, 50, 1))
    a, b = xavier_init(arch, 3), xavier_init(arch, 3)
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, xavier_init(arch, 4).params)
    for W, bias in a.layers():
        assert np.all(bias == 0)
        lim = np.sqrt(6 / (W.shape[0] + W.shape[1]))
        assert np.all(np.abs(W) <= lim)


def test_xavier_variance():
    arch = Architecture((1, 50, 50, 1))
    draws = np.concatenate([xavier_init(arch, s).layers()[1][0].ravel() for s in range(4)])
    assert draws.size >= 10_000
    assert abs(draws.var() / 0.02 - 1) < 0.15


def test_wrapped_network_vanishes_at_endpoints():
    for seed in range(100):
        net = xavier_init(WRAPPED, seed)
        jet = evaluate(net, np.array([[-1.0], [1.0]]))
        assert np.all(jet.value == 0.0)


def test_wrapped_heat_network_and_time_derivative_vanish():
    arch = Architecture((2, 10, 10, 1), wrapper="poisson1d_dirichlet_zero")
    t = np.linspace(0, 1, 5)
    X = np.concatenate([np.stack([np.full(5, s), t], 1) for s in (-1.0, 1.0)])
    for seed in range(100):
        jet = evaluate(random_network(arch, seed), X)
        assert np.all(jet.value == 0.0)
        assert np.all(jet.d1[:, 1] == 0.0)


def test_one_neuron_is_tanh():
    net = Network(Architecture((1, 1, 1)), np.array([1.0, 0.0, 1.0, 0.0]))
    jet = evaluate(net, [0.0])
    assert jet.value == 0.0
    assert jet.d1[0] == 1.0
    x = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(evaluate(net, x[:, None]).value, np.tanh(x), atol=1e-15)


def test_residual_zero_params_gives_zero():
    net = zero_network(Architecture((1, 5, 5, 1), residual=True))
    assert np.all(evaluate(net, np.linspace(-1, 1, 11)[:, None]).value == 0)


def test_residual_skip_placement():
    # W1 = 0, b1 = 0 leaves only the skip: h = W3 tanh(W2 (1 x) + b2) + b3
    arch = Architecture((1, 2, 2, 1), residual=True)
    W2 = np.array([[0.3, -0.2], [0.5, 0.1]])
    W3 = np.array([[1.5, -0.7]])
    params = np.concatenate([np.zeros(4), W2.ravel(), [0.05, -0.1], W3.ravel(), [0.2]])
    x = 0.4
    want = W3 @ np.tanh(W2 @ np.array([x, x]) + [0.05, -0.1]) + 0.2
    assert evaluate(Network(arch, params), [x]).value == pytest.approx(want[0], rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(1, 7, 7, 1), (2, 6, 6, 1), (3, 5, 5, 5, 1)]),
       st.booleans(), st.booleans())
def test_jet_value_matches_plain_forward_pass(seed, widths, residual, wrap):
    residual = residual and widths[0] == 1
    arch = Architecture(widths, residual, "poisson1d_dirichlet_zero" if wrap else None)
    net = random_network(arch, seed)
    X = np.random.default_rng(seed).uniform(-1, 1, (8, widths[0]))
    np.testing.assert_allclose(evaluate(net, X).value, evaluate_values(net, X), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_flatten_roundtrip(seed):
    net = xavier_init(Architecture((2, 4, 3, 1)), seed)
    assert np.array_equal(flatten(unflatten(net.arch, net.params)), net.params)


def test_params_are_read_only():
    net = xavier_init(Architecture((1, 3, 1)), 0)
    with pytest.raises(ValueError):
        net.params[0] = 1.0


def test_checkpoint_roundtrip_bit_identical(tmp_path):
    net = random_network(WRAPPED, 12)
    save_checkpoint(net, tmp_path / "c.json")
    back = load_checkpoint(tmp_path / "c.json")
    assert back.arch == net.arch
    assert np.array_equal(back.params, net.params)
    X = np.linspace(-1, 1, 100)[:, None]
    for a, b in zip(evaluate(net, X).channels(), evaluate(back, X).channels()):
        assert np.array_equal(a, b)


def test_checkpoint_document():
    net = xavier_init(Architecture((2, 3, 1)), 5)
    doc = json.loads(dumps_checkpoint(net))
    assert doc["format_version"] == 1
    assert doc["seed"] == 5
    assert doc["architecture"]["widths"] == [2, 3, 1]
    assert len(doc["params"]) == param_count(net.arch)
    assert np.array_equal(loads_checkpoint(dumps_checkpoint(net)).params, net.params)
