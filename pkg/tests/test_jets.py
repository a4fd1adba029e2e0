import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liprpinn.errors import DimensionError
from liprpinn.gradcheck import jet_channel_errors, random_network, rel_error
from liprpinn.jets import (Jet3, forward_jet, forward_jet_taped, forward_jets,
                           forward_jets_taped, param_gradient, replay)
from liprpinn.network import Architecture, Network, layer_slices, param_count, zero_network

NEURON = Architecture((1, 1, 1))
RES50 = Architecture((1, 50, 50, 1), residual=True)


def neuron(w=1.0, b=0.0, v=1.0, c=0.0):
    """h(x) = v * tanh(w x + b) + c"""
    return Network(NEURON, np.array([w, b, v, c]))


def test_zero_network_has_zero_jet():
    for x in (-0.7, 0.0, 0.4):
        jet = forward_jet(zero_network(RES50), [x])
        for ch in jet.channels():
            assert np.all(ch == 0)


def test_single_neuron_at_origin():
    jet = forward_jet(neuron(), [0.0])
    assert jet.value == 0.0
    assert jet.d1[0] == 1.0
    assert jet.d2[0, 0] == 0.0
    assert jet.d3[0, 0, 0] == pytest.approx(-2.0, abs=1e-15)


def test_single_neuron_matches_closed_form():
    x = np.linspace(-0.9, 0.9, 7)
    w, b = 1.3, -0.2
    jet = forward_jets(neuron(w, b), x[:, None])
    t = np.tanh(w * x + b)
    s = 1 - t**2
    np.testing.assert_allclose(jet.value, t, atol=1e-15)
    np.testing.assert_allclose(jet.d1[:, 0], w * s, rtol=1e-14)
    np.testing.assert_allclose(jet.d2[:, 0, 0], -2 * w**2 * t * s, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(jet.d3[:, 0, 0, 0], w**3 * s * (6 * t**2 - 2), rtol=1e-13)


def test_residual_net_matches_finite_differences_at_03():
    net = random_network(RES50, 7)
    errs = jet_channel_errors(net, [0.3])
    assert max(errs.values()) < 1e-4


@pytest.mark.parametrize("k", range(20))
def test_fd_agreement_seeded(k):
    archs = [RES50, Architecture((2, 16, 16, 1)), Architecture((3, 8, 8, 8, 1)),
             Architecture((1, 30, 30, 1), residual=True, wrapper="poisson1d_dirichlet_zero")]
    arch = archs[k % len(archs)]
    net = random_network(arch, 100 + k)
    x = np.random.default_rng(k).uniform(-0.9, 0.9, arch.input_dim)
    for name, err in jet_channel_errors(net, x).items():
        assert err < 1e-4, name


def test_mixed_partials_are_symmetric():
    net = random_network(Architecture((3, 12, 12, 1)), 3)
    jet = forward_jets(net, np.random.default_rng(0).uniform(-1, 1, (5, 3)))
    for p in itertools.permutations(range(2)):
        assert np.array_equal(jet.d2, jet.d2.transpose(0, *(1 + np.array(p))))
    for p in itertools.permutations(range(3)):
        assert np.array_equal(jet.d3, jet.d3.transpose(0, *(1 + np.array(p))))


def test_scaling_last_layer_scales_all_channels():
    arch = Architecture((2, 10, 10, 1))
    net = random_network(arch, 5)
    W, b, _ = layer_slices(arch)[-1]
    p2 = net.params.copy()
    p2[W] *= 2
    p2[b] *= 2
    X = np.random.default_rng(1).uniform(-1, 1, (6, 2))
    j1 = forward_jets(net, X)
    j2 = forward_jets(net.with_params(p2), X)
    for a, b_ in zip(j1.channels(), j2.channels()):
        np.testing.assert_allclose(b_, 2 * a, rtol=1e-14, atol=1e-15)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        forward_jet(random_network(RES50, 0), [0.1, 0.2])


def test_replay_is_bit_identical():
    net = random_network(Architecture((2, 20, 20, 1)), 2)
    x = [0.25, -0.5]
    jet, tape = forward_jet_taped(net, x)
    again = replay(tape)
    for a, b in zip(forward_jet(net, x).channels(), jet.channels()):
        assert np.array_equal(a, b)
    for a, b in zip(tape.jet.channels(), again.channels()):
        assert np.array_equal(a, b)


def test_output_bias_gradient_is_one():
    for net in (zero_network(RES50), random_network(RES50, 1)):
        _, tape = forward_jet_taped(net, [0.2])
        g = param_gradient(tape, (np.ones(1), None, None, None))
        assert g[-1] == 1.0


def test_zero_cotangents_give_zero_gradient():
    _, tape = forward_jet_taped(random_network(RES50, 1), [0.2])
    g = param_gradient(tape, Jet3.zeros(1, (1,)))
    assert g.shape == (param_count(RES50),)
    assert np.all(g == 0)


def test_linear_network_value_gradient_is_input():
    # h(x) = W2 (W1 x + b1) + b2 would need an identity activation; with one
    # tanh layer the output layer is linear, so dh/dW_out = hidden activations
    net = random_network(Architecture((2, 3, 1)), 4)
    x = np.array([0.3, -0.6])
    _, tape = forward_jet_taped(net, x)
    g = param_gradient(tape, (np.ones(1), None, None, None))
    W1 = net.layers()[0][0]
    b1 = net.layers()[0][1]
    W_out, _, _ = layer_slices(net.arch)[-1]
    np.testing.assert_allclose(g[W_out], np.tanh(W1 @ x + b1), rtol=1e-14)


def test_value_squared_gradient_single_neuron():
    """S = h(0.5)^2; dS/dw against central differences."""
    x = 0.5

    def S(w):
        return forward_jet(neuron(w=w, b=0.1), [x]).value ** 2

    net = neuron(w=0.8, b=0.1)
    jet, tape = forward_jet_taped(net, [x])
    g = param_gradient(tape, (2 * np.atleast_1d(jet.value), None, None, None))
    h = 1e-6
    fd = (S(0.8 + h) - S(0.8 - h)) / (2 * h)
    assert abs(g[0] - fd) <= 1e-6 * abs(fd)


def _fd_param(net, fn, h=1e-6):
    out = np.empty(net.params.size)
    for i in range(net.params.size):
        e = np.zeros(net.params.size)
        e[i] = h
        out[i] = (fn(net.with_params(net.params + e)) - fn(net.with_params(net.params - e))) / (2 * h)
    return out


def test_second_derivative_channel_gradient():
    net = random_network(Architecture((1, 8, 8, 1), residual=True), 11)
    x = [0.35]
    _, tape = forward_jet_taped(net, x)
    g = param_gradient(tape, (None, None, np.ones((1, 1, 1)), None))
    fd = _fd_param(net, lambda n: forward_jet(n, x).d2[0, 0])
    assert rel_error(g, fd) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_param_gradient_of_mixed_scalar(seed):
    arch = Architecture((2, 6, 6, 1))
    net = random_network(arch, seed)
    X = np.random.default_rng(seed).uniform(-0.9, 0.9, (3, 2))
    rng = np.random.default_rng(seed + 50)
    seeds = [rng.standard_normal((3,) + (2,) * k) for k in range(4)]
    seeds[2] = seeds[2] + seeds[2].transpose(0, 2, 1)

    def S(n):
        jet = forward_jets(n, X)
        return sum(float(np.sum(c * s)) for c, s in zip(jet.channels(), seeds))

    _, tape = forward_jets_taped(net, X)
    g = param_gradient(tape, tuple(seeds))
    assert rel_error(g, _fd_param(net, S)) < 1e-5


def test_cotangent_shape_mismatch_raises():
    _, tape = forward_jets_taped(random_network(RES50, 1), np.zeros((4, 1)))
    with pytest.raises(DimensionError):
        param_gradient(tape, (np.ones(3), None, None, None))


def test_cotangent_above_tape_order_raises():
    _, tape = forward_jets_taped(random_network(RES50, 1), np.zeros((2, 1)), order=1)
    with pytest.raises(DimensionError):
        param_gradient(tape, (None, None, np.ones((2, 1, 1)), None))


def test_lower_order_jets_agree_with_full_order():
    net = random_network(Architecture((2, 10, 10, 1)), 9)
    X = np.random.default_rng(2).uniform(-1, 1, (4, 2))
    full = forward_jets(net, X, 3)
    for order in range(3):
        part = forward_jets(net, X, order)
        for k, (a, b) in enumerate(zip(part.channels(), full.channels())):
            if k <= order:
                np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
            else:
                assert np.all(a == 0)


# -- jet arithmetic ----------------------------------------------------------

def _expr_jet(x):
    v = Jet3.variable(np.array([[x]]), 0, 1)
    return v


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_product_rule_matches_closed_form(a, b):
    # (a + x)(b + x) = ab + (a+b)x + x^2
    x = 0.3
    v = _expr_jet(x)
    j = (v + a) * (v + b)
    assert j.value[0] == pytest.approx((a + x) * (b + x), abs=1e-12)
    assert j.d1[0, 0] == pytest.approx(a + b + 2 * x, abs=1e-12)
    assert j.d2[0, 0, 0] == pytest.approx(2.0)
    assert j.d3[0, 0, 0, 0] == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.5, 1.5))
def test_elementary_functions_third_derivatives(x):
    from liprpinn import jets

    v = _expr_jet(x)
    assert jets.sin(v).d3[0, 0, 0, 0] == pytest.approx(-np.cos(x), abs=1e-12)
    assert jets.cos(v).d3[0, 0, 0, 0] == pytest.approx(np.sin(x), abs=1e-12)
    assert jets.exp(v).d3[0, 0, 0, 0] == pytest.approx(np.exp(x), rel=1e-12)
    t = np.tanh(x)
    assert jets.tanh(v).d3[0, 0, 0, 0] == pytest.approx((1 - t**2) * (6 * t**2 - 2), abs=1e-12)
    p = v**3
    assert p.d3[0, 0, 0, 0] == pytest.approx(6.0)
    assert p.d2[0, 0, 0] == pytest.approx(6 * x, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_network_jets_finite(seed, x, t):
    net = random_network(Architecture((2, 8, 8, 1)), seed)
    jet = forward_jet(net, [x, t])
    assert all(np.all(np.isfinite(c)) for c in jet.channels())
