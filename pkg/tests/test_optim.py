import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liprpinn.errors import NonFiniteError, TrainingDiverged
from liprpinn.gradcheck import random_network
from liprpinn.loss import LossWeights, Objective
from liprpinn.network import Architecture
from liprpinn.optim import (AdamState, LbfgsConfig, TrainPlan, _batches, adam_step,
                            lbfgs_minimize, strong_wolfe, train)
from liprpinn.pde import poisson1d
from liprpinn.sampling import make_training_set


def quadratic(x):
    return 0.5 * float(x @ x), x.copy()


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def test_adam_single_step_by_hand():
    state, new = adam_step(AdamState.fresh(1), np.array([1.0]), np.array([2.0]))
    # m_hat = 2, v_hat = 4, step = 1e-3 * 2 / (2 + 1e-8)
    assert new[0] == pytest.approx(1 - 1e-3 * 2 / (2 + 1e-8), abs=1e-12)
    assert state.step == 1


def test_adam_rejects_nan_and_shape():
    with pytest.raises(NonFiniteError):
        adam_step(AdamState.fresh(2), np.zeros(2), np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        adam_step(AdamState.fresh(2), np.zeros(3), np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_adam_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    n = 12
    x, g = rng.standard_normal(n), rng.standard_normal(n)
    st0 = AdamState(3, rng.standard_normal(n), rng.random(n))
    p = rng.permutation(n)
    s1, x1 = adam_step(st0, x, g)
    s2, x2 = adam_step(AdamState(3, st0.m[p], st0.v[p]), x[p], g[p])
    assert np.array_equal(x1[p], x2)
    assert np.array_equal(s1.v[p], s2.v)


def test_lbfgs_quadratic():
    x, rep = lbfgs_minimize(quadratic, np.array([3.0, -4.0]))
    assert rep.iterations <= 2
    assert np.max(np.abs(x)) <= 1e-10
    assert rep.converged


def test_lbfgs_zero_gradient_takes_no_steps():
    x, rep = lbfgs_minimize(quadratic, np.zeros(3))
    assert rep.iterations == 0
    assert rep.converged


def test_lbfgs_rosenbrock():
    x, rep = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), LbfgsConfig(max_iter=100))
    assert rosenbrock(x)[0] < 1e-8
    assert rep.iterations <= 100
    assert all(b < a for a, b in zip(rep.losses, rep.losses[1:]))
    # stored pairs satisfy the curvature safeguard
    for s, y in rep.history:
        assert s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y)


def test_lbfgs_stops_on_non_finite_start():
    _, rep = lbfgs_minimize(lambda x: (np.nan, x), np.ones(2))
    assert rep.line_search_failed


def test_lbfgs_on_a_kink_terminates():
    # |x| has no Wolfe point around 0; the search must end without blowing up
    x, rep = lbfgs_minimize(lambda x: (float(np.abs(x).sum()), np.sign(x)), np.array([0.3, -0.7]),
                            LbfgsConfig(max_iter=200))
    assert np.abs(x).sum() <= 1.0
    assert all(b < a for a, b in zip(rep.losses, rep.losses[1:]))


def test_strong_wolfe_conditions_hold():
    x0 = np.array([-1.2, 1.0])
    f0, g0 = rosenbrock(x0)
    d = -g0
    a, f, g, _, ok = strong_wolfe(rosenbrock, x0, f0, g0, d, 1e-3)
    assert ok
    assert f <= f0 + 1e-4 * a * (g0 @ d)
    assert abs(g @ d) <= 0.9 * abs(g0 @ d)


def test_batches_cover_every_point_once():
    rng = np.random.default_rng(0)
    bs = list(_batches(250, [2, 7], 100, rng))
    assert [len(b[0]) for b in bs] == [100, 100, 50]
    assert sorted(np.concatenate([b[0] for b in bs])) == list(range(250))
    assert sorted(np.concatenate([b[2] for b in bs])) == list(range(7))


# -- pipeline ----------------------------------------------------------------

PROBLEM = poisson1d("tanh")
ARCH = Architecture((1, 8, 8, 1), residual=True)
OBJ = Objective(ARCH, PROBLEM, make_training_set(PROBLEM, 30), LossWeights(reg_r=1e-3))
START = random_network(ARCH, 0).params


def test_empty_plan_leaves_params_unchanged():
    x, hist, rep = train(OBJ, START, TrainPlan())
    assert np.array_equal(x, START)
    assert hist == [] and rep is None


def test_training_is_deterministic_and_descends():
    plan = TrainPlan(adam_epochs=20, batch_size=8, lbfgs_iters=20, seed=4)
    a = train(OBJ, START, plan)
    b = train(OBJ, START, plan)
    assert np.array_equal(a[0], b[0])
    assert a[1] == b[1]
    assert OBJ(a[0]) < OBJ(START)
    lb = [v for phase, _, v in a[1] if phase == "lbfgs"]
    assert all(q < p for p, q in zip(lb, lb[1:]))


def test_nan_loss_raises_training_diverged():
    class Bad:
        R = np.zeros((4, 1))
        Bpts = (np.zeros((2, 1)),)

        def value_and_grad(self, params, batch=None):
            return np.nan, np.full_like(params, np.nan)

    with pytest.raises(TrainingDiverged) as info:
        train(Bad(), np.zeros(3), TrainPlan(adam_epochs=2))
    assert info.value.history == []


def test_negative_plan_rejected():
    with pytest.raises(ValueError):
        TrainPlan(adam_epochs=-1)


def test_adam_step_cap_stops_inside_an_epoch():
    calls = []

    class Counting:
        R = np.zeros((30, 1))
        Bpts = (np.zeros((2, 1)),)

        def value_and_grad(self, params, batch=None):
            calls.append(batch)
            return float(params @ params), 2 * params

    plan = TrainPlan(adam_epochs=10, batch_size=8, max_adam_steps=6)
    _, hist, _ = train(Counting(), np.ones(3), plan)
    assert len(calls) == 6
    assert [h[1] for h in hist] == [1, 2]      # 4 steps per epoch, second epoch cut short
    uncapped = train(Counting(), np.ones(3), TrainPlan(adam_epochs=1, batch_size=8))
    assert len(uncapped[1]) == 1
