import numpy as np
import pytest
import torch

from conftest import PENDULUM_TRUTH
from simcal.core import Trajectory
from simcal.errors import EmptyInputError, NumericError, RangeError, ShapeError
from simcal.estimators.bayesopt import BayesOptState, bayesopt_calibrate, incumbent_trace
from simcal.estimators.costs import ReplayCost
from simcal.estimators.maml import (
    adapted_params,
    maml_adapt,
    maml_adapt_supervised,
    maml_metatrain,
    meta_gradient,
)
from simcal.estimators.regression import (
    RegressionModel,
    regress_closed_form,
    regress_fit,
    regress_predict,
    regress_predict_many,
    transitions,
)
from simcal.numkit.mlp import DTYPE


def constant_traj(s, a, horizon=4):
    states = np.repeat(np.asarray(s, dtype=float)[None], horizon + 1, axis=0)
    actions = np.repeat(np.asarray(a, dtype=float)[None], horizon, axis=0)
    return Trajectory("pendulum", states[0], states, actions)


def linear_dataset(n, seed):
    """Trajectories whose every (s, a, s') row maps to theta by one fixed affine map."""
    rng = np.random.default_rng(seed)
    A = np.array([[0.10, -0.05, 0.08, 0.0, 0.02], [0.03, 0.06, -0.04, 0.01, 0.05]])
    c = np.array([0.4, 0.5])
    data = []
    for _ in range(n):
        s, a = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1)
        row = np.concatenate([s, a, s])
        data.append((constant_traj(s, a), A @ row + c))
    return data


def test_regression_learns_linear_map():
    train, test = linear_dataset(200, 0), linear_dataset(50, 1)
    model = regress_fit(train, epochs=200, batch_size=320, lr=0.05, seed=0)
    assert model.losses[-1] < 1e-3
    err = max(np.max(np.abs(regress_predict(model, t) - th)) for t, th in test)
    assert err < 1e-3
    A, c = regress_closed_form(train)
    A_m, c_m = model.effective_affine()
    rows = np.vstack([transitions(t) for t, _ in test])
    assert np.max(np.abs((rows @ A.T + c) - (rows @ A_m.T + c_m))) < 1e-3


def test_regression_constant_target_and_big_batch():
    data = [(t, np.array([0.25, 0.75])) for t, _ in linear_dataset(20, 2)]
    model = regress_fit(data, epochs=5, batch_size=10_000, lr=0.001)
    for t, _ in linear_dataset(5, 3):
        assert regress_predict(model, t) == pytest.approx([0.25, 0.75], abs=1e-3)


def test_regression_errors():
    with pytest.raises(EmptyInputError):
        regress_fit([])
    model = regress_fit(linear_dataset(10, 0), epochs=1)
    bad = Trajectory("spring-damper", np.zeros(3), np.zeros((3, 3)), np.zeros((2, 1)))
    with pytest.raises(ShapeError):
        regress_predict(model, bad)


def test_regression_predict_reductions():
    rng = np.random.default_rng(0)
    model = RegressionModel(rng.normal(size=(2, 5)), np.array([0.5, 0.5]), np.zeros(5), np.eye(5) * 0.1)
    one = Trajectory("pendulum", [0.1, 0.2], [[0.1, 0.2], [0.3, 0.1]], [[0.5]])
    row = transitions(one)
    assert regress_predict(model, one) == pytest.approx(np.clip(model.raw(row)[0], 0, 1))
    same = constant_traj([0.1, 0.2], [0.5], horizon=6)
    assert regress_predict(model, same) == pytest.approx(np.clip(model.raw(transitions(same)[:1])[0], 0, 1))
    wild = RegressionModel(rng.normal(size=(2, 5)) * 1e6, np.array([-1e6, 1e6]), np.zeros(5), np.eye(5))
    for _ in range(10):
        t = constant_traj(rng.normal(size=2), rng.normal(size=1))
        p = regress_predict(wild, t)
        assert np.all((p >= 0) & (p <= 1))
    assert np.all((regress_predict_many(wild, [one, same]) >= 0))


def test_bayesopt_incumbent_rules():
    def bowl(x):
        return np.sum((np.atleast_2d(x) - 0.3) ** 2, axis=1)

    theta, hist = bayesopt_calibrate("pendulum", [None], 2, seed=3, cost_fn=_CostFn(bowl), n_init=2)
    best = min(hist, key=lambda h: h[1])
    assert np.array_equal(theta, best[0])
    with pytest.raises(RangeError):
        bayesopt_calibrate("pendulum", [None], 1, cost_fn=_CostFn(bowl))
    _, hist = bayesopt_calibrate("pendulum", [None], 25, seed=0, cost_fn=_CostFn(bowl))
    trace = incumbent_trace(hist)
    assert all(b <= a for a, b in zip(trace, trace[1:]))


class _CostFn:
    dim = 2

    def __init__(self, f):
        self.f = f

    def __call__(self, x):
        return self.f(x)


def test_bayesopt_survives_failed_evaluations():
    def cost(x):
        x = np.atleast_2d(x)
        c = np.sum((x - 0.6) ** 2, axis=1)
        return np.where(x[:, 0] < 0.2, np.inf, c)

    theta, hist = bayesopt_calibrate("pendulum", [None], 20, seed=1, cost_fn=_CostFn(cost))
    assert any(np.isinf(c) for _, c in hist) or all(t[0] >= 0.2 for t, _ in hist)
    assert np.isfinite(min(c for _, c in hist))
    state = BayesOptState(2)
    state.observe([0.1, 0.1], np.inf)
    state.observe([0.5, 0.5], 1.0)
    assert np.all(np.isfinite(state.targets()))


def test_replay_cost_is_deterministic(pendulum_refs):
    cost = ReplayCost("pendulum", pendulum_refs)
    th = np.array([[0.41, 0.52], [0.41, 0.52]])
    c = cost(th)
    assert c[0] == c[1]
    assert cost(PENDULUM_TRUTH[None])[0] == 0.0


@pytest.mark.slow
def test_bayesopt_self_calibration(pendulum_refs):
    theta, hist = bayesopt_calibrate("pendulum", pendulum_refs, 50, seed=0)
    assert min(c for _, c in hist) < hist[0][1]
    again, hist2 = bayesopt_calibrate("pendulum", pendulum_refs, 50, seed=0)
    assert np.array_equal(theta, again)
    assert [c for _, c in hist] == [c for _, c in hist2]


def _sine_family(rng, k=10):
    amp, phase = rng.uniform(0.1, 5.0), rng.uniform(0, np.pi)
    x = rng.uniform(-5, 5, size=(2 * k, 1))
    y = amp * np.sin(x + phase)
    return x[:k], y[:k], x[k:], y[k:]


def test_maml_single_task_collapse():
    task = _sine_family(np.random.default_rng(0), 5)
    model = maml_metatrain(lambda rng: task, 300, 1, 1, in_dim=1, out_dim=1, hidden=(20, 20),
                           inner_lr=0.01, outer_lr=0.01, seed=0)
    pred = model.predict_raw(task[2])
    assert np.mean((pred - task[3]) ** 2) < 0.05 * np.mean(task[3] ** 2)


def test_maml_zero_inner_steps_is_multitask_regression():
    rng = np.random.default_rng(1)
    tasks = [_sine_family(rng, 5) for _ in range(4)]
    from simcal.numkit.mlp import Mlp

    net = Mlp([1, 8, 1], seed=2)
    _, g_maml = meta_gradient(net, tasks, 0, 0.01)
    params = [p.detach().clone().requires_grad_(True) for p in net.params]
    loss = sum(torch.mean((net.forward(torch.as_tensor(xq), params) - torch.as_tensor(yq)) ** 2)
               for _, _, xq, yq in tasks) / len(tasks)
    g_plain = torch.autograd.grad(loss, params)
    for a, b in zip(g_maml, g_plain):
        assert torch.max(torch.abs(a - b)) < 1e-10


@pytest.mark.slow
def test_maml_adaptation_helps_on_sine_family():
    model = maml_metatrain(_sine_family, 2000, 5, 1, in_dim=1, out_dim=1, hidden=(40, 40),
                           inner_lr=0.01, outer_lr=0.003, seed=0)
    rng = np.random.default_rng(123)
    better = 0
    for _ in range(100):
        xs, ys, xq, yq = _sine_family(rng)
        pre = np.mean((model.predict_raw(xq) - yq) ** 2)
        fast = maml_adapt_supervised(model, model.standardize(xs), ys, 1)
        post = np.mean((model.predict_raw(xq, fast) - yq) ** 2)
        better += post < pre
    assert better >= 95


def test_maml_nonfinite_reports_iteration():
    bad = (np.array([[1.0]]), np.array([[np.nan]]), np.array([[1.0]]), np.array([[1.0]]))
    with pytest.raises(NumericError, match="iteration 0"):
        maml_metatrain(lambda rng: bad, 3, 1, 1, in_dim=1, out_dim=1, hidden=(4,))


def test_maml_adapt_copy_semantics_and_noop(pendulum_refs):
    from simcal.estimators.maml import maml_train_env

    model = maml_train_env("pendulum", n_settings=20, meta_iters=5, tasks_per_batch=2, seed=0)
    before = model.fingerprint()
    raw = maml_adapt(model, pendulum_refs, 0)
    from simcal.estimators.features import FeatureSpec, featurize

    fs = FeatureSpec(2, 1)
    x = np.stack([featurize(t, fs) for t in pendulum_refs])
    assert raw == pytest.approx(np.clip(model.predict_raw(x).mean(axis=0), 0, 1), abs=1e-12)
    trace = []
    maml_adapt(model, pendulum_refs, 3, trace=trace)
    assert model.fingerprint() == before
    assert len(trace) == 4


def test_adaptation_on_convex_probe_is_monotone():
    from simcal.numkit.mlp import Mlp

    net = Mlp([2, 1], params=[np.array([[0.3, -0.2]]), np.array([0.1])])
    x = torch.as_tensor(np.random.default_rng(0).normal(size=(8, 2)), dtype=DTYPE)
    y = x @ torch.tensor([[1.0], [2.0]], dtype=DTYPE)
    losses = []
    for k in range(6):
        fast = adapted_params(net, [p.detach().clone().requires_grad_(True) for p in net.params], x, y, k, 0.05, False)
        losses.append(float(torch.mean((net.forward(x, fast) - y) ** 2).detach()))
    assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))
