import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from fdcheck import autograd_gradient, fd_gradient, max_rel_error
from simcal.errors import ConditioningError, DomainError, NumericError, ShapeError
from simcal.numkit import container
from simcal.numkit.gp import GpState, gp_posterior, se_kernel, ucb
from simcal.numkit.mdn import MdnHead, MixtureDensity, mdn_log_density, mdn_nll, mdn_sample
from simcal.numkit.mlp import DTYPE, Mlp, OptimizerState, Trainer, grad, mlp_forward, opt_step


def test_zero_net_returns_last_bias():
    net = Mlp([3, 4, 2], seed=0)
    net.params = [torch.zeros_like(p) for p in net.params]
    net.params[-1] = torch.tensor([0.3, -1.2], dtype=DTYPE)
    assert mlp_forward(net, [1.0, 2.0, 3.0]) == pytest.approx([0.3, -1.2])


def test_identity_net_passthrough():
    net = Mlp([3, 3], params=[np.eye(3), np.zeros(3)])
    assert mlp_forward(net, [1.0, -2.0, 0.5]) == pytest.approx([1.0, -2.0, 0.5])


def test_forward_matches_hand_arithmetic():
    net = Mlp([2, 3, 1], seed=4)
    W0, b0, W1, b1 = net.arrays()
    x = np.array([1.0, -1.0])
    hidden = [np.tanh(sum(W0[i, j] * x[j] for j in range(2)) + b0[i]) for i in range(3)]
    expected = sum(W1[0, i] * hidden[i] for i in range(3)) + b1[0]
    assert mlp_forward(net, x)[0] == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ShapeError):
        mlp_forward(net, [1.0, 2.0, 3.0])


def test_grad_constant_and_minimum():
    net = Mlp([2, 3, 1], seed=1)
    zero = grad(lambda p, b: torch.tensor(3.0, dtype=DTYPE), net)
    assert all(np.all(g == 0) for g in zero)
    x = torch.randn(5, 2, dtype=DTYPE)
    with torch.no_grad():
        y = net.forward(x)
    at_fit = grad(lambda p, b: torch.mean((net.forward(x, p) - y) ** 2), net)
    assert max(np.abs(g).max() for g in at_fit) < 1e-14
    with pytest.raises(NumericError):
        grad(lambda p, b: torch.tensor(float("nan"), dtype=DTYPE), net)


@pytest.mark.parametrize("seed", range(3))
def test_grad_matches_finite_differences(seed):
    net = Mlp([4, 8, 3], seed=seed)
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn(6, 4, generator=gen, dtype=DTYPE)
    y = torch.randn(6, 3, generator=gen, dtype=DTYPE)

    def loss(p):
        return torch.mean((net.forward(x, p) - y) ** 2)

    analytic = grad(lambda p, b: loss(p), net)
    assert max_rel_error(analytic, fd_gradient(loss, net.params)) < 1e-4


def test_opt_step_examples():
    assert opt_step([np.array([1.0])], [np.array([2.0])], "sgd", 0.1)[0] == pytest.approx([0.8])
    p = [np.array([1.0, -3.0])]
    assert np.array_equal(opt_step(p, [np.zeros(2)], "sgd", 0.5)[0], p[0])
    st_ = OptimizerState()
    assert np.array_equal(opt_step(p, [np.zeros(2)], "adam", 0.5, st_)[0], p[0])
    with pytest.raises(NumericError):
        opt_step(p, [np.array([np.inf, 0.0])], "sgd", 0.1)
    with pytest.raises(ShapeError):
        opt_step(p, [np.zeros(3)], "sgd", 0.1)


def test_sgd_converges_on_convex_quadratic():
    A = np.diag([1.0, 2.0, 4.0])
    target = np.array([0.5, -1.0, 2.0])
    w = [np.zeros(3)]
    for _ in range(200):
        w = opt_step(w, [A @ (w[0] - target)], "sgd", 0.2)
    assert np.max(np.abs(w[0] - target)) < 1e-6


def test_trainer_reduces_loss():
    net = Mlp([1, 8, 1], seed=0)
    x = torch.linspace(-1, 1, 20, dtype=DTYPE)[:, None]
    y = x**2
    tr = Trainer(net, "adam", 0.01)
    first = tr.step(lambda p, b: torch.mean((net.forward(x, p) - y) ** 2))
    for _ in range(200):
        last = tr.step(lambda p, b: torch.mean((net.forward(x, p) - y) ** 2))
    assert last < 0.1 * first


def test_gp_interpolates_training_points():
    X = np.array([[0.1], [0.4], [0.9]])
    y = np.array([0.3, -0.2, 1.1])
    gp = GpState(X, y, noise_var=0.0)
    for xi, yi in zip(X, y):
        mu, var = gp_posterior(gp, xi)
        assert mu == pytest.approx(yi, abs=1e-9)
        assert var <= 1e-9


def test_gp_reverts_to_prior_far_away():
    gp = GpState(np.array([[0.1, 0.2]]), np.array([2.0]))
    mu, var = gp_posterior(gp, np.array([50.0, 50.0]))
    assert mu == pytest.approx(0.0, abs=1e-12)
    assert var == pytest.approx(gp.signal_var)


def test_gp_matches_dense_inverse():
    X = np.array([[0.0], [0.3], [0.7]])
    y = np.array([1.0, -0.5, 0.25])
    ell, sf, sn = 0.2, 1.0, 1e-8
    gp = GpState(X, y, ell, sf, sn)
    xs = np.array([0.5])
    K = np.array([[sf * np.exp(-0.5 * (a - b) ** 2 / ell**2) for b in X[:, 0]] for a in X[:, 0]]) + sn * np.eye(3)
    k = np.array([sf * np.exp(-0.5 * (xs[0] - b) ** 2 / ell**2) for b in X[:, 0]])
    Kinv = np.linalg.inv(K)
    mu, var = gp_posterior(gp, xs)
    assert mu == pytest.approx(k @ Kinv @ y, abs=1e-10)
    assert var == pytest.approx(sf - k @ Kinv @ k, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_gp_variance_never_grows_with_data_at_query(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(5, 2))
    gp = GpState(X, rng.normal(size=5), noise_var=1e-8)
    q = rng.uniform(0, 1, size=2)
    _, before = gp_posterior(gp, q)
    _, after = gp_posterior(gp.add(q, 0.0), q)
    assert after <= before + 1e-12


def test_gp_conditioning_error():
    X = np.zeros((4, 1))
    gp = GpState(X, np.arange(4.0), noise_var=-10.0)
    with pytest.raises(ConditioningError):
        gp_posterior(gp, np.array([0.5]))


def test_ucb_is_mean_plus_scaled_std():
    gp = GpState(np.array([[0.2], [0.8]]), np.array([0.0, 1.0]))
    xs = np.array([[0.5]])
    mu, var = gp_posterior(gp, xs)
    assert ucb(gp, xs, 2.0) == pytest.approx(mu + 2.0 * np.sqrt(var))
    assert se_kernel(xs, xs, 0.2, 1.5)[0, 0] == 1.5


def test_mdn_nll_single_standard_gaussian():
    mix = MixtureDensity([1.0], [[0.4]], [[1.0]])
    assert mdn_nll(mix, [0.4]) == pytest.approx(0.5 * np.log(2 * np.pi))


def test_mdn_duplicate_component_invariance():
    mix = MixtureDensity([0.3, 0.7], [[0.1, 0.2], [0.6, 0.5]], [[0.2, 0.3], [0.1, 0.4]])
    dup = MixtureDensity([0.15, 0.15, 0.7], [[0.1, 0.2], [0.1, 0.2], [0.6, 0.5]],
                         [[0.2, 0.3], [0.2, 0.3], [0.1, 0.4]])
    assert mdn_nll(mix, [0.3, 0.3]) == pytest.approx(mdn_nll(dup, [0.3, 0.3]), rel=1e-13)


def test_mdn_density_matches_direct_sum():
    rng = np.random.default_rng(5)
    w = np.array([0.35, 0.65])
    mu = rng.uniform(0, 1, size=(2, 3))
    sd = rng.uniform(0.1, 0.5, size=(2, 3))
    theta = rng.uniform(0, 1, size=3)
    dens = 0.0
    for k in range(2):
        p = w[k]
        for i in range(3):
            p *= np.exp(-0.5 * ((theta[i] - mu[k, i]) / sd[k, i]) ** 2) / (np.sqrt(2 * np.pi) * sd[k, i])
        dens += p
    assert mdn_nll(MixtureDensity(w, mu, sd), theta) == pytest.approx(-np.log(dens), rel=1e-12)


def test_mixture_validation():
    with pytest.raises(DomainError):
        MixtureDensity([1.0], [[0.5]], [[0.0]])
    with pytest.raises(DomainError):
        MixtureDensity([0.5, 0.6], [[0.5], [0.2]], [[0.1], [0.1]])
    with pytest.raises(ShapeError):
        mdn_log_density(MixtureDensity([1.0], [[0.5]], [[0.1]]), [0.1, 0.2])


def test_mdn_sample_cases():
    tight = MixtureDensity([1.0], [[0.3, 0.6]], [[1e-8, 1e-8]])
    assert np.allclose(mdn_sample(tight, 50, seed=1), [0.3, 0.6], atol=1e-6)
    only_first = MixtureDensity([1.0, 0.0], [[0.1], [0.9]], [[0.01], [0.01]])
    assert np.all(mdn_sample(only_first, 200, seed=2) < 0.5)
    wide = MixtureDensity([1.0], [[0.5]], [[3.0]])
    s = mdn_sample(wide, 500, seed=3)
    assert s.min() >= 0.0 and s.max() <= 1.0


def test_mdn_component_frequencies():
    w = np.array([0.2, 0.5, 0.3])
    mix = MixtureDensity(w, [[0.1], [0.5], [0.9]], [[1e-4], [1e-4], [1e-4]])
    n = 10_000
    s = mdn_sample(mix, n, seed=7)[:, 0]
    counts = np.array([np.sum(np.abs(s - c) < 0.05) for c in (0.1, 0.5, 0.9)])
    se = np.sqrt(w * (1 - w) / n)
    assert np.all(np.abs(counts / n - w) <= 3 * se)


@pytest.mark.parametrize("seed", range(2))
def test_mdn_loss_gradient_matches_finite_differences(seed):
    head = MdnHead(3, 2, hidden=(5,), n_components=2, seed=seed)
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn(4, 3, generator=gen, dtype=DTYPE)
    y = torch.rand(4, 2, generator=gen, dtype=DTYPE)

    def loss(p):
        return head.nll(p, x, y)

    assert max_rel_error(autograd_gradient(loss, head.net.params), fd_gradient(loss, head.net.params)) < 1e-4


def test_mdn_head_weights_on_simplex():
    head = MdnHead(3, 2, hidden=(8,), n_components=4, seed=0)
    mix = head.mixture(np.random.default_rng(0).normal(size=3))
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_container_round_trip_and_errors(tmp_path):
    arrays = {"w": np.arange(6.0).reshape(2, 3), "b": np.array([1.5]), "s": np.array(2.0)}
    container.save(tmp_path / "x.ckpt", arrays, {"k": 1})
    back, meta = container.load(tmp_path / "x.ckpt")
    assert meta == {"k": 1}
    for k in arrays:
        assert np.array_equal(back[k], arrays[k])
    raw = container.dumps(arrays)
    assert raw[:4] == b"SIPE"
    with pytest.raises(container.ContainerError):
        container.loads(b"NOPE" + raw[4:])
    with pytest.raises(container.ContainerError):
        container.loads(raw + b"\0")
