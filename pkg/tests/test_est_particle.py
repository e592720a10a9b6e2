import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PENDULUM_TRUTH, exciter_refs
from simcal.errors import EmptyInputError, NumericError
from simcal.estimators.adr import adr_calibrate, svgd_step
from simcal.estimators.particles import ParticleSet
from simcal.estimators.registry import run_estimator
from simcal.estimators.simopt import (
    SimOptDist,
    kl_to_uniform,
    reps_dual,
    reps_weights,
    simopt_calibrate,
    simopt_update,
)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=30), st.floats(0.01, 3.0))
def test_reps_weights_on_simplex_within_kl(costs, eps):
    w, eta = reps_weights(costs, eps)
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert kl_to_uniform(w) <= eps + 1e-9
    assert eta > 0


def test_reps_large_epsilon_is_greedy():
    w, _ = reps_weights([3.0, 1.0, 2.0, 5.0], 1e6)
    assert w[1] > 1 - 1e-9


def test_reps_two_costs_grid_oracle():
    c, eps = np.array([1.0, 2.0]), 0.1
    w, eta = reps_weights(c, eps)
    # brute force over the dual on a log grid, then refine
    grid = np.exp(np.linspace(-8, 8, 200001))
    duals = [eps * e + e * np.log(np.mean(np.exp(-(c - c.min()) / e))) for e in grid]
    eta_star = grid[int(np.argmin(duals))]
    w_star = np.exp(-c / eta_star)
    w_star /= w_star.sum()
    assert np.max(np.abs(w - w_star)) < 1e-4


def test_reps_eta_is_dual_local_minimum():
    rng = np.random.default_rng(4)
    c = rng.uniform(0, 10, 12)
    _, eta = reps_weights(c, 0.5)
    shifted = c - c.min()
    d0 = reps_dual(shifted, eta, 0.5)
    for f in (0.99, 1.01):
        assert reps_dual(shifted, eta * f, 0.5) >= d0 - 1e-9


def test_reps_rejects_bad_input():
    with pytest.raises(EmptyInputError):
        reps_weights([1.0])
    with pytest.raises(NumericError):
        reps_weights([1.0, np.nan])


def test_simopt_update_equal_costs_gives_sample_moments():
    x = np.random.default_rng(0).uniform(0, 1, (20, 3))
    d = simopt_update(SimOptDist(np.full(3, 0.5), np.full(3, 0.1)), ParticleSet(x), np.ones(20))
    assert d.mean == pytest.approx(x.mean(axis=0), abs=1e-12)
    assert d.var == pytest.approx(np.maximum(x.var(axis=0), 1e-4), abs=1e-12)


def test_simopt_update_degenerate_weights_floor_variance():
    x = np.array([[0.1, 0.2], [0.6, 0.7], [0.9, 0.4]])
    d = simopt_update(SimOptDist(np.full(2, 0.5), np.full(2, 0.1)), ParticleSet(x), [np.inf, 0.0, np.inf])
    assert d.mean == pytest.approx([0.6, 0.7])
    assert np.all(d.var > 0)


def test_simopt_update_three_particles_by_hand():
    x = np.array([[0.2], [0.5], [0.8]])
    c = np.array([0.0, 1.0, 2.0])
    eps = 0.3
    w, eta = reps_weights(c, eps)
    hand = np.exp(-c / eta) / np.exp(-c / eta).sum()
    assert w == pytest.approx(hand, abs=1e-12)
    d = simopt_update(SimOptDist([0.5], [0.1], eps), ParticleSet(x), c)
    m = float(hand @ x[:, 0])
    assert d.mean[0] == pytest.approx(m, abs=1e-12)
    assert d.var[0] == pytest.approx(hand @ (x[:, 0] - m) ** 2, abs=1e-12)


def test_simopt_zero_iterations_returns_initial_distribution():
    ps, dist = simopt_calibrate("pendulum", None, iters=0, cost_fn=lambda t: np.zeros(len(t)), seed=5)
    init = SimOptDist.initial(2, np.random.default_rng(5))
    assert dist.mean == pytest.approx(init.mean)
    assert dist.var == pytest.approx(init.var)


def test_simopt_constant_cost_keeps_mean_in_range():
    _, dist = simopt_calibrate("pendulum", None, iters=5, cost_fn=lambda t: np.zeros(len(t)), seed=1)
    assert np.all(np.isfinite(dist.mean)) and np.all((dist.mean >= 0) & (dist.mean <= 1))


def _svgd_oracle(x, g, step, h):
    m, n = x.shape
    out = x.copy()
    for i in range(m):
        phi = np.zeros(n)
        for j in range(m):
            k = np.exp(-np.sum((x[j] - x[i]) ** 2) / h)
            phi += k * g[j] + k * (-2.0 * (x[j] - x[i]) / h)
        out[i] = x[i] + step * phi / m
    return np.clip(out, 0.0, 1.0)


def test_svgd_three_particles_match_loop_oracle():
    x = np.array([[0.2, 0.3], [0.5, 0.55], [0.7, 0.4]])
    g = np.array([[1.0, -0.5], [0.2, 0.1], [-0.3, 0.8]])
    assert svgd_step(x, g, 0.05, 0.3) == pytest.approx(_svgd_oracle(x, g, 0.05, 0.3), abs=1e-10)


def test_svgd_single_particle_is_gradient_ascent():
    x, g = np.array([[0.4, 0.6]]), np.array([[0.3, -0.2]])
    assert svgd_step(x, g, 0.1) == pytest.approx(x + 0.1 * g, abs=1e-15)


def test_svgd_separates_coincident_particles():
    x = np.full((4, 2), 0.5)
    y = svgd_step(x, np.zeros_like(x), 0.1, 0.05)
    d = np.sum((y[:, None] - y[None]) ** 2, axis=2)
    assert np.min(d[np.triu_indices(4, 1)]) > 0


def test_adr_zero_iterations_has_no_values():
    ps = adr_calibrate("pendulum", None, iters=0, reward_fn=lambda t: np.zeros(len(t)), seed=2)
    assert ps.values is None
    assert ps.particles.shape == (10, 2)


def test_constant_reward_spreads_interior_cluster():
    def min_dist(x):
        d = np.sqrt(np.sum((x[:, None] - x[None]) ** 2, axis=2))
        return d[np.triu_indices(len(x), 1)].min()

    x = 0.5 + 0.02 * np.random.default_rng(7).standard_normal((6, 2))
    dists = [min_dist(x)]
    for _ in range(10):
        x = svgd_step(x, np.zeros_like(x), 0.01)
        dists.append(min_dist(x))
    assert np.all((x > 0) & (x < 1))
    assert all(b > a for a, b in zip(dists, dists[1:]))


@pytest.mark.slow
def test_simopt_and_adr_on_pendulum(pendulum_refs):
    so_err, adr_err = [], []
    for seed in range(3):
        refs = exciter_refs("pendulum", PENDULUM_TRUTH, seed=seed)
        _, dist = simopt_calibrate("pendulum", refs, seed=seed)
        so_err.append(np.abs(dist.mean - PENDULUM_TRUTH))
        ps = adr_calibrate("pendulum", refs, seed=seed)
        adr_err.append(np.abs(ps.best() - PENDULUM_TRUTH))
    assert np.all(np.mean(so_err, axis=0) <= 0.15)
    assert np.all(np.mean(adr_err, axis=0) <= 0.1)


@pytest.mark.slow
def test_adr_keeps_wider_spread_on_surjective_ball():
    env = "bouncing-ball-surjective"
    truth = np.array([0.5, 0.5])
    spreads = {"adr": [], "simopt": []}
    for seed in range(3):
        refs = exciter_refs(env, truth, seed=seed)
        for name in spreads:
            est = run_estimator(name, env, refs, seed)
            spreads[name].append(ParticleSet(est.particles).particle_spread(truth))
    assert np.mean(spreads["adr"]) >= np.mean(spreads["simopt"])
