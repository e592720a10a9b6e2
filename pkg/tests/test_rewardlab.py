import math

import numpy as np
import pytest

from conftest import exciter_refs
from fdcheck import autograd_gradient, fd_gradient, max_rel_error
from simcal.core import Trajectory
from simcal.errors import EmptyInputError, ShapeError
from simcal.estimators.features import FeatureSpec, featurize
from simcal.estimators.simdata import simulate_thetas
from simcal.rewardlab import (
    Discriminator,
    LearnedRewardFn,
    discrepancy_reward,
    disc_train_step,
    learned_reward,
    reward_from_d,
)
from simcal.policy import LinearPolicy


def const_traj(value, horizon=10):
    return Trajectory("pendulum", np.full(2, value), np.full((horizon + 1, 2), value), np.zeros((horizon, 1)))


def accuracy_on(disc, pos, neg):
    return np.mean(np.concatenate([disc.prob(pos) > 0.5, disc.prob(neg) < 0.5]))


def test_identical_sources_plateau_at_ln2():
    rng = np.random.default_rng(0)
    pool = simulate_thetas("pendulum", rng.uniform(0, 1, (2000, 2)), seed=1).trajectories()
    feats = np.stack([featurize(t, FeatureSpec(2, 1)) for t in pool])
    disc = Discriminator(2, 1, seed=0, in_mean=feats.mean(0), in_scale=feats.std(0) + 1e-9)
    losses = []
    for _ in range(500):
        idx = rng.choice(len(pool), 64, replace=False)
        losses.append(disc_train_step(disc, [pool[j] for j in idx[:32]], [pool[j] for j in idx[32:]]))
    assert abs(np.mean(losses[-100:]) - math.log(2)) < 0.05


@pytest.mark.parametrize("mode", ["trajectory", "transition"])
def test_separable_probe(mode):
    zeros, ones = [const_traj(0.0)] * 8, [const_traj(1.0)] * 8
    disc = Discriminator(2, 1, seed=0, mode=mode)
    for _ in range(200):
        disc_train_step(disc, zeros, ones)
    assert accuracy_on(disc, zeros, ones) > 0.95


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    disc = Discriminator(2, 1, hidden=(6,), seed=1)
    ref = simulate_thetas("pendulum", rng.uniform(0, 1, (4, 2)), seed=3).trajectories()
    sim = simulate_thetas("pendulum", rng.uniform(0, 1, (4, 2)), seed=4).trajectories()
    x_ref, _ = disc.inputs(ref)
    x_sim, _ = disc.inputs(sim)
    loss = lambda p: disc.loss(p, x_ref, x_sim)  # noqa: E731
    assert max_rel_error(autograd_gradient(loss, disc.net.params), fd_gradient(loss, disc.net.params)) < 1e-4


def test_reward_values():
    assert reward_from_d(0.5) == pytest.approx(-0.693147, abs=1e-6)
    assert reward_from_d(0.1) == pytest.approx(-2.302585, abs=1e-6)
    assert reward_from_d(1 - 1e-12) == pytest.approx(0.0, abs=1e-11)
    assert reward_from_d(0.0) == -math.inf
    ds = np.linspace(0.01, 0.99, 50)
    for form in ("log-d", "neg-log-one-minus-d"):
        r = [reward_from_d(d, form) for d in ds]
        assert all(b > a for a, b in zip(r, r[1:]))


def test_learned_reward_frozen_is_deterministic_and_nonpositive():
    disc = Discriminator(2, 1, seed=0)
    with pytest.raises(EmptyInputError):
        learned_reward(disc, const_traj(0.2))
    disc_train_step(disc, [const_traj(0.0)], [const_traj(1.0)])
    r1, r2 = learned_reward(disc, const_traj(0.3)), learned_reward(disc, const_traj(0.3))
    assert r1 == r2 <= 0.0
    assert r1 == pytest.approx(math.log(disc.prob([const_traj(0.3)])[0]), abs=1e-12)


def test_errors():
    disc = Discriminator(2, 1)
    with pytest.raises(EmptyInputError):
        disc_train_step(disc, [], [const_traj(0.0)])
    bad = Trajectory("spring-damper", np.zeros(3), np.zeros((3, 3)), np.zeros((2, 1)))
    with pytest.raises(ShapeError):
        disc.prob([bad])


def test_discrepancy_reward_peaks_at_truth():
    truth = np.array([0.3, 0.7])
    refs = exciter_refs("pendulum", truth, n=3)
    reward = discrepancy_reward("pendulum", refs)
    r = reward(np.array([truth, [0.6, 0.2]]))
    assert r[0] == 0.0 and r[1] < 0.0


def test_learned_reward_accepts_mismatched_starts_and_actions():
    truth = np.array([0.3, 0.7])
    policy = LinearPolicy([[-2.0, -0.5]], [0.3], -2.0, 2.0)
    refs = simulate_thetas("pendulum", np.repeat(truth[None], 4, 0), seed=11, source=policy).trajectories()
    fn = LearnedRewardFn("pendulum", refs, seed=0, disc_steps=2)
    out = fn(np.array([[0.3, 0.7], [0.9, 0.1], [0.5, 0.5]]))
    assert out.shape == (3,)
    assert np.all(np.isfinite(out)) and np.all(out <= 0.0)
