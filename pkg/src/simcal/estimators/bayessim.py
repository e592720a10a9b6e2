"""Likelihood-free posterior over parameters: an MDN trained on simulated (features, theta) pairs."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import torch

from simcal.errors import EmptyInputError, ShapeError
from simcal.estimators.features import FeatureSpec, featurize, featurize_arrays
from simcal.estimators.simdata import simulate_prior
from simcal.numkit import container
from simcal.numkit.mdn import MdnHead, MixtureDensity
from simcal.numkit.mlp import DTYPE, Mlp, OptimizerState, opt_step
from simcal.simenv import get_spec

MIN_SIMS = 100


@dataclass
class PosteriorModel:
    env_id: str
    fspec: FeatureSpec
    head: MdnHead
    in_mean: np.ndarray
    in_scale: np.ndarray
    losses: list = field(default_factory=list)
    n_failed: int = 0

    def conditional(self, features) -> MixtureDensity:
        f = np.asarray(features, dtype=float)
        if f.shape != (self.fspec.length,):
            raise ShapeError(f"posterior expects {self.fspec.length} features, got shape {f.shape}")
        return self.head.mixture((f - self.in_mean) / self.in_scale)

    def save(self, path) -> None:
        arrays = {f"p{i}": p.detach().numpy() for i, p in enumerate(self.head.net.params)}
        arrays["in_mean"], arrays["in_scale"] = self.in_mean, self.in_scale
        arrays["losses"] = np.asarray(self.losses, dtype=float)
        meta = {
            "kind": "posterior",
            "env_id": self.env_id,
            "n_subsamples": self.fspec.n_subsamples,
            "sizes": self.head.net.sizes,
            "n_components": self.head.n_components,
            "min_log_std": self.head.min_log_std,
            "n_failed": self.n_failed,
        }
        container.save(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "PosteriorModel":
        arrays, meta = container.load(path)
        spec = get_spec(meta["env_id"])
        fspec = FeatureSpec.for_env(spec, meta["n_subsamples"])
        sizes = meta["sizes"]
        head = MdnHead(sizes[0], spec.dim, tuple(sizes[1:-1]), meta["n_components"], min_log_std=meta["min_log_std"])
        head.net = Mlp(sizes, "tanh", params=[arrays[f"p{i}"] for i in range(2 * (len(sizes) - 1))])
        return cls(meta["env_id"], fspec, head, arrays["in_mean"], arrays["in_scale"],
                   arrays["losses"].tolist(), meta["n_failed"])


def bayessim_train(
    env_id: str,
    n_sims: int = 1000,
    action_source="exciter",
    seed: int = 0,
    *,
    n_components: int = 5,
    hidden=(64, 64),
    epochs: int = 1500,
    lr: float = 0.005,
    batch_size: int | None = None,
) -> PosteriorModel:
    """Draw ``theta ~ U[0,1]^N``, simulate, and fit the MDN by negative log-likelihood.

    Diverged simulations are dropped and counted in ``n_failed``. ``losses``
    records the full-data NLL before training and after every epoch.
    """
    if n_sims < MIN_SIMS:
        raise EmptyInputError(f"need at least {MIN_SIMS} simulations, got {n_sims}")
    spec = get_spec(env_id)
    fspec = FeatureSpec.for_env(spec)
    batch = simulate_prior(env_id, n_sims, seed, action_source)
    feats = featurize_arrays(batch.states, batch.actions, fspec)
    in_mean = feats.mean(axis=0)
    sd = feats.std(axis=0)
    in_scale = np.where(sd > 1e-12, sd, 1.0)
    x = torch.as_tensor((feats - in_mean) / in_scale, dtype=DTYPE)
    y = torch.as_tensor(batch.thetas, dtype=DTYPE)
    head = MdnHead(fspec.length, spec.dim, hidden, n_components, seed=seed)
    state = OptimizerState()
    rng = np.random.default_rng([seed, 5])
    n = x.shape[0]
    bs = n if batch_size is None else min(batch_size, n)
    with torch.no_grad():
        losses = [float(head.nll(head.net.params, x, y))]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = torch.as_tensor(order[start : start + bs])
            params = [p.detach().requires_grad_(True) for p in head.net.params]
            loss = head.nll(params, x[idx], y[idx])
            grads = torch.autograd.grad(loss, params)
            with torch.no_grad():
                head.net.params = [p.detach() for p in opt_step(params, list(grads), "adam", lr, state)]
        with torch.no_grad():
            losses.append(float(head.nll(head.net.params, x, y)))
    return PosteriorModel(env_id, fspec, head, in_mean, in_scale, losses, batch.n_failed)


def posterior(model: PosteriorModel, tau_ref, pooling: str = "mean-feature") -> MixtureDensity:
    """Posterior mixture given reference trajectories.

    ``mean-feature`` conditions once on the averaged feature vector;
    ``mixture`` conditions on each trajectory and pools the mixtures with equal weight.
    """
    if not tau_ref:
        raise EmptyInputError("posterior needs at least one reference trajectory")
    feats = np.stack([featurize(t, model.fspec) for t in tau_ref])
    if pooling == "mean-feature":
        return model.conditional(feats.mean(axis=0))
    if pooling != "mixture":
        raise ValueError(f"unknown pooling {pooling!r}")
    mixes = [model.conditional(f) for f in feats]
    w = np.concatenate([m.weights for m in mixes]) / len(mixes)
    return MixtureDensity(w / w.sum(), np.vstack([m.means for m in mixes]), np.vstack([m.stds for m in mixes]))


def summary_csv(mix: MixtureDensity, names) -> str:
    """One row per (component, parameter): weight, mean and std."""
    out = io.StringIO()
    out.write("component,weight,parameter,mean,std\n")
    for k in range(mix.n_components):
        for i, name in enumerate(names):
            out.write(f"{k},{mix.weights[k]:.17g},{name},{mix.means[k, i]:.17g},{mix.stds[k, i]:.17g}\n")
    return out.getvalue()


def directional_std(cov: np.ndarray, direction) -> float:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return float(np.sqrt(max(d @ cov @ d, 0.0)))
