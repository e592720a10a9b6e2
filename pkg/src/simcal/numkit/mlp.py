"""Feedforward networks, reverse-mode gradients and first-order optimizers.

Networks keep their weights as float64 torch tensors so that losses written
with torch operations get exact reverse-mode gradients (including the
second-order terms MAML needs). Inputs and outputs at the public surface are
numpy arrays.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

from simcal.errors import NumericError, ShapeError

DTYPE = torch.float64

ACTIVATIONS = {"tanh": torch.tanh, "relu": torch.relu}


def functional_forward(params: Sequence[torch.Tensor], x: torch.Tensor, activation: str = "tanh") -> torch.Tensor:
    """Affine layers ``[W0, b0, W1, b1, ...]`` with ``activation`` between them."""
    act = ACTIVATIONS[activation]
    n_layers = len(params) // 2
    h = x
    for i in range(n_layers):
        h = h @ params[2 * i].T + params[2 * i + 1]
        if i < n_layers - 1:
            h = act(h)
    return h


class Mlp:
    """Multilayer perceptron with layer sizes ``[in, hidden..., out]``."""

    def __init__(self, sizes: Sequence[int], activation: str = "tanh", seed: int = 0, params=None):
        if len(sizes) < 2:
            raise ShapeError("an Mlp needs at least input and output sizes")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        if params is None:
            gen = torch.Generator().manual_seed(int(seed))
            params = []
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
                bound = 1.0 / np.sqrt(fan_in)
                params.append((torch.rand(fan_out, fan_in, generator=gen, dtype=DTYPE) * 2 - 1) * bound)
                params.append((torch.rand(fan_out, generator=gen, dtype=DTYPE) * 2 - 1) * bound)
        self.params = [torch.as_tensor(np.asarray(p, dtype=float)).clone() for p in params]
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if tuple(self.params[2 * i].shape) != (fan_out, fan_in) or tuple(self.params[2 * i + 1].shape) != (fan_out,):
                raise ShapeError(f"layer {i} parameters do not match sizes {self.sizes}")

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: torch.Tensor, params=None) -> torch.Tensor:
        return functional_forward(self.params if params is None else params, x, self.activation)

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.activation, params=[p.detach().clone() for p in self.params])

    def arrays(self) -> list[np.ndarray]:
        return [p.detach().numpy().copy() for p in self.params]

    def n_params(self) -> int:
        return sum(p.numel() for p in self.params)


def mlp_forward(net: Mlp, x) -> np.ndarray:
    """Evaluate ``net`` on one input vector or a batch of row vectors."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != net.in_dim:
        raise ShapeError(f"network expects input dim {net.in_dim}, got {arr.shape[-1]}")
    with torch.no_grad():
        return net.forward(torch.as_tensor(arr)).numpy()


def grad(loss: Callable, net: Mlp, batch=None) -> list[np.ndarray]:
    """Reverse-mode gradient of ``loss(params, batch)`` with respect to every parameter tensor."""
    params = [p.detach().clone().requires_grad_(True) for p in net.params]
    value = loss(params, batch)
    if not torch.is_tensor(value):
        value = torch.as_tensor(float(value), dtype=DTYPE)
    if not torch.isfinite(value):
        raise NumericError(f"loss is not finite: {float(value)}")
    if not value.requires_grad:
        return [np.zeros(tuple(p.shape)) for p in params]
    grads = torch.autograd.grad(value, params, allow_unused=True)
    return [np.zeros(tuple(p.shape)) if g is None else g.numpy().copy() for p, g in zip(params, grads)]


class OptimizerState:
    """Moment buffers for Adam; unused by SGD."""

    def __init__(self):
        self.t = 0
        self.m: list | None = None
        self.v: list | None = None


ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def _finite(g) -> bool:
    if torch.is_tensor(g):
        return bool(torch.all(torch.isfinite(g)))
    return bool(np.all(np.isfinite(g)))


def opt_step(params: list, grads: list, optimizer: str = "sgd", lr: float = 1e-3, state: OptimizerState | None = None) -> list:
    """Return updated parameters; works on numpy arrays or torch tensors alike.

    Adam keeps its moments in ``state``, which must be reused across calls.
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if tuple(p.shape) != tuple(g.shape):
            raise ShapeError(f"parameter shape {tuple(p.shape)} vs gradient shape {tuple(g.shape)}")
        if not _finite(g):
            raise NumericError("non-finite gradient")
    if optimizer == "sgd":
        return [p - lr * g for p, g in zip(params, grads)]
    if optimizer != "adam":
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if state is None:
        raise ValueError("adam needs an OptimizerState carried across steps")
    b1, b2 = ADAM_BETAS
    if state.m is None:
        state.m = [g * 0.0 for g in grads]
        state.v = [g * 0.0 for g in grads]
    state.t += 1
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1**state.t)
        v_hat = state.v[i] / (1 - b2**state.t)
        out.append(p - lr * m_hat / (v_hat**0.5 + ADAM_EPS))
    return out


class Trainer:
    """Minimizes a torch loss over an :class:`Mlp`'s parameters with :func:`opt_step`."""

    def __init__(self, net: Mlp, optimizer: str = "adam", lr: float = 1e-3):
        self.net = net
        self.optimizer = optimizer
        self.lr = lr
        self.state = OptimizerState()

    def step(self, loss: Callable, batch=None) -> float:
        params = [p.detach().requires_grad_(True) for p in self.net.params]
        value = loss(params, batch)
        if not torch.isfinite(value):
            raise NumericError(f"loss is not finite: {float(value)}")
        grads = torch.autograd.grad(value, params)
        with torch.no_grad():
            new = opt_step([p.detach() for p in params], list(grads), self.optimizer, self.lr, self.state)
        self.net.params = [p.detach() for p in new]
        return float(value.detach())
