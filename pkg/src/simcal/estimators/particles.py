"""Ordered sets of concurrent parameter hypotheses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from simcal.core import accuracy
from simcal.errors import EmptyInputError


@dataclass
class ParticleSet:
    """Particles ``(M, N)`` in the unit cube with their latest cost or reward."""

    particles: np.ndarray
    values: np.ndarray | None = None
    seed: int = 0
    higher_is_better: bool = False
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.particles = np.clip(np.atleast_2d(np.asarray(self.particles, dtype=float)), 0.0, 1.0)
        if self.particles.shape[0] == 0:
            raise EmptyInputError("a particle set needs at least one particle")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=float).reshape(-1)

    def __len__(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    def best_index(self) -> int:
        if self.values is None:
            return 0
        v = np.where(np.isfinite(self.values), self.values, -np.inf if self.higher_is_better else np.inf)
        return int(np.argmax(v) if self.higher_is_better else np.argmin(v))

    def best(self) -> np.ndarray:
        return self.particles[self.best_index()].copy()

    def mean(self) -> np.ndarray:
        return self.particles.mean(axis=0)

    def particle_spread(self, theta_true) -> float:
        """Max minus min over particles of each particle's mean accuracy."""
        accs = [accuracy(p, theta_true).mean() for p in self.particles]
        return float(max(accs) - min(accs))

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """Uniform draws (with replacement) from the particles."""
        rng = np.random.default_rng(seed)
        return self.particles[rng.integers(0, len(self), size=n)]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "particles": self.particles.tolist(),
            "values": None if self.values is None else self.values.tolist(),
            "higher_is_better": self.higher_is_better,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParticleSet":
        return cls(np.array(d["particles"]), None if d["values"] is None else np.array(d["values"]),
                   d["seed"], d["higher_is_better"])
