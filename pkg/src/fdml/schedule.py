"""Shared mini-batch schedule and the step-size rule.

Every party derives the identical batch sequence from the run seed, so a
given iteration t means the same mini-batch everywhere. The generator is
pinned (splitmix64 feeding Fisher-Yates) because cross-implementation
determinism needs one concrete PRNG, not whatever the host library ships.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    """64-bit splitmix generator; tiny, stateful and easy to pin down."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return (z ^ (z >> 31)) & _MASK

    def below(self, bound: int) -> int:
        # modulo bias is < 2^-40 for any bound that fits a dataset
        return self.next_u64() % bound


def fisher_yates(n: int, rng: SplitMix64) -> np.ndarray:
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@dataclass
class SampleSchedule:
    """Seed-derived global order of mini-batches I(t), t = 1..T."""

    seed: int
    n_samples: int
    batch_size: int
    epochs: int
    _batches: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_samples < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("schedule requires n >= 1, B >= 1, E >= 0")
        rng = SplitMix64(self.seed)
        self._batches = []
        for _ in range(self.epochs):
            perm = fisher_yates(self.n_samples, rng)
            for start in range(0, self.n_samples, self.batch_size):
                self._batches.append(perm[start : start + self.batch_size])

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(self.n_samples / self.batch_size)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def batch(self, t: int) -> np.ndarray:
        """Sample ids of iteration t (1-based, matching the update clock)."""
        if not 1 <= t <= self.total_steps:
            raise IndexError(f"iteration {t} outside 1..{self.total_steps}")
        return self._batches[t - 1]

    def __iter__(self):
        return iter(self._batches)


def learning_rate(eta: float, t: int) -> float:
    """Step size eta / sqrt(t) for the 1-based iteration t."""
    if t < 1:
        raise ValueError("iterations are 1-based")
    return eta / math.sqrt(t)
