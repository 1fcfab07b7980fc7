"""Calibrated perturbation of outgoing local predictions.

Noise is counter-based: the draw at (seed, draw_index) is a pure function,
so a noisy training run replays exactly. Applied only to pushed training
predictions, never at evaluation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fdml.schedule import _MASK

_GOLDEN = 0x9E3779B97F4A7C15

MECHANISMS = ("none", "laplace", "gaussian")


@dataclass(frozen=True)
class NoiseSpec:
    mechanism: str = "none"
    level: float = 0.0  # scale parameter b
    seed: int = 0

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.level < 0:
            raise ValueError("noise level must be >= 0")

    @property
    def active(self) -> bool:
        return self.mechanism != "none" and self.level > 0.0


def _mix(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _uniform(seed: int, stream: int):
    """Open-interval (0,1) uniform, vectorized over stream indices."""
    s = np.asarray(stream, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (np.uint64(seed & _MASK) * np.uint64(0xD1342543DE82EF95) + s) & np.uint64(_MASK)
        z = (x + np.uint64(_GOLDEN)) & np.uint64(_MASK)
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(_MASK)
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(_MASK)
        z = (z ^ (z >> np.uint64(31)))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53


def noise_draw(spec: NoiseSpec, draw_index) -> np.ndarray:
    """Deterministic noise value(s) for the given draw index (or array)."""
    idx = np.atleast_1d(np.asarray(draw_index, dtype=np.uint64))
    if spec.mechanism == "laplace":
        u = _uniform(spec.seed, idx * np.uint64(2))
        v = u - 0.5
        z = -spec.level * np.sign(v) * np.log1p(-2.0 * np.abs(v))
    elif spec.mechanism == "gaussian":
        u1 = _uniform(spec.seed, idx * np.uint64(2))
        u2 = _uniform(spec.seed, idx * np.uint64(2) + np.uint64(1))
        z = spec.level * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
    else:
        z = np.zeros(idx.shape)
    return z


def perturb(value: float, spec: NoiseSpec, draw_index: int) -> float:
    """value + zeta with zeta ~ Laplace(0, b) or Normal(0, b^2); identity
    when the mechanism is none or b = 0."""
    if not spec.active:
        return value
    return float(value + noise_draw(spec, draw_index)[0])


def perturb_array(values: np.ndarray, spec: NoiseSpec, first_draw_index: int) -> np.ndarray:
    """Perturb a batch; element k uses draw index first_draw_index + k."""
    if not spec.active:
        return values
    idx = np.arange(first_draw_index, first_draw_index + values.size, dtype=np.uint64)
    return values + noise_draw(spec, idx)
