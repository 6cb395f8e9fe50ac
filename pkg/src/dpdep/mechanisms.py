"""Randomization primitives: Laplace noise and randomized response."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream


@dataclass(frozen=True)
class LaplaceNoiseSpec:
    location: float
    scale: float

    def __post_init__(self) -> None:
        if not (self.scale > 0):
            raise ValueError(f"scale must be > 0, got {self.scale}")


def _laplace(gen: np.random.Generator, scale: float, size=None):
    """Exact inverse-CDF Laplace draw: X = -b * sgn(U) * ln(1 - 2|U|), U ~ Unif(-1/2, 1/2)."""
    u = gen.random(size) - 0.5
    # 1 - 2|u| can underflow to 0 only at u = -0.5 exactly; keep log finite
    inner = np.maximum(1.0 - 2.0 * np.abs(u), 5e-324)
    return -scale * np.sign(u) * np.log(inner)


def laplace_sample(spec: LaplaceNoiseSpec, rng: RngStream, size=None):
    draw = spec.location + _laplace(rng.generator(), spec.scale, size)
    return float(draw) if size is None else draw


def laplace_mechanism(values, l1_sensitivity: float, epsilon: float, rng: RngStream):
    """Add independent Laplace(scale = sensitivity / epsilon) noise per coordinate."""
    if not (l1_sensitivity > 0):
        raise ValueError(f"l1_sensitivity must be > 0, got {l1_sensitivity}")
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    values = np.asarray(values, dtype=float)
    return values + _laplace(rng.generator(), l1_sensitivity / epsilon, values.shape)


def response_probability(epsilon: float) -> float:
    """Keep probability pi = e^eps / (1 + e^eps) of randomized response."""
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    return 1.0 / (1.0 + math.exp(-epsilon))


def randomized_response(bit: int, epsilon: float, rng: RngStream) -> tuple[int, float]:
    """Release the input bit with probability pi = e^eps/(1+e^eps), else flip it."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    pi = response_probability(epsilon)
    keep = rng.generator().random() < pi
    return (bit if keep else 1 - bit), pi
