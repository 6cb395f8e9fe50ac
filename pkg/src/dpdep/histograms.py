"""Private histograms (stable / randomized-response) and projection intervals."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mechanisms import _laplace, response_probability
from .rng import RngStream


@dataclass(frozen=True)
class BinGrid:
    """Bins B_k = (2*tau*k - tau, 2*tau*k + tau]; finite index set when bound_B is set."""

    tau: float
    bound_B: float | None = None

    def __post_init__(self) -> None:
        if not (self.tau > 0):
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.bound_B is not None and not (self.bound_B > 0):
            raise ValueError(f"bound_B must be > 0, got {self.bound_B}")

    def index_set(self) -> np.ndarray:
        """S = {k : |2*tau*k| <= bound_B}."""
        if self.bound_B is None:
            raise ValueError("index_set requires a finite grid (bound_B set)")
        kmax = int(math.floor(self.bound_B / (2 * self.tau)))
        return np.arange(-kmax, kmax + 1)


@dataclass(frozen=True)
class HistogramEstimate:
    grid: BinGrid
    masses: dict[int, float] = field(default_factory=dict)
    mode: str = "central-stable"  # or "local-randomized"

    def to_json(self) -> str:
        entries = [[int(k), self.masses[k]] for k in sorted(self.masses)]
        return json.dumps({"tau": self.grid.tau, "mode": self.mode, "entries": entries})


@dataclass(frozen=True)
class ProjectionInterval:
    """Clipping interval [midpoint - radius, midpoint + radius]."""

    midpoint: float
    radius: float
    histogram_failed: bool = False

    @property
    def lo(self) -> float:
        return self.midpoint - self.radius

    @property
    def hi(self) -> float:
        return self.midpoint + self.radius

    def to_json_obj(self) -> dict:
        return {
            "midpoint": self.midpoint,
            "radius": self.radius,
            "histogram_failed": self.histogram_failed,
        }


@dataclass(frozen=True)
class IntervalMode:
    """Projection-interval geometry.

    default: histogram bins of half-width tau, radius 3*tau.
    tightened: bins of half-width tau_prime, radius tau + 2*tau_prime.
    custom: explicit bin half-width and radius (empirical variants; no theory).
    """

    kind: str = "default"
    tau_prime: float | None = None
    bin_tau: float | None = None
    radius: float | None = None

    @classmethod
    def default(cls) -> "IntervalMode":
        return cls()

    @classmethod
    def tightened(cls, tau_prime: float) -> "IntervalMode":
        if not (tau_prime > 0):
            raise ValueError("tau_prime must be > 0")
        return cls(kind="tightened", tau_prime=tau_prime)

    @classmethod
    def custom(cls, bin_tau: float, radius: float) -> "IntervalMode":
        if not (bin_tau > 0 and radius > 0):
            raise ValueError("bin_tau and radius must be > 0")
        return cls(kind="custom", bin_tau=bin_tau, radius=radius)

    def bin_half_width(self, tau: float) -> float:
        if self.kind == "default":
            return tau
        if self.kind == "tightened":
            return self.tau_prime
        if self.kind == "custom":
            return self.bin_tau
        raise ValueError(f"unknown interval mode {self.kind!r}")

    def interval_radius(self, tau: float) -> float:
        if self.kind == "default":
            return 3 * tau
        if self.kind == "tightened":
            return tau + 2 * self.tau_prime
        if self.kind == "custom":
            return self.radius
        raise ValueError(f"unknown interval mode {self.kind!r}")


def bin_index(x, tau: float):
    """Unique k with x in (2*tau*k - tau, 2*tau*k + tau]."""
    if not (tau > 0):
        raise ValueError(f"tau must be > 0, got {tau}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("bin_index requires finite inputs")
    k = np.ceil((x - tau) / (2 * tau))
    # guard against floating-point boundary misplacement
    k = np.where(x > 2 * tau * k + tau, k + 1, k)
    k = np.where(x <= 2 * tau * k - tau, k - 1, k)
    k = k.astype(np.int64)
    return int(k) if k.ndim == 0 else k


def stable_histogram(
    data, grid: BinGrid, epsilon: float, delta: float, rng: RngStream
) -> HistogramEstimate:
    """Noise occupied bins and zero any falling below the stability threshold.

    Empty bins are released as exactly 0 with no noise drawn; the sparse output
    therefore has at most n nonzero entries.
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("stable_histogram requires nonempty data")
    if not (epsilon > 0 and delta > 0):
        raise ValueError("stable_histogram requires epsilon > 0 and delta > 0")
    n = data.size
    ks, counts = np.unique(bin_index(data, grid.tau), return_counts=True)
    noise = _laplace(rng.generator(), 2 / (epsilon * n), ks.shape)
    released = counts / n + noise
    threshold = (2 / (epsilon * n)) * math.log(2 / delta) + 1 / n
    masses = {int(k): float(v) for k, v in zip(ks, released) if v >= threshold}
    return HistogramEstimate(grid=grid, masses=masses, mode="central-stable")


def randomized_histogram(data, grid: BinGrid, epsilon: float, rng: RngStream) -> HistogramEstimate:
    """Local-model histogram: one randomized-response bit per (datum, bin) at eps/2.

    Per-bin averages are debiased; the released masses may be negative or
    exceed 1, and every bin of the finite grid gets an entry.
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("randomized_histogram requires nonempty data")
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if grid.bound_B is None:
        raise ValueError("randomized_histogram requires a finite grid (bound_B set)")
    n = data.size
    ks = grid.index_set()
    pi = response_probability(epsilon / 2)
    true_bits = bin_index(data, grid.tau)[:, None] == ks[None, :]
    keep = rng.generator().random((n, ks.size)) < pi
    released_bits = np.where(keep, true_bits, ~true_bits)
    p_tilde = released_bits.mean(axis=0)
    debiased = (p_tilde - (1 - pi)) / (2 * pi - 1)
    masses = {int(k): float(v) for k, v in zip(ks, debiased)}
    return HistogramEstimate(grid=grid, masses=masses, mode="local-randomized")


def _argmax_bin(masses: dict[int, float]) -> int:
    # ties: smallest |k| wins, then smaller k
    return min(masses.items(), key=lambda kv: (-kv[1], abs(kv[0]), kv[0]))[0]


def projection_interval_central(
    data,
    tau: float,
    epsilon: float,
    delta: float,
    rng: RngStream,
    mode: IntervalMode = IntervalMode(),
) -> ProjectionInterval:
    """Private midpoint from the stable histogram's released-mass argmax."""
    half = mode.bin_half_width(tau)
    radius = mode.interval_radius(tau)
    hist = stable_histogram(data, BinGrid(half), epsilon, delta, rng)
    if not hist.masses:
        return ProjectionInterval(0.0, radius, histogram_failed=True)
    k_hat = _argmax_bin(hist.masses)
    return ProjectionInterval(2 * half * k_hat, radius, histogram_failed=False)


def projection_interval_local(
    data, tau: float, epsilon: float, bound_B: float, rng: RngStream
) -> ProjectionInterval:
    """Local-model midpoint over the finite grid; never fails."""
    if not (bound_B >= tau):
        raise ValueError(f"bound_B must be >= tau, got B={bound_B}, tau={tau}")
    hist = randomized_histogram(data, BinGrid(tau, bound_B), epsilon / 2, rng)
    k_hat = _argmax_bin(hist.masses)
    return ProjectionInterval(2 * tau * k_hat, 3 * tau, histogram_failed=False)
