"""Noisy Winsorized mean estimators: 1D/HD, central and local models, split variant."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .budget import PrivacyBudget, compose_advanced
from .histograms import (
    IntervalMode,
    ProjectionInterval,
    projection_interval_central,
    projection_interval_local,
)
from .mechanisms import _laplace
from .rng import RngStream


@dataclass(frozen=True)
class ConcentrationSpec:
    """Concentration inputs: log-Sobolev constant rho, failure budget gamma.

    marginal_rhos, when given, override rho with the largest per-coordinate
    constant when computing the radius (the clipping radius only needs the
    marginal constants; the operator norm can be far larger under dependence).
    """

    rho: float
    gamma: float
    marginal_rhos: Sequence[float] | None = None

    def __post_init__(self) -> None:
        if not (self.rho > 0):
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not (0 < self.gamma < 1):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")


@dataclass(frozen=True)
class MeanEstimate:
    value: np.ndarray
    intervals: tuple[ProjectionInterval, ...]
    clipped_count: int
    budget_spent: PrivacyBudget

    def to_json(self) -> str:
        return json.dumps(
            {
                "value": [float(v) for v in self.value],
                "clipped_count": self.clipped_count,
                "intervals": [iv.to_json_obj() for iv in self.intervals],
                "budget_spent": {
                    "epsilon": self.budget_spent.epsilon,
                    "delta": self.budget_spent.delta,
                    "varrho": self.budget_spent.varrho,
                },
            }
        )

    @property
    def histogram_failed(self) -> bool:
        return any(iv.histogram_failed for iv in self.intervals)


def concentration_radius(spec: ConcentrationSpec, n: int, d: int, T: int) -> float:
    """tau = sqrt(2 * rho* * ln(2 d n / gamma) / T); T = 1 is the item-level radius."""
    if n < 1 or d < 1 or T < 1:
        raise ValueError("n, d, T must be positive")
    rho_star = spec.rho if spec.marginal_rhos is None else max(spec.marginal_rhos)
    return math.sqrt(2 * rho_star * math.log(2 * d * n / spec.gamma) / T)


def winsorized_mean_1d_central(
    data,
    tau: float,
    budget: PrivacyBudget,
    rng: RngStream,
    mode: IntervalMode = IntervalMode(),
    interval: ProjectionInterval | None = None,
    add_noise: bool = True,
) -> MeanEstimate:
    """Clipped mean over a private projection interval plus Laplace noise.

    The interval is found at eps/2; the noise scale is 2R/((eps/2) n) for the
    actual radius R, which equals 12*tau/(n*eps) in the default mode. An
    interval may be injected for testing; noise can be disabled likewise.
    """
    data = np.asarray(data, dtype=float)
    n = data.size
    if n < 1:
        raise ValueError("winsorized_mean_1d_central requires nonempty data")
    eps = budget.epsilon
    if interval is None:
        interval = projection_interval_central(data, tau, eps / 2, budget.delta, rng.child(0), mode)
    clipped = np.clip(data, interval.lo, interval.hi)
    clipped_count = int(np.count_nonzero(clipped != data))
    scale = 2 * interval.radius / ((eps / 2) * n)
    noise = float(_laplace(rng.child(1).generator(), scale)) if add_noise else 0.0
    value = float(clipped.mean() + noise)
    return MeanEstimate(
        value=np.array([value]),
        intervals=(interval,),
        clipped_count=clipped_count,
        budget_spent=PrivacyBudget(eps, budget.delta),
    )


def winsorized_mean_hd_central(
    data,
    tau: float,
    budget: PrivacyBudget,
    rng: RngStream,
    mode: IntervalMode = IntervalMode(),
    add_noise: bool = True,
) -> MeanEstimate:
    """Per-column 1D estimator under advanced composition; total (eps, delta + varrho)-DP."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("winsorized_mean_hd_central expects an n x d matrix")
    budget.require_central()
    d = data.shape[1]
    sub = compose_advanced(d, budget)
    sub_budget = PrivacyBudget(sub.epsilon, sub.delta)
    parts = [
        winsorized_mean_1d_central(data[:, j], tau, sub_budget, rng.child(j), mode, add_noise=add_noise)
        for j in range(d)
    ]
    total_eps = sub.epsilon * math.sqrt(8 * d * math.log(1 / budget.varrho))
    return MeanEstimate(
        value=np.array([p.value[0] for p in parts]),
        intervals=tuple(p.intervals[0] for p in parts),
        clipped_count=sum(p.clipped_count for p in parts),
        budget_spent=PrivacyBudget(total_eps, d * sub.delta + budget.varrho),
    )


def winsorized_mean_1d_local(
    data,
    tau: float,
    epsilon: float,
    bound_B: float,
    rng: RngStream,
    add_noise: bool = True,
) -> MeanEstimate:
    """Local model: each item releases its clipped value plus Laplace(12*tau/eps).

    The estimate averages per-item releases, so the privacy noise variance
    shrinks as 1/n rather than 1/n^2.
    """
    data = np.asarray(data, dtype=float)
    n = data.size
    if n < 1:
        raise ValueError("winsorized_mean_1d_local requires nonempty data")
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    interval = projection_interval_local(data, tau, epsilon / 2, bound_B, rng.child(0))
    clipped = np.clip(data, interval.lo, interval.hi)
    clipped_count = int(np.count_nonzero(clipped != data))
    scale = 2 * interval.radius / (epsilon / 2)
    if add_noise:
        noise = _laplace(rng.child(1).generator(), scale, n)
        value = float((clipped + noise).mean())
    else:
        value = float(clipped.mean())
    return MeanEstimate(
        value=np.array([value]),
        intervals=(interval,),
        clipped_count=clipped_count,
        budget_spent=PrivacyBudget(epsilon, 0.0),
    )


def winsorized_mean_hd_local(
    data,
    tau: float,
    epsilon: float,
    varrho: float,
    bound_B: float,
    rng: RngStream,
    add_noise: bool = True,
) -> MeanEstimate:
    """Coordinate-wise local estimator; total (eps, varrho)-LDP."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("winsorized_mean_hd_local expects an n x d matrix")
    if not (0 < epsilon < 1):
        raise ValueError(f"local composed estimator requires epsilon in (0, 1), got {epsilon}")
    if not (0 < varrho < 1):
        raise ValueError(f"local composed estimator requires varrho in (0, 1), got {varrho}")
    d = data.shape[1]
    eps_prime = epsilon / math.sqrt(8 * d * math.log(1 / varrho))
    parts = [
        winsorized_mean_1d_local(data[:, j], tau, eps_prime, bound_B, rng.child(j), add_noise=add_noise)
        for j in range(d)
    ]
    total_eps = eps_prime * math.sqrt(8 * d * math.log(1 / varrho))
    return MeanEstimate(
        value=np.array([p.value[0] for p in parts]),
        intervals=tuple(p.intervals[0] for p in parts),
        clipped_count=sum(p.clipped_count for p in parts),
        budget_spent=PrivacyBudget(total_eps, 0.0, varrho),
    )


def winsorized_mean_split(
    data_Z,
    data_X,
    tau: float,
    budget: PrivacyBudget,
    rng: RngStream,
    mode: IntervalMode = IntervalMode(),
    add_noise: bool = True,
) -> MeanEstimate:
    """Sample-split estimator: intervals from Z only, clipped mean of X plus one noise vector."""
    data_Z = np.atleast_2d(np.asarray(data_Z, dtype=float).T).T
    data_X = np.atleast_2d(np.asarray(data_X, dtype=float).T).T
    if data_Z.shape != data_X.shape:
        raise ValueError(f"shape mismatch: Z {data_Z.shape} vs X {data_X.shape}")
    budget.require_central()
    n, d = data_X.shape
    sub = compose_advanced(d, budget)
    intervals = tuple(
        projection_interval_central(data_Z[:, j], tau, sub.epsilon / 2, sub.delta, rng.child(j), mode)
        for j in range(d)
    )
    lo = np.array([iv.lo for iv in intervals])
    hi = np.array([iv.hi for iv in intervals])
    clipped = np.clip(data_X, lo, hi)
    clipped_count = int(np.count_nonzero(clipped != data_X))
    value = clipped.mean(axis=0)
    if add_noise:
        scales = np.array([2 * iv.radius / ((budget.epsilon / 2) * n) for iv in intervals])
        value = value + scales * _laplace(rng.child(d).generator(), 1.0, d)
    total_eps = sub.epsilon * math.sqrt(8 * d * math.log(1 / budget.varrho))
    return MeanEstimate(
        value=value,
        intervals=intervals,
        clipped_count=clipped_count,
        budget_spent=PrivacyBudget(total_eps, d * sub.delta + budget.varrho),
    )
