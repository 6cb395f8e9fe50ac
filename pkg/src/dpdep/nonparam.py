"""Priestley-Chao kernel regression on a fixed equidistant design and its
private pointwise release through the Winsorized mean."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .budget import PrivacyBudget
from .histograms import IntervalMode
from .means import MeanEstimate, winsorized_mean_1d_central, winsorized_mean_1d_local
from .rng import RngStream


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    evaluate: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    lipschitz: float
    first_abs_moment: float
    is_subgaussian_density: bool = False


def gaussian_kernel() -> KernelSpec:
    """Standard Gaussian density: ||K||_inf = 1/sqrt(2 pi), L_K = 1/sqrt(2 pi e), mu_1 = sqrt(2/pi)."""
    return KernelSpec(
        evaluate=lambda u: np.exp(-0.5 * np.square(u)) / math.sqrt(2 * math.pi),
        sup_norm=1 / math.sqrt(2 * math.pi),
        lipschitz=1 / math.sqrt(2 * math.pi * math.e),
        first_abs_moment=math.sqrt(2 / math.pi),
        is_subgaussian_density=True,
    )


@dataclass(frozen=True)
class FixedDesign:
    """Equidistant design x_i = i/n for 0 <= i < n with responses Y."""

    n: int
    responses: np.ndarray

    def __post_init__(self) -> None:
        responses = np.asarray(self.responses, dtype=float)
        if responses.shape != (self.n,):
            raise ValueError(f"responses must have shape ({self.n},), got {responses.shape}")
        object.__setattr__(self, "responses", responses)

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n) / self.n


def contribution_vector(design: FixedDesign, kernel: KernelSpec, b: float, x: float) -> np.ndarray:
    """Per-point contributions Y_i * (1/b) * K((x_i - x)/b); their mean is the estimator."""
    if not (b > 0):
        raise ValueError(f"bandwidth must be > 0, got {b}")
    return design.responses * kernel.evaluate((design.points - x) / b) / b


def priestley_chao(design: FixedDesign, kernel: KernelSpec, b: float, x: float) -> float:
    return float(contribution_vector(design, kernel, b, x).mean())


def select_bandwidth(n: int, sigma_max: float, epsilon: float, model: str = "central") -> float:
    """Rate-optimal bandwidth; proportionality constants fixed to 1."""
    if n < 1 or not (sigma_max > 0) or not (epsilon > 0):
        raise ValueError("n, sigma_max, epsilon must be positive")
    statistical = (sigma_max**2 / n) ** (1 / 3)
    if model == "central":
        privacy = math.sqrt(sigma_max / (n * epsilon))
    elif model == "local":
        privacy = math.sqrt(sigma_max / (math.sqrt(n) * epsilon))
    else:
        raise ValueError(f"unknown model {model!r}")
    return max(statistical, privacy)


def regression_radius(
    kernel: KernelSpec,
    b: float,
    n: int,
    gamma: float,
    L_f: float = 1.0,
    f_sup: float = 1.0,
    sigma2_max: float = 1.0,
) -> float:
    """Concentration radius of the contribution vector around f(x)."""
    return b * (L_f * kernel.first_abs_moment + f_sup) + (
        L_f * kernel.sup_norm
        + f_sup * kernel.lipschitz
        + math.sqrt(2 * sigma2_max * kernel.sup_norm * math.log(2 * n / gamma))
    ) / b


def interior_band(b: float) -> float:
    """zeta = b * sqrt(2 ln(2/b)); private estimates are valid on [zeta, 1 - zeta]."""
    return b * math.sqrt(2 * math.log(2 / b))


def private_regression_point(
    design: FixedDesign,
    kernel: KernelSpec,
    b: float,
    x: float,
    budget: PrivacyBudget,
    rng: RngStream,
    model: str = "central",
    bound_B: float | None = None,
    gamma: float = 0.1,
    L_f: float = 1.0,
    f_sup: float = 1.0,
    sigma2_max: float = 1.0,
    mode: IntervalMode = IntervalMode(),
) -> MeanEstimate:
    """Winsorized-mean release of the contribution vector at one point x.

    The radius formula mixes b and 1/b terms and is only meaningful for b <= 1,
    which is required here.
    """
    if not (0 < b <= 1):
        raise ValueError(f"bandwidth must be in (0, 1], got {b}")
    zeta = interior_band(b)
    if x < zeta or x > 1 - zeta:
        raise BoundaryError(f"x={x} outside the interior band [{zeta:.6g}, {1 - zeta:.6g}]")
    contribs = contribution_vector(design, kernel, b, x)
    tau = regression_radius(kernel, b, design.n, gamma, L_f, f_sup, sigma2_max)
    if model == "central":
        return winsorized_mean_1d_central(contribs, tau, budget, rng, mode)
    if model == "local":
        if bound_B is None:
            raise ValueError("local model requires bound_B")
        return winsorized_mean_1d_local(contribs, tau, budget.epsilon, bound_B, rng)
    raise ValueError(f"unknown model {model!r}")


def write_curve_csv(path, rows) -> None:
    """rows: iterable of (x, MeanEstimate); columns match the documented layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "estimate", "interval_lo", "interval_hi", "clipped_count"])
        for x, est in rows:
            iv = est.intervals[0]
            writer.writerow([x, est.value[0], iv.lo, iv.hi, est.clipped_count])
