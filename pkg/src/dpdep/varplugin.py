"""Private plug-in variance estimation: bisection search and adaptive
CoinPress-style refinement, each co-refining the midpoint estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .budget import PrivacyBudget
from .mechanisms import _laplace
from .rng import RngStream


@dataclass(frozen=True)
class VarianceSearchState:
    sigma2_lo: float
    sigma2_hi: float
    midpoint: float
    iterations_used: int
    # per-iteration (sigma2_hi, coverage-or-z, midpoint) for harness logging
    history: tuple[tuple[float, float, float], ...] = field(default_factory=tuple)
    flagged: bool = False


def _n_iter(sigma2_min: float, sigma2_max: float) -> int:
    if not (0 < sigma2_min < sigma2_max):
        raise ValueError(f"need 0 < sigma2_min < sigma2_max, got ({sigma2_min}, {sigma2_max})")
    return math.ceil(math.log2(sigma2_max / sigma2_min))


def _eps_prime(budget: PrivacyBudget, n_iter: int) -> float:
    # 16 under the root: each iteration spends two sub-mechanisms
    if not (0 < budget.varrho < 1):
        raise ValueError(f"variance search requires varrho in (0, 1), got {budget.varrho}")
    return budget.epsilon / math.sqrt(16 * n_iter * math.log(1 / budget.varrho))


def coverage(data, epsilon: float, sigma: float, m_hat: float, rng: RngStream) -> float:
    """Empirical fraction of data in [m_hat +- sqrt(2) sigma] plus Lap(2/(n eps))."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("coverage requires nonempty data")
    if not (sigma > 0):
        raise ValueError(f"sigma must be > 0, got {sigma}")
    tau_hat = math.sqrt(2) * sigma
    p_hat = np.mean(np.abs(data - m_hat) <= tau_hat)
    return float(p_hat + _laplace(rng.generator(), 2 / (data.size * epsilon)))


def refine_midpoint(
    data, epsilon: float, sigma: float, m_hat: float, rng: RngStream, add_noise: bool = True
) -> float:
    """Clipped mean over [m_hat +- sqrt(2) sigma] plus Lap(2 tau_hat / (n eps))."""
    data = np.asarray(data, dtype=float)
    if not (sigma > 0):
        raise ValueError(f"sigma must be > 0, got {sigma}")
    tau_hat = math.sqrt(2) * sigma
    clipped = np.clip(data, m_hat - tau_hat, m_hat + tau_hat)
    noise = float(_laplace(rng.generator(), 2 * tau_hat / (data.size * epsilon))) if add_noise else 0.0
    return float(clipped.mean() + noise)


def variance_bisection(
    data,
    budget: PrivacyBudget,
    bounds: tuple[float, float],
    m_hat: float,
    gamma: float,
    rng: RngStream,
) -> tuple[float, VarianceSearchState]:
    """Halve sigma2_max while the refined-midpoint interval keeps high coverage.

    The midpoint is refined before each coverage test; otherwise a rough
    initial m_hat whose interval misses the data entirely would lock the
    search at sigma2_max. Conservative-high by design.
    """
    sigma2_min, sigma2_max = bounds
    n_iter = _n_iter(sigma2_min, sigma2_max)
    eps_prime = _eps_prime(budget, n_iter)
    history = []
    iterations = 0
    while iterations < n_iter:
        sigma = math.sqrt(sigma2_max)
        m_hat = refine_midpoint(data, eps_prime, sigma, m_hat, rng.child(2 * iterations))
        cov = coverage(data, eps_prime, sigma, m_hat, rng.child(2 * iterations + 1))
        history.append((sigma2_max, cov, m_hat))
        if cov < 1 - gamma:
            break
        sigma2_max /= 2
        iterations += 1
    state = VarianceSearchState(
        sigma2_lo=sigma2_min,
        sigma2_hi=sigma2_max,
        midpoint=m_hat,
        iterations_used=iterations,
        history=tuple(history),
    )
    return sigma2_max, state


def refine_variance(
    data,
    epsilon: float,
    sigma: float,
    m_hat: float,
    gamma: float,
    rng: RngStream,
    add_noise: bool = True,
) -> tuple[float, float]:
    """One CoinPress round on residuals standardized by the current sigma.

    Returns (sigma_updated, z * sigma_updated^2).
    """
    data = np.asarray(data, dtype=float)
    if not (sigma > 0):
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not (0 < gamma < 1):
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    n = data.size
    beta = math.sqrt(1 + 2 * math.sqrt(math.log(1 / gamma)) + 2 * math.log(1 / gamma))
    w = np.clip((data - m_hat) / sigma, -beta, beta)
    noise = float(_laplace(rng.generator(), 2 * beta**2 / (n * epsilon))) if add_noise else 0.0
    z = max(0.0, float(np.dot(w, w)) / n + noise)
    sigma_new = sigma * math.sqrt(z + math.sqrt(1 / n) + 1 / (2 * n))
    return sigma_new, z * sigma_new**2


def adaptive_coinpress(
    data,
    budget: PrivacyBudget,
    bounds: tuple[float, float],
    m_hat: float,
    gamma: float,
    rng: RngStream,
) -> tuple[float, VarianceSearchState]:
    """N_iter rounds alternating midpoint refinement and variance refinement.

    If the final round releases z = 0 the variance estimate collapses to 0;
    in that case sigma2_min is returned and the state is flagged.
    """
    sigma2_min, sigma2_max = bounds
    n_iter = _n_iter(sigma2_min, sigma2_max)
    eps_prime = _eps_prime(budget, n_iter)
    sigma = math.sqrt(sigma2_max)
    history = []
    for t in range(n_iter):
        # a released z of 0 can zero sigma2_max mid-run; the search never
        # trusts values below sigma2_min, so floor the clipping width there
        width = math.sqrt(max(sigma2_max, sigma2_min))
        m_hat = refine_midpoint(data, eps_prime, width, m_hat, rng.child(2 * t))
        sigma, sigma2_max = refine_variance(data, eps_prime, sigma, m_hat, gamma, rng.child(2 * t + 1))
        history.append((sigma2_max, sigma, m_hat))
    flagged = sigma2_max == 0.0
    result = max(sigma2_max, sigma2_min) if flagged else sigma2_max
    state = VarianceSearchState(
        sigma2_lo=sigma2_min,
        sigma2_hi=result,
        midpoint=m_hat,
        iterations_used=n_iter,
        history=tuple(history),
        flagged=flagged,
    )
    return result, state
