"""User-level reductions: per-user averaging, private user-level means,
random-effects location, and longitudinal linear regression."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .budget import PrivacyBudget
from .histograms import IntervalMode
from .means import (
    ConcentrationSpec,
    MeanEstimate,
    concentration_radius,
    winsorized_mean_hd_central,
    winsorized_mean_hd_local,
)
from .rng import RngStream

_COND_LIMIT = 1e12


class SingularDesignError(ValueError):
    pass


@dataclass(frozen=True)
class UserDataMatrix:
    """n_users * T x d matrix in user-major row order; user u owns rows [uT, (u+1)T)."""

    n_users: int
    T: int
    d: int
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.shape != (self.n_users * self.T, self.d):
            raise ValueError(
                f"data shape {data.shape} does not match (n_users*T, d) = "
                f"({self.n_users * self.T}, {self.d})"
            )
        object.__setattr__(self, "data", data)

    def user_block(self, u: int) -> np.ndarray:
        return self.data[u * self.T : (u + 1) * self.T]


@dataclass(frozen=True)
class RegressionDataset:
    """User-major longitudinal regression data; users are independent blocks."""

    n_users: int
    T: int
    design: np.ndarray  # n_users*T x p
    response: np.ndarray  # n_users*T
    noise_blocks: tuple[np.ndarray, ...] | None = None  # per-user T x T covariances

    def __post_init__(self) -> None:
        design = np.asarray(self.design, dtype=float)
        response = np.asarray(self.response, dtype=float)
        if design.shape[0] != self.n_users * self.T or response.shape != (design.shape[0],):
            raise ValueError("design/response shapes inconsistent with n_users and T")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)
        if self.noise_blocks is not None:
            blocks = tuple(np.asarray(b, dtype=float) for b in self.noise_blocks)
            if len(blocks) != self.n_users or any(b.shape != (self.T, self.T) for b in blocks):
                raise ValueError("noise_blocks must be n_users matrices of shape T x T")
            object.__setattr__(self, "noise_blocks", blocks)

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def user_design(self, u: int) -> np.ndarray:
        return self.design[u * self.T : (u + 1) * self.T]

    def user_response(self, u: int) -> np.ndarray:
        return self.response[u * self.T : (u + 1) * self.T]


def load_regression_csv(path) -> RegressionDataset:
    """Read columns (user_id, t, x_1..x_p, y); rows sorted by (user_id, t)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    if header[0] != "user_id" or header[1] != "t" or header[-1] != "y":
        raise ValueError(f"unexpected regression CSV header: {header}")
    p = len(header) - 3
    if p < 1:
        raise ValueError("regression CSV needs at least one x column")
    parsed = sorted(
        ((row[0], float(row[1]), [float(v) for v in row[2:-1]], float(row[-1])) for row in rows),
        key=lambda r: (r[0], r[1]),
    )
    user_ids = sorted({r[0] for r in parsed})
    counts = {uid: sum(1 for r in parsed if r[0] == uid) for uid in user_ids}
    T = counts[user_ids[0]]
    if any(c != T for c in counts.values()):
        raise ValueError("all users must contribute the same number of observations")
    design = np.array([r[2] for r in parsed])
    response = np.array([r[3] for r in parsed])
    return RegressionDataset(n_users=len(user_ids), T=T, design=design, response=response)


def load_group_labels(path) -> dict[str, str]:
    """Read (user_id, group_id) pairs."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["user_id", "group_id"]:
            raise ValueError(f"unexpected group CSV header: {header}")
        return {row[0]: row[1] for row in reader if row}


def user_averages(X: UserDataMatrix) -> np.ndarray:
    """Row u = mean of user u's T rows."""
    return X.data.reshape(X.n_users, X.T, X.d).mean(axis=1)


def user_level_mean_central(
    X: UserDataMatrix,
    spec: ConcentrationSpec,
    budget: PrivacyBudget,
    rng: RngStream,
    mode: IntervalMode = IntervalMode(),
) -> MeanEstimate:
    """HD Winsorized mean on user averages; user-level private by construction."""
    tau = concentration_radius(spec, X.n_users, X.d, X.T)
    return winsorized_mean_hd_central(user_averages(X), tau, budget, rng, mode)


def user_level_mean_local(
    X: UserDataMatrix,
    spec: ConcentrationSpec,
    epsilon: float,
    varrho: float,
    bound_B: float,
    rng: RngStream,
) -> MeanEstimate:
    tau = concentration_radius(spec, X.n_users, X.d, X.T)
    return winsorized_mean_hd_local(user_averages(X), tau, epsilon, varrho, bound_B, rng)


def _solve_guarded(normal: np.ndarray, rhs: np.ndarray, u: int, what: str) -> np.ndarray:
    if np.linalg.cond(normal) > _COND_LIMIT:
        raise SingularDesignError(f"{what} normal matrix for user {u} is singular (cond > 1e12)")
    return np.linalg.solve(normal, rhs)


def per_user_ols(dataset: RegressionDataset, u: int) -> np.ndarray:
    X_u = dataset.user_design(u)
    Y_u = dataset.user_response(u)
    return _solve_guarded(X_u.T @ X_u, X_u.T @ Y_u, u, "OLS")


def per_user_gls(dataset: RegressionDataset, u: int) -> np.ndarray:
    if dataset.noise_blocks is None:
        raise ValueError("per_user_gls requires noise_blocks")
    X_u = dataset.user_design(u)
    Y_u = dataset.user_response(u)
    W = np.linalg.solve(dataset.noise_blocks[u], np.column_stack([X_u, Y_u]))
    WX, WY = W[:, :-1], W[:, -1]
    return _solve_guarded(X_u.T @ WX, X_u.T @ WY, u, "GLS")


@dataclass(frozen=True)
class GlsCovariances:
    avg_ols: np.ndarray  # Cov of the averaged per-user OLS estimator
    avg_gls: np.ndarray  # Cov of the averaged per-user GLS estimator
    pooled_ols: np.ndarray  # Cov of pooled OLS (sandwich form)
    pooled_gls: np.ndarray  # Cov of pooled weighted OLS


def gls_covariances(dataset: RegressionDataset) -> GlsCovariances:
    """Closed-form covariances of the four classical longitudinal estimators."""
    if dataset.noise_blocks is None:
        raise ValueError("gls_covariances requires noise_blocks")
    n, p = dataset.n_users, dataset.p
    sum_A = np.zeros((p, p))
    sum_B = np.zeros((p, p))
    sum_C = np.zeros((p, p))
    avg_ols = np.zeros((p, p))
    avg_gls = np.zeros((p, p))
    for u in range(n):
        X_u = dataset.user_design(u)
        S_u = dataset.noise_blocks[u]
        A = X_u.T @ X_u
        B = X_u.T @ S_u @ X_u
        C = X_u.T @ np.linalg.solve(S_u, X_u)
        if np.linalg.cond(A) > _COND_LIMIT or np.linalg.cond(C) > _COND_LIMIT:
            raise SingularDesignError(f"singular design for user {u}")
        A_inv = np.linalg.inv(A)
        sum_A += A
        sum_B += B
        sum_C += C
        avg_ols += A_inv @ B @ A_inv
        avg_gls += np.linalg.inv(C)
    sum_A_inv = np.linalg.inv(sum_A)
    return GlsCovariances(
        avg_ols=avg_ols / n**2,
        avg_gls=avg_gls / n**2,
        pooled_ols=sum_A_inv @ sum_B @ sum_A_inv,
        pooled_gls=np.linalg.inv(sum_C),
    )


def longitudinal_radius(theta: float, vartheta: float, sigma2: float, p: int, n: int, T: int, gamma: float) -> float:
    return math.sqrt(2 * (vartheta / theta**2) * sigma2 * math.log(2 * p * n / gamma) / T)


def private_longitudinal_regression(
    dataset: RegressionDataset,
    bounds: tuple[float, float, float],
    budget: PrivacyBudget,
    rng: RngStream,
    model: str = "central",
    bound_B: float | None = None,
    gamma: float = 0.1,
    mode: IntervalMode = IntervalMode(),
) -> MeanEstimate:
    """Stack per-user OLS estimates and release their HD Winsorized mean.

    bounds = (theta, vartheta, sigma2): eigenvalue bounds on M_u = X_u'X_u/T
    (validated against the designs) and the noise-variance bound (trusted).
    """
    theta, vartheta, sigma2 = bounds
    if not (0 < theta <= vartheta and sigma2 > 0):
        raise ValueError("bounds must satisfy 0 < theta <= vartheta and sigma2 > 0")
    n, T, p = dataset.n_users, dataset.T, dataset.p
    tol = 1e-9
    for u in range(n):
        X_u = dataset.user_design(u)
        eigs = np.linalg.eigvalsh(X_u.T @ X_u / T)
        if eigs[0] < theta - tol or eigs[-1] > vartheta + tol:
            raise ValueError(
                f"user {u}: eigenvalues of M_u in [{eigs[0]:.6g}, {eigs[-1]:.6g}] "
                f"violate bounds [theta={theta}, vartheta={vartheta}]"
            )
    betas = np.array([per_user_ols(dataset, u) for u in range(n)])
    tau = longitudinal_radius(theta, vartheta, sigma2, p, n, T, gamma)
    if model == "central":
        return winsorized_mean_hd_central(betas, tau, budget, rng, mode)
    if model == "local":
        if bound_B is None:
            raise ValueError("local model requires bound_B")
        return winsorized_mean_hd_local(betas, tau, budget.epsilon, budget.varrho, bound_B, rng)
    raise ValueError(f"unknown model {model!r}")


def random_effects_rho(sigma_U2: float, group_sizes, T: int, sigma2: float) -> float:
    """rho = max_g (sigma_U^2 * n_g * T + sigma^2)."""
    return max(sigma_U2 * n_g * T + sigma2 for n_g in group_sizes)


def random_effects_location(
    Y: UserDataMatrix,
    groups,
    spec: ConcentrationSpec,
    budget: PrivacyBudget,
    rng: RngStream,
    model: str = "central",
    bound_B: float | None = None,
    mode: IntervalMode = IntervalMode(),
) -> MeanEstimate:
    """User-level mean under the random-effects model.

    The group labels never enter the estimator; they only matter for the
    caller-supplied rho inside spec (see random_effects_rho).
    """
    if len(groups) != Y.n_users:
        raise ValueError("group labels must partition the users")
    if model == "central":
        return user_level_mean_central(Y, spec, budget, rng, mode)
    if model == "local":
        if bound_B is None:
            raise ValueError("local model requires bound_B")
        return user_level_mean_local(Y, spec, budget.epsilon, budget.varrho, bound_B, rng)
    raise ValueError(f"unknown model {model!r}")
