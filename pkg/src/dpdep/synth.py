"""Structured Gaussian data generation: covariance specs, log-Sobolev constants
(operator norms from implicit matvecs), and model-specific samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import matmul_toeplitz
from scipy.signal import lfilter
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .nonparam import FixedDesign
from .rng import RngStream
from .userlevel import RegressionDataset, UserDataMatrix

_JITTER = 1e-10


class PowerIterationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Structured covariance model; large matrices are never assembled densely."""

    kind: str
    dim: int
    decay: float | None = None
    variance: float | None = None
    covariance: float | None = None
    blocks: tuple["CovarianceSpec", ...] | None = None
    sigma_U2: float | None = None
    group_sizes: tuple[int, ...] | None = None
    T: int | None = None
    per_user: "CovarianceSpec | None" = None
    matrix: np.ndarray | None = None

    @classmethod
    def identity(cls, dim: int) -> "CovarianceSpec":
        return cls(kind="identity", dim=dim)

    @classmethod
    def toeplitz(cls, decay: float, dim: int) -> "CovarianceSpec":
        if not (0 <= decay < 1):
            raise ValueError(f"toeplitz decay must be in [0, 1), got {decay}")
        return cls(kind="toeplitz", dim=dim, decay=decay)

    @classmethod
    def equicorrelated(cls, variance: float, covariance: float, dim: int) -> "CovarianceSpec":
        if not (variance > 0):
            raise ValueError(f"variance must be > 0, got {variance}")
        lo = -variance / (dim - 1) if dim > 1 else 0.0
        if not (lo <= covariance <= variance):
            raise ValueError(f"equicorrelated requires c in [{lo}, {variance}], got {covariance}")
        return cls(kind="equicorrelated", dim=dim, variance=variance, covariance=covariance)

    @classmethod
    def block_diagonal(cls, blocks: Sequence["CovarianceSpec"]) -> "CovarianceSpec":
        blocks = tuple(blocks)
        return cls(kind="block_diagonal", dim=sum(b.dim for b in blocks), blocks=blocks)

    @classmethod
    def random_effects(
        cls, sigma_U2: float, group_sizes: Sequence[int], T: int, per_user: "CovarianceSpec"
    ) -> "CovarianceSpec":
        if sigma_U2 < 0:
            raise ValueError(f"sigma_U2 must be >= 0, got {sigma_U2}")
        if per_user.dim != T:
            raise ValueError("per_user spec dimension must equal T")
        group_sizes = tuple(int(g) for g in group_sizes)
        return cls(
            kind="random_effects",
            dim=sum(group_sizes) * T,
            sigma_U2=sigma_U2,
            group_sizes=group_sizes,
            T=T,
            per_user=per_user,
        )

    @classmethod
    def explicit(cls, matrix) -> "CovarianceSpec":
        matrix = np.asarray(matrix, dtype=float)
        matrix = (matrix + matrix.T) / 2
        if np.linalg.eigvalsh(matrix)[0] < -1e-8:
            raise ValueError("explicit covariance is not positive semi-definite")
        return cls(kind="explicit", dim=matrix.shape[0], matrix=matrix)


@dataclass(frozen=True)
class DependenceInfo:
    rho: float
    marginal_rhos: np.ndarray


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    """Dense realization; intended for moderate dimensions."""
    if spec.kind == "identity":
        return np.eye(spec.dim)
    if spec.kind == "toeplitz":
        idx = np.arange(spec.dim)
        return spec.decay ** np.abs(idx[:, None] - idx[None, :])
    if spec.kind == "equicorrelated":
        out = np.full((spec.dim, spec.dim), spec.covariance)
        np.fill_diagonal(out, spec.variance)
        return out
    if spec.kind == "block_diagonal":
        out = np.zeros((spec.dim, spec.dim))
        at = 0
        for b in spec.blocks:
            out[at : at + b.dim, at : at + b.dim] = build_covariance(b)
            at += b.dim
        return out
    if spec.kind == "random_effects":
        per_user = build_covariance(spec.per_user)
        out = np.zeros((spec.dim, spec.dim))
        at = 0
        for n_g in spec.group_sizes:
            size = n_g * spec.T
            out[at : at + size, at : at + size] += spec.sigma_U2
            at += size
        n_users = sum(spec.group_sizes)
        for u in range(n_users):
            lo = u * spec.T
            out[lo : lo + spec.T, lo : lo + spec.T] += per_user
        return out
    if spec.kind == "explicit":
        return spec.matrix.copy()
    raise ValueError(f"unknown covariance kind {spec.kind!r}")


def covariance_matvec(spec: CovarianceSpec, x: np.ndarray) -> np.ndarray:
    if spec.kind == "identity":
        return x
    if spec.kind == "toeplitz":
        col = spec.decay ** np.arange(spec.dim)
        return matmul_toeplitz((col, col), x)
    if spec.kind == "equicorrelated":
        return (spec.variance - spec.covariance) * x + spec.covariance * x.sum()
    if spec.kind == "block_diagonal":
        parts = []
        at = 0
        for b in spec.blocks:
            parts.append(covariance_matvec(b, x[at : at + b.dim]))
            at += b.dim
        return np.concatenate(parts)
    if spec.kind == "random_effects":
        out = np.zeros_like(x)
        at = 0
        for n_g in spec.group_sizes:
            size = n_g * spec.T
            out[at : at + size] = spec.sigma_U2 * x[at : at + size].sum()
            at += size
        n_users = sum(spec.group_sizes)
        for u in range(n_users):
            lo = u * spec.T
            out[lo : lo + spec.T] += covariance_matvec(spec.per_user, x[lo : lo + spec.T])
        return out
    if spec.kind == "explicit":
        return spec.matrix @ x
    raise ValueError(f"unknown covariance kind {spec.kind!r}")


def covariance_diagonal(spec: CovarianceSpec) -> np.ndarray:
    if spec.kind == "identity":
        return np.ones(spec.dim)
    if spec.kind == "toeplitz":
        return np.ones(spec.dim)
    if spec.kind == "equicorrelated":
        return np.full(spec.dim, spec.variance)
    if spec.kind == "block_diagonal":
        return np.concatenate([covariance_diagonal(b) for b in spec.blocks])
    if spec.kind == "random_effects":
        n_users = sum(spec.group_sizes)
        return spec.sigma_U2 + np.tile(covariance_diagonal(spec.per_user), n_users)
    if spec.kind == "explicit":
        return np.diag(spec.matrix).copy()
    raise ValueError(f"unknown covariance kind {spec.kind!r}")


def log_sobolev_constant(
    spec: CovarianceSpec, tol: float = 1e-9, max_iter: int = 10_000
) -> DependenceInfo:
    """rho = ||Sigma||_op from the implicit matvec.

    Lanczos iteration with a fixed start vector; plain power iteration stalls
    on Toeplitz spectra whose top eigengap shrinks like 1/dim^2.
    """
    diag = covariance_diagonal(spec)
    if spec.dim == 1:
        rho = float(covariance_matvec(spec, np.ones(1))[0])
        return DependenceInfo(rho=rho, marginal_rhos=diag)
    gen = np.random.Generator(np.random.Philox(key=0xD1A60))
    v0 = gen.standard_normal(spec.dim)
    if not covariance_matvec(spec, v0).any():
        return DependenceInfo(rho=0.0, marginal_rhos=diag)
    op = LinearOperator(
        (spec.dim, spec.dim),
        matvec=lambda x: covariance_matvec(spec, np.asarray(x, dtype=float).reshape(-1)),
        dtype=float,
    )
    try:
        # a wide Krylov subspace keeps restarts cheap on clustered spectra
        vals = eigsh(
            op, k=1, which="LA", v0=v0, tol=tol, maxiter=max_iter,
            ncv=min(spec.dim, 50), return_eigenvectors=False,
        )
    except ArpackNoConvergence as exc:
        raise PowerIterationError(f"eigenvalue iteration did not converge in {max_iter} restarts") from exc
    return DependenceInfo(rho=float(vals[0]), marginal_rhos=diag)


def _cholesky_with_jitter(matrix: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(matrix + _JITTER * np.eye(matrix.shape[0]))


def _ar1_path(gen: np.random.Generator, decay: float, shape: tuple[int, ...]) -> np.ndarray:
    """Stationary AR(1) with unit marginal variance realizes the decay-q Toeplitz covariance."""
    z = gen.standard_normal(shape)
    e = z * math.sqrt(1 - decay**2)
    e[..., 0] = z[..., 0]
    return lfilter([1.0], [1.0, -decay], e, axis=-1)


def _sample(gen: np.random.Generator, spec: CovarianceSpec) -> np.ndarray:
    if spec.kind == "identity":
        return gen.standard_normal(spec.dim)
    if spec.kind == "toeplitz":
        return _ar1_path(gen, spec.decay, (spec.dim,))
    if spec.kind == "equicorrelated":
        v, c = spec.variance, spec.covariance
        if c >= 0:
            shared = math.sqrt(c) * gen.standard_normal()
            return shared + math.sqrt(v - c) * gen.standard_normal(spec.dim)
        L = _cholesky_with_jitter(build_covariance(spec))
        return L @ gen.standard_normal(spec.dim)
    if spec.kind == "block_diagonal":
        return np.concatenate([_sample(gen, b) for b in spec.blocks])
    if spec.kind == "random_effects":
        effects = math.sqrt(spec.sigma_U2) * gen.standard_normal(len(spec.group_sizes))
        group_shift = np.repeat(effects, np.array(spec.group_sizes) * spec.T)
        n_users = sum(spec.group_sizes)
        noise = np.concatenate([_sample(gen, spec.per_user) for _ in range(n_users)])
        return group_shift + noise
    if spec.kind == "explicit":
        if not spec.matrix.any():
            return np.zeros(spec.dim)
        return _cholesky_with_jitter(spec.matrix) @ gen.standard_normal(spec.dim)
    raise ValueError(f"unknown covariance kind {spec.kind!r}")


def sample_gaussian(mean, spec: CovarianceSpec, rng: RngStream) -> np.ndarray:
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (spec.dim,))
    return mean + _sample(rng.generator(), spec)


def sample_user_level(
    mu: float, per_user: CovarianceSpec, n_users: int, rng: RngStream
) -> UserDataMatrix:
    """n independent users, each a draw from per_user; vectorized for the common kinds."""
    T = per_user.dim
    gen = rng.generator()
    if per_user.kind == "identity":
        data = mu + gen.standard_normal((n_users, T))
    elif per_user.kind == "toeplitz":
        data = mu + _ar1_path(gen, per_user.decay, (n_users, T))
    else:
        data = mu + np.stack([_sample(gen, per_user) for _ in range(n_users)])
    return UserDataMatrix(n_users=n_users, T=T, d=1, data=data.reshape(-1, 1))


def sample_random_effects(
    mu: float,
    sigma_U2: float,
    group_sizes: Sequence[int],
    T: int,
    per_user: CovarianceSpec,
    rng: RngStream,
) -> tuple[UserDataMatrix, np.ndarray]:
    """Direct simulation of Y_gut = mu + U_g + eps_ut; returns data and group labels.

    Group effects come from one substream and per-user noise from another, so
    sigma_U2 = 0 reproduces plain independent per-user sampling seed-for-seed.
    """
    group_sizes = [int(g) for g in group_sizes]
    n_users = sum(group_sizes)
    effects = math.sqrt(sigma_U2) * rng.child(0).generator().standard_normal(len(group_sizes))
    base = sample_user_level(mu, per_user, n_users, rng.child(1))
    labels = np.repeat(np.arange(len(group_sizes)), group_sizes)
    data = base.data + np.repeat(effects, np.array(group_sizes) * T)[:, None]
    return UserDataMatrix(n_users=n_users, T=T, d=1, data=data), labels


def sample_regression(
    beta,
    designs: Sequence[np.ndarray],
    noise_specs: Sequence[CovarianceSpec],
    rng: RngStream,
) -> RegressionDataset:
    """Y_u = X_u beta + eps_u with independent per-user noise blocks."""
    beta = np.asarray(beta, dtype=float)
    if len(designs) != len(noise_specs):
        raise ValueError("need one noise spec per design")
    T = designs[0].shape[0]
    gen = rng.generator()
    design = np.vstack(designs)
    noise = np.concatenate([_sample(gen, s) for s in noise_specs])
    response = design @ beta + noise
    return RegressionDataset(
        n_users=len(designs),
        T=T,
        design=design,
        response=response,
        noise_blocks=tuple(build_covariance(s) for s in noise_specs),
    )


def sample_fixed_design(
    f: Callable[[np.ndarray], np.ndarray],
    n: int,
    noise_spec: CovarianceSpec | None,
    rng: RngStream,
) -> FixedDesign:
    x = np.arange(n) / n
    responses = np.asarray(f(x), dtype=float)
    if noise_spec is not None:
        if noise_spec.dim != n:
            raise ValueError("noise spec dimension must equal n")
        responses = responses + _sample(rng.generator(), noise_spec)
    return FixedDesign(n=n, responses=responses)
