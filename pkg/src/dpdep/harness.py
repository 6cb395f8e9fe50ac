"""Monte-Carlo experiment runner: estimator sweeps over n, T, epsilon and
dependence structures, with deterministic parallel replication."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .budget import PrivacyBudget
from .histograms import IntervalMode
from .means import (
    ConcentrationSpec,
    concentration_radius,
    winsorized_mean_1d_central,
    winsorized_mean_1d_local,
    winsorized_mean_hd_central,
    winsorized_mean_hd_local,
    winsorized_mean_split,
)
from .nonparam import gaussian_kernel, private_regression_point, select_bandwidth
from .rng import RngStream
from .synth import (
    CovarianceSpec,
    log_sobolev_constant,
    sample_gaussian,
    sample_random_effects,
    sample_regression,
    sample_fixed_design,
    sample_user_level,
)
from .userlevel import (
    private_longitudinal_regression,
    random_effects_rho,
    user_level_mean_central,
    user_level_mean_local,
)
from .varplugin import adaptive_coinpress, variance_bisection

ESTIMATORS = (
    "nonprivate_mean",
    "central_1d",
    "central_hd",
    "local_1d",
    "local_hd",
    "user_level_central",
    "user_level_local",
    "split",
    "random_effects",
    "longitudinal_regression",
    "nonparam_point",
    "plugin_bisection",
    "plugin_coinpress",
)

CSV_HEADER = [
    "experiment_id",
    "estimator",
    "n",
    "T",
    "d",
    "epsilon",
    "delta",
    "rho_data",
    "mse",
    "median_se",
    "iqr_lo",
    "iqr_hi",
    "bias_sq",
    "variance",
    "hist_failure_rate",
    "clip_rate",
    "k",
    "base_seed",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceConfig:
    kind: str = "identity"
    decay: float | None = None
    variance: float | None = None
    covariance: float | None = None
    covariance_rule: str | None = None  # "one_over_n_minus_1"

    def resolve(self, dim: int) -> CovarianceSpec:
        if self.kind == "identity":
            return CovarianceSpec.identity(dim)
        if self.kind == "toeplitz":
            if self.decay is None:
                raise ConfigError("data.covariance.decay is required for kind 'toeplitz'")
            return CovarianceSpec.toeplitz(self.decay, dim)
        if self.kind == "equicorrelated":
            variance = 1.0 if self.variance is None else self.variance
            if self.covariance_rule == "one_over_n_minus_1":
                cov = variance / (dim - 1)
            elif self.covariance_rule is None and self.covariance is not None:
                cov = self.covariance
            else:
                raise ConfigError(
                    "data.covariance needs 'covariance' or covariance_rule='one_over_n_minus_1'"
                )
            return CovarianceSpec.equicorrelated(variance, cov, dim)
        raise ConfigError(f"data.covariance.kind {self.kind!r} is not supported")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    estimator: str
    replications: int
    base_seed: int
    mean: float = 0.0
    d: int = 1
    n_grid: tuple[int, ...] = (1000,)
    T_grid: tuple[int, ...] = (1,)
    covariance: CovarianceConfig = field(default_factory=CovarianceConfig)
    epsilon_rule: dict = field(default_factory=lambda: {"rule": "constant", "value": 1.0})
    delta_rule: dict = field(default_factory=lambda: {"rule": "one_over_n_squared"})
    varrho_rule: dict = field(default_factory=lambda: {"rule": "one_over_n_squared"})
    gamma: float = 0.1
    interval_mode: str = "default"
    tau_prime: float | None = None
    bound_B: float | None = None
    tau_rho: str = "marginal"  # or "operator"
    m_hat_rough: float = 0.0
    sigma2_bounds: tuple[float, float] = (0.1, 1e4)
    sigma_U2: float = 0.0
    group_sizes: tuple[int, ...] | None = None
    p: int = 2
    beta: tuple[float, ...] | None = None
    x_point: float = 0.5
    f_name: str = "sine"
    L_f: float = math.pi
    f_sup: float = 1.0

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.n_grid or not self.T_grid:
            raise ConfigError("n_grid and T_grid must be nonempty")
        if self.estimator.startswith("local") or self.estimator == "user_level_local":
            if self.bound_B is None:
                raise ConfigError(f"estimator {self.estimator!r} requires bound_B")
        if self.tau_rho not in ("marginal", "operator"):
            raise ConfigError("tau_rho must be 'marginal' or 'operator'")

    def mode(self) -> IntervalMode:
        if self.interval_mode == "default":
            return IntervalMode.default()
        if self.interval_mode == "tightened":
            if self.tau_prime is None:
                raise ConfigError("interval_mode 'tightened' requires tau_prime")
            return IntervalMode.tightened(self.tau_prime)
        raise ConfigError(f"unknown interval_mode {self.interval_mode!r}")


def _rule_value(rule: dict, n: int, what: str) -> float:
    kind = rule.get("rule")
    if kind == "constant":
        if "value" not in rule:
            raise ConfigError(f"privacy.{what}: constant rule requires 'value'")
        return float(rule["value"])
    if kind == "c_over_sqrt_n":
        return float(rule.get("c", 1.0)) / math.sqrt(n)
    if kind == "one_over_n_squared":
        return 1.0 / n**2
    raise ConfigError(f"privacy.{what}: unknown rule {kind!r}")


@dataclass(frozen=True)
class SummaryStats:
    experiment_id: str
    estimator: str
    n: int
    T: int
    d: int
    epsilon: float
    delta: float
    rho_data: float
    mse: float
    median_se: float
    iqr_lo: float
    iqr_hi: float
    bias_sq: float
    variance: float
    hist_failure_rate: float
    clip_rate: float
    k: int
    base_seed: int
    runtime: float = 0.0

    def to_row(self) -> list:
        return [getattr(self, name) for name in CSV_HEADER]


def bias_variance_decompose(estimates: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """bias_sq + variance equals the MSE on the same sample exactly."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    if estimates.shape[0] < 2:
        raise ValueError("bias_variance_decompose requires k >= 2 replications")
    center = estimates.mean(axis=0)
    bias_sq = float(np.sum((center - truth) ** 2))
    variance = float(np.mean(np.sum((estimates - center) ** 2, axis=1)))
    return bias_sq, variance


@dataclass
class _RepResult:
    estimate: np.ndarray
    truth: np.ndarray
    hist_failed: bool
    clipped_count: int
    clippable: int


def _grid_context(config: ExperimentConfig, n: int, T: int) -> dict:
    """Per grid point quantities shared by all replications."""
    est = config.estimator
    ctx: dict = {}
    if est in ("user_level_central", "user_level_local"):
        spec = config.covariance.resolve(T)
        info = log_sobolev_constant(spec)
        ctx["per_user_spec"] = spec
        ctx["rho"] = info.rho
        ctx["marginal"] = float(info.marginal_rhos.max())
    elif est == "random_effects":
        spec = config.covariance.resolve(T)
        info = log_sobolev_constant(spec)
        groups = config.group_sizes if config.group_sizes is not None else (n,)
        if sum(groups) != n:
            raise ConfigError(f"group_sizes must sum to n={n}, got {groups}")
        ctx["per_user_spec"] = spec
        ctx["groups"] = groups
        ctx["rho"] = random_effects_rho(config.sigma_U2, groups, T, info.rho)
        ctx["marginal"] = config.sigma_U2 + float(info.marginal_rhos.max())
    elif est == "longitudinal_regression":
        noise_spec = config.covariance.resolve(T)
        info = log_sobolev_constant(noise_spec)
        p = config.p
        if T % p != 0:
            raise ConfigError(f"longitudinal_regression requires T divisible by p, got T={T}, p={p}")
        design = np.vstack([np.eye(p)] * (T // p))
        beta = config.beta if config.beta is not None else (1.0,) * p
        if len(beta) != p:
            raise ConfigError(f"beta must have length p={p}")
        ctx["noise_spec"] = noise_spec
        ctx["design"] = design
        ctx["beta"] = np.asarray(beta, dtype=float)
        # M_u = X_u'X_u / T = I_p / p for the stacked-identity design
        ctx["bounds"] = (1.0 / p, 1.0 / p, info.rho)
        ctx["rho"] = info.rho
        ctx["marginal"] = float(info.marginal_rhos.max())
    else:
        spec = config.covariance.resolve(n)
        info = log_sobolev_constant(spec)
        ctx["spec"] = spec
        ctx["rho"] = info.rho
        ctx["marginal"] = float(info.marginal_rhos.max())
    return ctx


def _conc_spec(config: ExperimentConfig, ctx: dict) -> ConcentrationSpec:
    marginals = [ctx["marginal"]] if config.tau_rho == "marginal" else None
    return ConcentrationSpec(rho=ctx["rho"], gamma=config.gamma, marginal_rhos=marginals)


def _run_rep(
    config: ExperimentConfig,
    ctx: dict,
    n: int,
    T: int,
    eps: float,
    delta: float,
    varrho: float,
    stream: RngStream,
) -> _RepResult:
    est = config.estimator
    mu = config.mean
    mode = config.mode()
    data_rng = stream.child(0)
    mech_rng = stream.child(1)

    if est in ("nonprivate_mean", "central_1d", "local_1d", "plugin_bisection", "plugin_coinpress"):
        data = sample_gaussian(mu, ctx["spec"], data_rng)
        truth = np.array([mu])
        if est == "nonprivate_mean":
            return _RepResult(np.array([data.mean()]), truth, False, 0, n)
        if est in ("plugin_bisection", "plugin_coinpress"):
            search_budget = PrivacyBudget(eps, delta, varrho)
            search = variance_bisection if est == "plugin_bisection" else adaptive_coinpress
            sigma2, _state = search(
                data, search_budget, config.sigma2_bounds, config.m_hat_rough, config.gamma, mech_rng.child(0)
            )
            tau = math.sqrt(2 * sigma2 * math.log(2 * n / config.gamma))
            out = winsorized_mean_1d_central(data, tau, PrivacyBudget(eps, delta), mech_rng.child(1), mode)
        else:
            tau = concentration_radius(_conc_spec(config, ctx), n, 1, 1)
            if est == "central_1d":
                out = winsorized_mean_1d_central(data, tau, PrivacyBudget(eps, delta), mech_rng, mode)
            else:
                out = winsorized_mean_1d_local(data, tau, eps, config.bound_B, mech_rng)
        return _RepResult(out.value, truth, out.histogram_failed, out.clipped_count, n)

    if est in ("central_hd", "local_hd", "split"):
        d = config.d
        truth = np.full(d, mu)
        cols = [sample_gaussian(mu, ctx["spec"], data_rng.child(j)) for j in range(d)]
        data = np.column_stack(cols)
        tau = concentration_radius(_conc_spec(config, ctx), n, d, 1)
        if est == "central_hd":
            out = winsorized_mean_hd_central(data, tau, PrivacyBudget(eps, delta, varrho), mech_rng, mode)
        elif est == "local_hd":
            out = winsorized_mean_hd_local(data, tau, eps, varrho, config.bound_B, mech_rng)
        else:
            cols_z = [sample_gaussian(mu, ctx["spec"], data_rng.child(d + j)) for j in range(d)]
            out = winsorized_mean_split(
                np.column_stack(cols_z), data, tau, PrivacyBudget(eps, delta, varrho), mech_rng, mode
            )
        return _RepResult(out.value, truth, out.histogram_failed, out.clipped_count, n * d)

    if est in ("user_level_central", "user_level_local", "random_effects"):
        truth = np.array([mu])
        spec = _conc_spec(config, ctx)
        if est == "random_effects":
            X, _labels = sample_random_effects(
                mu, config.sigma_U2, ctx["groups"], T, ctx["per_user_spec"], data_rng
            )
        else:
            X = sample_user_level(mu, ctx["per_user_spec"], n, data_rng)
        if est == "user_level_local":
            out = user_level_mean_local(X, spec, eps, varrho, config.bound_B, mech_rng)
        else:
            out = user_level_mean_central(X, spec, PrivacyBudget(eps, delta, varrho), mech_rng, config.mode())
        return _RepResult(out.value, truth, out.histogram_failed, out.clipped_count, n)

    if est == "longitudinal_regression":
        designs = [ctx["design"]] * n
        dataset = sample_regression(ctx["beta"], designs, [ctx["noise_spec"]] * n, data_rng)
        out = private_longitudinal_regression(
            dataset,
            ctx["bounds"],
            PrivacyBudget(eps, delta, varrho),
            mech_rng,
            model="central",
            gamma=config.gamma,
            mode=mode,
        )
        return _RepResult(out.value, ctx["beta"], out.histogram_failed, out.clipped_count, n * config.p)

    if est == "nonparam_point":
        f = _curve(config.f_name)
        design = sample_fixed_design(f, n, ctx["spec"], data_rng)
        sigma_max = math.sqrt(ctx["marginal"])
        b = min(1.0, select_bandwidth(n, sigma_max, eps, model="central"))
        out = private_regression_point(
            design,
            gaussian_kernel(),
            b,
            config.x_point,
            PrivacyBudget(eps, delta),
            mech_rng,
            model="central",
            gamma=config.gamma,
            L_f=config.L_f,
            f_sup=config.f_sup,
            sigma2_max=ctx["marginal"],
            mode=mode,
        )
        truth = np.array([float(f(np.array([config.x_point]))[0])])
        return _RepResult(out.value, truth, out.histogram_failed, out.clipped_count, n)

    raise ConfigError(f"unknown estimator {est!r}")


def _curve(name: str):
    if name == "sine":
        return lambda x: 0.5 * np.sin(2 * math.pi * x) + 0.5
    if name == "linear":
        return lambda x: x
    if name == "constant":
        return lambda x: np.full_like(x, 0.5)
    raise ConfigError(f"unknown f_name {name!r}")


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list[SummaryStats]:
    """Run the full grid; output is a pure function of (config, base_seed)
    regardless of thread count."""
    results = []
    for n in config.n_grid:
        for T in config.T_grid:
            started = time.perf_counter()
            if not (config.gamma < min(1, n / 4)):
                raise ConfigError(f"gamma must be < min(1, n/4), got gamma={config.gamma}, n={n}")
            ctx = _grid_context(config, n, T)
            eps = _rule_value(config.epsilon_rule, n, "epsilon")
            delta = _rule_value(config.delta_rule, n, "delta")
            varrho = _rule_value(config.varrho_rule, n, "varrho")
            k = config.replications

            def one(rep: int) -> _RepResult:
                return _run_rep(config, ctx, n, T, eps, delta, varrho, RngStream(config.base_seed, rep))

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    reps = list(pool.map(one, range(k)))
            else:
                reps = [one(rep) for rep in range(k)]

            estimates = np.array([r.estimate for r in reps])
            truth = reps[0].truth
            sq_errors = np.sum((estimates - truth) ** 2, axis=1)
            bias_sq, variance = bias_variance_decompose(estimates, truth)
            q25, q50, q75 = np.quantile(sq_errors, [0.25, 0.5, 0.75])
            results.append(
                SummaryStats(
                    experiment_id=config.experiment_id,
                    estimator=config.estimator,
                    n=n,
                    T=T,
                    d=config.d,
                    epsilon=eps,
                    delta=delta,
                    rho_data=ctx["rho"],
                    mse=float(sq_errors.mean()),
                    median_se=float(q50),
                    iqr_lo=float(q25),
                    iqr_hi=float(q75),
                    bias_sq=bias_sq,
                    variance=variance,
                    hist_failure_rate=float(np.mean([r.hist_failed for r in reps])),
                    clip_rate=float(np.mean([r.clipped_count / r.clippable for r in reps])),
                    k=k,
                    base_seed=config.base_seed,
                    runtime=time.perf_counter() - started,
                )
            )
    return results


def emit_results(stats: list[SummaryStats], path, fmt: str = "csv") -> None:
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for s in stats:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in s.to_row()])
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump([dict(zip(CSV_HEADER, s.to_row())) for s in stats], fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def parse_config(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed TOML/JSON mapping."""
    try:
        data = dict(raw.get("data", {}))
        privacy = dict(raw.get("privacy", {}))
        options = dict(raw.get("options", {}))
        cov = CovarianceConfig(**data.pop("covariance", {})) if "covariance" in data else CovarianceConfig()
        kwargs = dict(
            experiment_id=raw["experiment_id"],
            estimator=raw["estimator"],
            replications=int(raw["replications"]),
            base_seed=int(raw["base_seed"]),
            covariance=cov,
        )
        if "mean" in data:
            kwargs["mean"] = float(data.pop("mean"))
        if "d" in data:
            kwargs["d"] = int(data.pop("d"))
        if "n_grid" in data:
            kwargs["n_grid"] = tuple(int(v) for v in data.pop("n_grid"))
        if "T_grid" in data:
            kwargs["T_grid"] = tuple(int(v) for v in data.pop("T_grid"))
        if data:
            raise ConfigError(f"unknown fields in [data]: {sorted(data)}")
        if "epsilon" in privacy:
            kwargs["epsilon_rule"] = dict(privacy.pop("epsilon"))
        if "delta" in privacy:
            kwargs["delta_rule"] = dict(privacy.pop("delta"))
        if "varrho" in privacy:
            kwargs["varrho_rule"] = dict(privacy.pop("varrho"))
        if privacy:
            raise ConfigError(f"unknown fields in [privacy]: {sorted(privacy)}")
        tuple_fields = {"sigma2_bounds", "group_sizes", "beta"}
        for key, value in options.items():
            if key not in ExperimentConfig.__dataclass_fields__:
                raise ConfigError(f"unknown field in [options]: {key}")
            kwargs[key] = tuple(value) if key in tuple_fields else value
        return ExperimentConfig(**kwargs)
    except KeyError as exc:
        raise ConfigError(f"missing required config field: {exc.args[0]}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
