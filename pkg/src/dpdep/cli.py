"""Command-line entry point for the Monte-Carlo experiment harness."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .harness import ConfigError, emit_results, parse_config, run_experiment

EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def _load_config(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    if path.endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("DPDEP_THREADS")
    return int(env) if env else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dpdep", description="Monte-Carlo experiment harness")
    parser.add_argument("--config", required=True, help="experiment file (TOML or JSON)")
    parser.add_argument("--out", default=None, help="output file path")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed-override", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        config = parse_config(_load_config(args.config))
        if args.seed_override is not None:
            config = dataclasses.replace(config, base_seed=args.seed_override)
    except (ConfigError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        stats = run_experiment(config, threads=_resolve_threads(args.threads))
        for s in stats:
            print(
                f"{s.estimator} n={s.n} T={s.T} eps={s.epsilon:.6g} "
                f"mse={s.mse:.6g} bias_sq={s.bias_sq:.3g} var={s.variance:.6g} "
                f"hist_fail={s.hist_failure_rate:.3g} clip={s.clip_rate:.3g}"
            )
        if args.out is not None:
            emit_results(stats, args.out, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
