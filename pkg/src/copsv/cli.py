"""Command-line front end over CSV files and a flat run configuration.

Subcommands: ``simulate`` (preset data + truth files), ``fit`` (posterior
draws + summary), ``forecast`` (one-day-ahead predictive draws + portfolio
VaR), ``backtest`` (rolling VaR series + coverage tests), ``replicate``
(scaled simulation-study suites with comparison tables) and ``checkgrad``
(analytic-vs-finite-difference certification).

Options come from ``--config key=value`` files overridden by command-line
flags; every command is deterministic given the merged configuration.  Exit
codes: 0 success, 2 input validation, 3 numerical-check failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio, factor_copula
from .bicop import CopulaFamily, parse_family
from .diagnostics import christoffersen_cc, summarize_chain
from .forecast import RollingPolicy, portfolio_var, predictive_draws, rolling_backtest
from .gradcheck import certify_gradients
from .joint import FamilySet, FitConfig, fit_joint, simulate_joint
from .replication import run_dependence_replication, run_joint_replication
from .scenarios import (
    DEPENDENCE_SCENARIO_NAMES,
    SCENARIO_NAMES,
    DependenceScenario,
    JointScenario,
    get_scenario,
)

__all__ = ["RunConfig", "main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

_COMMANDS = ("simulate", "fit", "forecast", "backtest", "replicate", "checkgrad")


@dataclass(frozen=True)
class RunConfig:
    """Validated options for one command invocation.

    ``iters``/``burn``/``replicates`` default to ``None`` meaning "use the
    command's own default scale"; numeric fields are validated here so the
    commands can assume well-formed values.
    """

    command: str
    seed: int = 0
    scenario: str | None = None
    iters: int | None = None
    burn: int | None = None
    families: tuple[CopulaFamily, ...] | None = None
    levels: tuple[float, ...] = (0.90, 0.95)
    window: int = 100
    train_len: int = 1000
    refresh_iters: int = 300
    refresh_burn: int = 100
    replicates: int | None = None
    t_obs: int | None = None
    out_dir: str = "."
    data_path: str | None = None
    prices_path: str | None = None
    returns_path: str | None = None
    threads: int = 1
    full_scale: bool = False

    def __post_init__(self) -> None:
        if self.command not in _COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.scenario is not None and self.scenario not in SCENARIO_NAMES:
            raise ValueError(f"unknown scenario {self.scenario!r}; "
                             f"choose from {SCENARIO_NAMES}")
        if self.iters is not None and self.iters < 2:
            raise ValueError("iters must be at least 2")
        if self.burn is not None and self.burn < 0:
            raise ValueError("burn must be non-negative")
        if (self.iters is not None and self.burn is not None
                and self.burn >= self.iters):
            raise ValueError("burn must be smaller than iters")
        if not self.levels:
            raise ValueError("at least one VaR level is required")
        if any(not 0.0 < l < 1.0 for l in self.levels):
            raise ValueError("levels must lie strictly inside (0, 1)")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError("levels must be distinct")
        if self.window < 2:
            raise ValueError("window must be at least 2")
        if self.train_len < self.window:
            raise ValueError("train-len must be at least the window size")
        if self.refresh_iters <= self.refresh_burn:
            raise ValueError("refresh-iters must exceed refresh-burn")
        if self.refresh_burn < 0:
            raise ValueError("refresh-burn must be non-negative")
        if self.replicates is not None and self.replicates < 1:
            raise ValueError("replicates must be positive")
        if self.t_obs is not None and self.t_obs < 2:
            raise ValueError("t-obs must be at least 2")
        if self.threads < 1:
            raise ValueError("threads must be positive")
        n_inputs = sum(p is not None for p in
                       (self.data_path, self.prices_path, self.returns_path))
        if n_inputs > 1:
            raise ValueError("give at most one of --data, --prices, --returns")


_KEY_PARSERS = {
    "seed": int,
    "scenario": str,
    "iters": int,
    "burn": int,
    "families": "families",
    "levels": "levels",
    "window": int,
    "train-len": int,
    "refresh-iters": int,
    "refresh-burn": int,
    "replicates": int,
    "t-obs": int,
    "out-dir": str,
    "data": str,
    "prices": str,
    "returns": str,
    "threads": int,
    "full": "bool",
}

_KEY_FIELDS = {
    "train-len": "train_len",
    "refresh-iters": "refresh_iters",
    "refresh-burn": "refresh_burn",
    "t-obs": "t_obs",
    "out-dir": "out_dir",
    "data": "data_path",
    "prices": "prices_path",
    "returns": "returns_path",
    "full": "full_scale",
}


def _parse_families(text: str) -> tuple[CopulaFamily, ...]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise ValueError("families list is empty")
    return tuple(parse_family(name) for name in names)


def _parse_levels(text: str) -> tuple[float, ...]:
    parts = [part.strip() for part in text.split(",") if part.strip()]
    if not parts:
        raise ValueError("levels list is empty")
    return tuple(float(p) for p in parts)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"cannot parse {text!r} as a boolean")


def build_config(command: str, mapping: dict[str, str]) -> RunConfig:
    """Turn merged key=value options into a validated :class:`RunConfig`."""
    kwargs: dict[str, object] = {"command": command}
    for key, raw in mapping.items():
        if key not in _KEY_PARSERS:
            raise ValueError(f"unknown option {key!r}")
        parser = _KEY_PARSERS[key]
        if parser == "families":
            value: object = _parse_families(raw)
        elif parser == "levels":
            value = _parse_levels(raw)
        elif parser == "bool":
            value = _parse_bool(raw)
        else:
            try:
                value = parser(raw)
            except ValueError as exc:
                raise ValueError(f"option {key!r}: cannot parse {raw!r}") from exc
        kwargs[_KEY_FIELDS.get(key, key)] = value
    return RunConfig(**kwargs)


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------

def _load_input(config: RunConfig) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Read the command's input matrix; returns (values, dates-or-None)."""
    if config.data_path is not None:
        _, z = dataio.read_matrix_csv(config.data_path)
        return z, None
    if config.returns_path is not None:
        md = dataio.read_market_csv(config.returns_path, kind="returns")
        return md.z, md.dates
    if config.prices_path is not None:
        md = dataio.read_market_csv(config.prices_path, kind="prices")
        return md.z, md.dates
    raise ValueError("an input file is required: --data, --prices or --returns")


def _fit_config(config: RunConfig, default_iters: int, default_burn: int) -> FitConfig:
    iters = config.iters if config.iters is not None else default_iters
    burn = config.burn if config.burn is not None else default_burn
    kwargs: dict[str, object] = {"n_iter": iters, "n_burn": burn,
                                 "seed": config.seed}
    if config.families is not None:
        kwargs["family_set"] = FamilySet(config.families)
    return FitConfig(**kwargs)


def _out_path(config: RunConfig, name: str) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(config: RunConfig) -> int:
    """Write a preset data set and its generating truths."""
    if config.scenario is None:
        raise ValueError("simulate requires --scenario")
    scenario = get_scenario(config.scenario)
    if config.t_obs is not None:
        if isinstance(scenario, DependenceScenario):
            scenario = DependenceScenario(scenario.name, scenario.tau,
                                          scenario.families, n_obs=config.t_obs)
        else:
            scenario = JointScenario(scenario.name, scenario.params,
                                     n_obs=config.t_obs)
    rng = np.random.default_rng((config.seed, 11))
    if isinstance(scenario, DependenceScenario):
        u, _ = factor_copula.simulate(scenario.families, scenario.tau,
                                      scenario.n_obs, rng)
        dataio.write_matrix_csv(_out_path(config, "data.csv"), u, prefix="u")
    else:
        z, _ = simulate_joint(scenario.params, scenario.n_obs, rng)
        dataio.write_matrix_csv(_out_path(config, "data.csv"), z, prefix="z")
    dataio.write_truth_csv(_out_path(config, "truth.csv"), scenario)
    print(f"wrote {_out_path(config, 'data.csv')} and "
          f"{_out_path(config, 'truth.csv')}")
    return EXIT_OK


def _summary_lines(chain) -> list[str]:
    d = chain.mu.shape[1]
    blocks = {"mu": chain.mu, "phi": chain.phi, "sigma": chain.sigma,
              "tau": chain.tau}
    lines = [f"{'parameter':<10} {'mean':>10} {'mode':>10} {'ess':>8} "
             f"{'ci90_lo':>10} {'ci90_hi':>10} {'ci95_lo':>10} {'ci95_hi':>10}"]
    for name, draws in blocks.items():
        for j in range(d):
            s = summarize_chain(draws[:, j])
            lines.append(
                f"{name + '_' + str(j + 1):<10} {s.mean:>10.4f} {s.mode:>10.4f} "
                f"{s.ess:>8.0f} {s.ci[0.9][0]:>10.4f} {s.ci[0.9][1]:>10.4f} "
                f"{s.ci[0.95][0]:>10.4f} {s.ci[0.95][1]:>10.4f}")
    fams = ", ".join(f"m_{j + 1}={chain.family_mode(j).value}"
                     for j in range(d))
    lines.append(f"posterior-mode families: {fams}")
    lines.append(f"acceptance: margins {np.mean(chain.accept_margin):.3f}, "
                 f"dependence {np.mean(chain.accept_dependence):.3f}")
    return lines


def cmd_fit(config: RunConfig) -> int:
    """Fit the joint model and write draws plus a summary report."""
    z, _ = _load_input(config)
    chain = fit_joint(z, _fit_config(config, 2500, 500))
    dataio.write_draws_csv(_out_path(config, "draws.csv"), chain)
    summary = "\n".join(_summary_lines(chain)) + "\n"
    _out_path(config, "summary.txt").write_text(summary)
    print(summary, end="")
    print(f"wrote {_out_path(config, 'draws.csv')} and "
          f"{_out_path(config, 'summary.txt')}")
    return EXIT_OK


def cmd_forecast(config: RunConfig) -> int:
    """Fit, then draw one-day-ahead returns and portfolio VaR."""
    z, _ = _load_input(config)
    chain = fit_joint(z, _fit_config(config, 2500, 500))
    rng = np.random.default_rng((config.seed, 13))
    fset = predictive_draws(chain, z, rng)
    dataio.write_matrix_csv(_out_path(config, "forecast.csv"), fset.draws,
                            prefix="z")
    weights = np.full(fset.n_margins, 1.0 / fset.n_margins)
    lines = [f"predictive draws: {fset.r_count}"]
    for level in config.levels:
        var = portfolio_var(fset, weights, level)
        lines.append(f"VaR {level * 100:g}% (equal weights): {var:.6f}")
    report = "\n".join(lines) + "\n"
    _out_path(config, "forecast_summary.txt").write_text(report)
    print(report, end="")
    return EXIT_OK


def cmd_backtest(config: RunConfig) -> int:
    """Rolling one-day-ahead VaR backtest with coverage tests."""
    z, dates = _load_input(config)
    policy = RollingPolicy(window=config.window,
                           refresh_iters=config.refresh_iters,
                           refresh_burn=config.refresh_burn)
    series = rolling_backtest(z, config.train_len, policy=policy,
                              config=_fit_config(config, 2500, 500),
                              levels=config.levels, dates=dates)
    dataio.write_var_csv(_out_path(config, "var.csv"), series)
    lines = []
    for level in config.levels:
        rep = christoffersen_cc(series.violations(level), level)
        lines.append(
            f"level {level * 100:g}%: violations {rep.n_violations}/{rep.n_obs} "
            f"(rate {rep.rate:.4f}), LR_cc {rep.lr_cc:.3f}, "
            f"p-value {rep.p_value:.4f}")
    if series.failures:
        lines.append(f"failed days: {list(series.failures)}")
    report = "\n".join(lines) + "\n"
    _out_path(config, "backtest.txt").write_text(report)
    print(report, end="")
    return EXIT_OK


def cmd_replicate(config: RunConfig) -> int:
    """Run a scaled simulation-study suite and write comparison tables."""
    scenario_name = config.scenario or "high-tau"
    progress = lambda msg: print(msg, file=sys.stderr)  # noqa: E731
    if scenario_name in DEPENDENCE_SCENARIO_NAMES:
        n_rep = config.replicates or (100 if config.full_scale else 20)
        result = run_dependence_replication(
            scenario_name,
            n_replicates=n_rep,
            n_iter=config.iters if config.iters is not None else 11000,
            n_burn=config.burn if config.burn is not None else 1000,
            seed=config.seed, workers=config.threads, progress=progress)
    else:
        n_rep = config.replicates or (100 if config.full_scale else 10)
        result = run_joint_replication(
            get_scenario(scenario_name),
            n_replicates=n_rep,
            n_iter=config.iters if config.iters is not None else 2500,
            n_burn=config.burn if config.burn is not None else 500,
            seed=config.seed, workers=config.threads, progress=progress)
    md = result.to_markdown()
    _out_path(config, "replicate.md").write_text(md)
    rows = result.comparison_rows()
    with open(_out_path(config, "replicate.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "observed", "reference"])
        for row in rows:
            writer.writerow([row["metric"], repr(float(row["observed"])),
                             row["reference"] if row["reference"] == ""
                             else repr(float(row["reference"]))])
    print(md)
    return EXIT_OK


def cmd_checkgrad(config: RunConfig) -> int:
    """Certify every analytic gradient against finite differences."""
    report = certify_gradients(n_points=100, seed=config.seed)
    text = "\n".join(report.lines()) + "\n"
    _out_path(config, "gradcheck.txt").write_text(text)
    print(text, end="")
    return EXIT_OK if report.passed else EXIT_NUMERIC


_RUNNERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "replicate": cmd_replicate,
    "checkgrad": cmd_checkgrad,
}


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copsv",
        description="Factor copula stochastic volatility: simulate, fit, "
                    "forecast, backtest, replicate, checkgrad.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, runner in _RUNNERS.items():
        p = sub.add_parser(name, help=runner.__doc__)
        p.add_argument("--config", help="key = value options file")
        p.add_argument("--seed", type=int)
        p.add_argument("--scenario", choices=SCENARIO_NAMES)
        p.add_argument("--iters", type=int)
        p.add_argument("--burn", type=int)
        p.add_argument("--families",
                       help="comma-separated linking families, e.g. "
                            "gaussian,t4,clayton,gumbel")
        p.add_argument("--levels", help="comma-separated VaR levels, e.g. 0.9,0.95")
        p.add_argument("--window", type=int)
        p.add_argument("--train-len", type=int, dest="train_len")
        p.add_argument("--refresh-iters", type=int, dest="refresh_iters")
        p.add_argument("--refresh-burn", type=int, dest="refresh_burn")
        p.add_argument("--replicates", type=int)
        p.add_argument("--t-obs", type=int, dest="t_obs")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--data", dest="data")
        p.add_argument("--prices", dest="prices")
        p.add_argument("--returns", dest="returns")
        p.add_argument("--threads", type=int)
        p.add_argument("--full", action="store_const", const=True,
                       dest="full", help="paper-scale replicate counts")
    return parser


_FLAG_TO_KEY = {
    "seed": "seed",
    "scenario": "scenario",
    "iters": "iters",
    "burn": "burn",
    "families": "families",
    "levels": "levels",
    "window": "window",
    "train_len": "train-len",
    "refresh_iters": "refresh-iters",
    "refresh_burn": "refresh-burn",
    "replicates": "replicates",
    "t_obs": "t-obs",
    "out_dir": "out-dir",
    "data": "data",
    "prices": "prices",
    "returns": "returns",
    "threads": "threads",
    "full": "full",
}


def parse_run_config(argv) -> RunConfig:
    """Merge config file and command-line flags into a RunConfig."""
    ns = _build_parser().parse_args(argv)
    mapping: dict[str, str] = {}
    if ns.config is not None:
        mapping.update(dataio.read_config_file(ns.config))
    for attr, key in _FLAG_TO_KEY.items():
        value = getattr(ns, attr, None)
        if value is not None:
            mapping[key] = str(value) if not isinstance(value, bool) \
                else ("true" if value else "false")
    return build_config(ns.command, mapping)


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    try:
        config = parse_run_config(argv)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return _RUNNERS[config.command](config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
