"""Command-line front end.

    tolreg solve    [--config run.json] [--penalty.q 2] [--problem.alpha 0.01] ...
    tolreg sweep-eps | lcurve | morozov | rates
    tolreg fourier  --eps 0.75 --terms 20

Settings are flat dotted keys (see ``DEFAULTS``).  A JSON config file sets
any subset of them; ``--<key> <value>`` flags override the file.  Every run
writes its CSV artifacts, ``config.json`` (the effective settings, reloadable
with ``--config``) and ``manifest.json`` into ``output.dir``.

Exit codes: 0 success, 1 invalid configuration, 2 solver failure,
3 no feasible alpha in ``morozov``.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .artifacts import write_json, write_rows_csv
from .core import (
    Grid,
    Signal,
    apply,
    integration_operator,
    make_grid,
    read_signal_csv,
    weighted_norm,
    write_signal_csv,
)
from .experiments import (
    NoiseModel,
    RateConfig,
    SweepConfig,
    TubeSampler,
    add_noise,
    error_sweep,
    fourier_demo,
    rate_c_sweep,
    rate_study,
    sample_tube,
    substream_seed,
)
from .param_choice import AlphaGrid, lcurve, log_alpha_grid, morozov_select
from .penalty import PenaltySpec, ToleranceProfile, eps_measure, read_tolerance_csv
from .solver import SolverConfig, SolverError, TikhonovProblem, minimize, write_history_csv

COMMANDS = ("solve", "sweep-eps", "lcurve", "morozov", "rates", "fourier")
OUTPUT_ENV = "TOLREG_OUTPUT_DIR"

DEFAULTS: Dict[str, object] = {
    "seed": 0,
    "grid.n": 600,
    "grid.a": 0.0,
    "grid.b": 1.0,
    "problem.operator": "integration",
    "problem.alpha": 0.001,
    "problem.p": 2.0,
    "penalty.q": 1.0,
    "penalty.eps": 0.3,
    "penalty.reference": "sin2pi",
    "truth.eps": None,
    "truth.sigma": 0.08,
    "truth.source": "tube",
    "noise.delta": 0.001,
    "solver.max_iters": 20000,
    "solver.initial_step": None,
    "solver.decay_horizon": 1000.0,
    "solver.shrink_factor": 0.5,
    "solver.patience": 50,
    "solver.objective_tol": 1e-10,
    "solver.window": 100,
    "alpha_grid.min": 1e-12,
    "alpha_grid.max": 1.0,
    "alpha_grid.count": 40,
    "morozov.tau": 2.0,
    "morozov.delta": None,
    "morozov.use_tolerance": False,
    "sweep.eps_values": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2],
    "sweep.runs": 50,
    "rates.delta0": 0.05,
    "rates.levels": 7,
    "rates.c": 0.1,
    "rates.c_sweep": [],
    "fourier.eps": 0.75,
    "fourier.terms": 20,
    "fourier.samples": 4096,
    "parallel.max_workers": 1,
    "output.dir": None,
}

_ALIASES = {
    "fourier": {"eps": "fourier.eps", "terms": "fourier.terms"},
    "*": {
        "eps": "penalty.eps",
        "q": "penalty.q",
        "alpha": "problem.alpha",
        "delta": "noise.delta",
        "n": "grid.n",
        "tau": "morozov.tau",
        "out": "output.dir",
    },
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    values: Dict[str, object]

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None):
        values = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                with open(path) as f:
                    loaded = json.load(f)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"config: cannot read {path}: {exc}") from exc
            if not isinstance(loaded, dict):
                raise ConfigError("config: top level must be a JSON object")
            values.update(_flatten(loaded))
        values.update(overrides or {})
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown setting")
        if values["output.dir"] is None:
            values["output.dir"] = os.environ.get(OUTPUT_ENV, "results")
        cfg = cls(values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        v = self.values

        def number(key, lo=-math.inf, hi=math.inf, lo_open=False, integer=False):
            x = v[key]
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"{key}: expected a number, got {x!r}")
            if integer and int(x) != x:
                raise ConfigError(f"{key}: expected an integer, got {x!r}")
            if not math.isfinite(x) or x < lo or x > hi or (lo_open and x == lo):
                raise ConfigError(f"{key}: value {x!r} out of range")

        number("grid.n", 1, integer=True)
        number("grid.a")
        number("grid.b")
        if v["grid.a"] >= v["grid.b"]:
            raise ConfigError("grid.b: must exceed grid.a")
        if v["problem.operator"] != "integration":
            raise ConfigError(f"problem.operator: unknown operator {v['problem.operator']!r}")
        number("problem.alpha", 0.0, lo_open=True)
        number("problem.p", 2.0, 2.0)
        number("penalty.q", 1.0, 2.0)
        eps = v["penalty.eps"]
        if isinstance(eps, str):
            if not eps.startswith("file:"):
                raise ConfigError("penalty.eps: expected a number or 'file:<path>'")
            if not Path(eps[5:]).is_file():
                raise ConfigError(f"penalty.eps: file {eps[5:]} does not exist")
        else:
            number("penalty.eps", 0.0)
        ref = v["penalty.reference"]
        if not isinstance(ref, str):
            raise ConfigError("penalty.reference: expected a name")
        if ref.startswith("file:") and not Path(ref[5:]).is_file():
            raise ConfigError(f"penalty.reference: file {ref[5:]} does not exist")
        if v["truth.eps"] is not None:
            number("truth.eps", 0.0)
        number("truth.sigma", 0.0, lo_open=True)
        src = v["truth.source"]
        if src != "tube" and not (isinstance(src, str) and src.startswith("file:")):
            raise ConfigError("truth.source: expected 'tube' or 'file:<path>'")
        if src != "tube" and not Path(src[5:]).is_file():
            raise ConfigError(f"truth.source: file {src[5:]} does not exist")
        number("noise.delta", 0.0, lo_open=True)
        number("seed", 0, integer=True)
        number("solver.max_iters", 1, integer=True)
        if v["solver.initial_step"] is not None:
            number("solver.initial_step", 0.0, lo_open=True)
        number("solver.decay_horizon", 0.0, lo_open=True)
        number("solver.shrink_factor", 0.0, 1.0, lo_open=True)
        if v["solver.shrink_factor"] >= 1.0:
            raise ConfigError("solver.shrink_factor: must be < 1")
        number("solver.patience", 1, integer=True)
        number("solver.objective_tol", 0.0)
        number("solver.window", 1, integer=True)
        number("alpha_grid.min", 0.0, lo_open=True)
        number("alpha_grid.max", v["alpha_grid.min"])
        number("alpha_grid.count", 1, integer=True)
        number("morozov.tau", 1.0)
        if v["morozov.delta"] is not None:
            number("morozov.delta", 0.0, lo_open=True)
        if not isinstance(v["morozov.use_tolerance"], bool):
            raise ConfigError("morozov.use_tolerance: expected true or false")
        ev = v["sweep.eps_values"]
        if not isinstance(ev, list) or not ev or any(
            isinstance(e, bool) or not isinstance(e, (int, float)) or e < 0 for e in ev
        ):
            raise ConfigError("sweep.eps_values: expected a non-empty list of numbers >= 0")
        number("sweep.runs", 1, integer=True)
        number("rates.delta0", 0.0, lo_open=True)
        number("rates.levels", 2, integer=True)
        number("rates.c", 0.0, lo_open=True)
        cs = v["rates.c_sweep"]
        if not isinstance(cs, list) or any(
            isinstance(c, bool) or not isinstance(c, (int, float)) or not c > 0 for c in cs
        ):
            raise ConfigError("rates.c_sweep: expected a list of positive numbers")
        number("fourier.eps", 0.0)
        number("fourier.terms", 1, integer=True)
        number("fourier.samples", 8, integer=True)
        number("parallel.max_workers", 1, integer=True)

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(
            max_iters=int(v["solver.max_iters"]),
            initial_step=v["solver.initial_step"],
            decay_horizon=float(v["solver.decay_horizon"]),
            shrink_factor=float(v["solver.shrink_factor"]),
            patience=int(v["solver.patience"]),
            objective_tol=float(v["solver.objective_tol"]),
            window=int(v["solver.window"]),
        )

    def grid(self) -> Grid:
        return make_grid(int(self["grid.n"]), float(self["grid.a"]), float(self["grid.b"]))

    def tolerance(self, grid: Grid) -> ToleranceProfile:
        eps = self["penalty.eps"]
        if isinstance(eps, str):
            return read_tolerance_csv(eps[5:], grid)
        return ToleranceProfile(float(eps))

    def truth_eps(self) -> float:
        if self["truth.eps"] is not None:
            return float(self["truth.eps"])
        eps = self["penalty.eps"]
        if isinstance(eps, str):
            raise ConfigError("truth.eps: required when penalty.eps is read from a file")
        return float(eps)

    def dump(self, path) -> Path:
        return write_json(path, self.values)


def _flatten(d, prefix="") -> Dict[str, object]:
    out = {}
    for k, val in d.items():
        key = f"{prefix}{k}"
        if isinstance(val, dict):
            out.update(_flatten(val, key + "."))
        else:
            out[key] = val
    return out


def builtin_reference(name: str, grid: Grid) -> Signal:
    """Evaluate a named reference solution on ``grid``.

    ``sin2pi``, ``zero``, ``const:<c>`` or ``file:<path>`` (an ``x,value`` CSV).
    """
    if name == "sin2pi":
        return Signal.from_function(grid, lambda x: np.sin(2 * np.pi * x))
    if name == "zero":
        return Signal.zeros(grid)
    if name.startswith("const:"):
        return Signal(grid, np.full(grid.n, float(name[6:])))
    if name.startswith("file:"):
        return read_signal_csv(name[5:], grid)
    raise ValueError(f"unknown reference {name!r}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(command: str, tokens: List[str]) -> Dict[str, object]:
    aliases = {**_ALIASES["*"], **_ALIASES.get(command, {})}
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"{tok}: unexpected argument")
        key = tok[2:]
        if "=" in key:
            key, text = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"{key}: missing value")
            text = tokens[i + 1]
            i += 2
        key = aliases.get(key, key)
        if key not in DEFAULTS:
            raise ConfigError(f"{key}: unknown setting")
        out[key] = _parse_value(text)
    return out


# -- commands ------------------------------------------------------------------

def _setup(cfg: RunConfig):
    grid = cfg.grid()
    op = integration_operator(grid)
    ref = builtin_reference(cfg["penalty.reference"], grid)
    tol = cfg.tolerance(grid)
    seed = int(cfg["seed"])
    src = cfg["truth.source"]
    if src == "tube":
        truth = sample_tube(
            TubeSampler(ref, cfg.truth_eps(), float(cfg["truth.sigma"]), substream_seed(seed, "tube"))
        )
    else:
        truth = read_signal_csv(src[5:], grid)
    data = add_noise(apply(op, truth), NoiseModel(float(cfg["noise.delta"]), substream_seed(seed, "noise")))
    spec = PenaltySpec(float(cfg["penalty.q"]), ref, tol)
    problem = TikhonovProblem(op, data, float(cfg["problem.alpha"]), spec)
    return problem, truth


def _alpha_grid(cfg: RunConfig) -> AlphaGrid:
    return log_alpha_grid(cfg["alpha_grid.min"], cfg["alpha_grid.max"], int(cfg["alpha_grid.count"]))


def cmd_solve(cfg: RunConfig, out: Path):
    problem, truth = _setup(cfg)
    solver = cfg.solver_config()
    tol = minimize(problem, solver)
    classical = minimize(problem.with_tolerance(0.0), solver)
    write_signal_csv(out / "solution.csv", tol.solution)
    write_signal_csv(out / "classical.csv", classical.solution)
    write_signal_csv(out / "truth.csv", truth)
    write_signal_csv(out / "data.csv", problem.data)
    write_history_csv(out / "history.csv", tol)
    spec = problem.penalty
    summary = {
        "error_l2_tol": weighted_norm(tol.solution - truth, 2),
        "error_l2_classical": weighted_norm(classical.solution - truth, 2),
        "error_eps_tol": eps_measure(tol.solution - truth, spec.q, spec.tolerance),
        "error_eps_classical": eps_measure(classical.solution - truth, spec.q, spec.tolerance),
        "objective": tol.objective,
        "iterations": tol.iterations_used,
        "converged": tol.converged,
    }
    files = ["solution.csv", "classical.csv", "truth.csv", "data.csv", "history.csv"]
    line = (
        f"solve: error tol={summary['error_l2_tol']:.4g} "
        f"classical={summary['error_l2_classical']:.4g} ({tol.iterations_used} iterations)"
    )
    return summary, files, line, 0


def cmd_sweep(cfg: RunConfig, out: Path):
    report = error_sweep(
        SweepConfig(
        n=int(cfg["grid.n"]),
        q=float(cfg["penalty.q"]),
            eps_values=tuple(float(e) for e in cfg["sweep.eps_values"]),
            runs=int(cfg["sweep.runs"]),
            delta=float(cfg["noise.delta"]),
            alpha=float(cfg["problem.alpha"]),
        sigma=float(cfg["truth.sigma"]),
        seed=int(cfg["seed"]),
            solver=cfg.solver_config(),
            max_workers=int(cfg["parallel.max_workers"]),
        )
    )
    write_rows_csv(out / "sweep.csv", report.header, report.rows())
    dominated = bool(np.all(report.mean_error_tol <= report.mean_error_classical + report.stderr_classical))
    summary = {
        "mean_error_tol": report.mean_error_tol,
        "mean_error_classical": report.mean_error_classical,
        "tolerance_not_worse": dominated,
    }
    return summary, ["sweep.csv"], f"sweep-eps: tolerance error within one stderr of classical: {dominated}", 0


def cmd_lcurve(cfg: RunConfig, out: Path):
    problem, _ = _setup(cfg)
    result = lcurve(problem, _alpha_grid(cfg), cfg.solver_config(), int(cfg["parallel.max_workers"]))
    write_rows_csv(out / "lcurve.csv", result.header, result.rows())
    summary = {"corner_alpha": result.corner_alpha}
    return summary, ["lcurve.csv"], f"lcurve: corner alpha = {result.corner_alpha}", 0


def cmd_morozov(cfg: RunConfig, out: Path):
    problem, truth = _setup(cfg)
    delta = cfg["morozov.delta"] if cfg["morozov.delta"] is not None else cfg["noise.delta"]
    report = morozov_select(
        problem,
        _alpha_grid(cfg),
        float(cfg["morozov.tau"]),
        float(delta),
        bool(cfg["morozov.use_tolerance"]),
        cfg.solver_config(),
        int(cfg["parallel.max_workers"]),
    )
    write_rows_csv(out / "morozov.csv", report.header, report.rows())
    files = ["morozov.csv"]
    summary = report.summary()
    if report.alpha_opt is None:
        return summary, files, "morozov: no alpha satisfies the discrepancy principle", 3
    write_signal_csv(out / "solution.csv", report.tolerance_solution)
    write_signal_csv(out / "classical.csv", report.classical_solution)
    write_signal_csv(out / "truth.csv", truth)
    files += ["solution.csv", "classical.csv", "truth.csv"]
    return summary, files, f"morozov: alpha_opt = {report.alpha_opt:.6g}", 0


def cmd_rates(cfg: RunConfig, out: Path):
    rate_cfg = RateConfig(
        n=int(cfg["grid.n"]),
        q=float(cfg["penalty.q"]),
        eps=cfg.truth_eps(),
        delta0=float(cfg["rates.delta0"]),
        levels=int(cfg["rates.levels"]),
        c=float(cfg["rates.c"]),
        sigma=float(cfg["truth.sigma"]),
        seed=int(cfg["seed"]),
        solver=cfg.solver_config(),
    )
    report = rate_study(rate_cfg)
    write_rows_csv(out / "rates.csv", report.header, report.rows())
    files = ["rates.csv"]
    summary = {"residual_slope": report.residual_slope, "bregman_slope": report.bregman_slope}
    if cfg["rates.c_sweep"]:
        rows = rate_c_sweep(rate_cfg, [float(c) for c in cfg["rates.c_sweep"]])
        write_rows_csv(out / "rates_c_sweep.csv", ("c", "residual_slope", "bregman_slope"), rows)
        files.append("rates_c_sweep.csv")
    line = f"rates: residual slope {report.residual_slope:.3f}, bregman slope {report.bregman_slope:.3f}"
    return summary, files, line, 0


def cmd_fourier(cfg: RunConfig, out: Path):
    table = fourier_demo(float(cfg["fourier.eps"]), int(cfg["fourier.terms"]), int(cfg["fourier.samples"]))
    write_rows_csv(out / "fourier.csv", table.header, table.rows())
    summary = {
        "nonzero_u": table.nonzero_u,
        "nonzero_d": table.nonzero_d,
        "threshold": table.threshold,
        "refinement_change": table.refinement_change,
    }
    line = f"fourier: {table.nonzero_u} nonzero coefficient(s) for u, {table.nonzero_d} for d_eps(u)"
    return summary, ["fourier.csv"], line, 0


_HANDLERS = {
    "solve": cmd_solve,
    "sweep-eps": cmd_sweep,
    "lcurve": cmd_lcurve,
    "morozov": cmd_morozov,
    "rates": cmd_rates,
    "fourier": cmd_fourier,
}


def run(command: str, config_path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> int:
    """Execute one command; returns the process exit status."""
    try:
        cfg = RunConfig.load(config_path, overrides)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        summary, files, line, status = _HANDLERS[command](cfg, out)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    except (SolverError, RuntimeError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    cfg.dump(out / "config.json")
    write_json(
        out / "manifest.json",
        {
            "command": command,
            "version": __version__,
            "seed": cfg["seed"],
            "settings": cfg.values,
            "summary": summary,
            "files": files + ["config.json"],
            "exit_status": status,
        },
    )
    print(line)
    return status


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tolreg",
        description="Tikhonov regularization with tolerance penalties.",
        epilog="Any setting can be overridden as --<dotted.key> <value>, e.g. --penalty.q 2.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON file with (flat or nested) settings")
    args, rest = parser.parse_known_args(argv)
    try:
        overrides = parse_overrides(args.command, rest)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    return run(args.command, args.config, overrides)


if __name__ == "__main__":
    sys.exit(main())
