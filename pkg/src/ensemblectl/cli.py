"""Command-line interface.

    ensemblectl example list
    ensemblectl synthesize --preset bm-oscillator --out out/
    ensemblectl simulate --preset bm-oscillator --trials 400 --seed 7
    ensemblectl verify scalar-tv

Exit status: 0 success, 1 runtime error, 2 configuration or validation
error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels, outputs
from .checks import VERIFY_SEED, verify_preset
from .config import RunConfig, config_from_dict, load_config
from .errors import (ConfigError, DimensionMismatch, EnsembleError, ExprError,
                     InsufficientTrials, InvalidBounds, InvalidStep, InvalidSystem,
                     OverdeterminedGrid, UnknownExample)
from .model import EXAMPLES, SIMULATION_DEFAULTS, builtin_example
from .pipeline import run_synthesis, simulate_ensemble
from .sde import SCHEMES, SimulationConfig
from .stats import monte_carlo_stats, theoretical_mse_many
from .synthesis import ControlSignal

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3

_CONFIG_ERRORS = (ConfigError, ExprError, InvalidSystem, InvalidBounds, UnknownExample,
                  OverdeterminedGrid, DimensionMismatch, InvalidStep, InsufficientTrials)

_NOISE_SCHEMES = {"brownian": ("em", "sri15", "rk4"), "poisson": ("poisson", "rk4"),
                  "none": ("rk4",)}


def _common(p):
    p.add_argument("--preset", choices=sorted(EXAMPLES), help="built-in example")
    p.add_argument("--config", metavar="PATH", help="TOML (or .json) run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--q", type=int, help="truncation count per input channel")
    p.add_argument("--max-condition", type=float, help="limit on s_1 / s_(mq)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per parameter point")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--scheme", choices=SCHEMES, help="integration scheme")
    p.add_argument("--h", type=float, help="simulation step size")
    p.add_argument("--threads", type=int, help="worker threads for the compiled kernels")
    p.add_argument("--no-stats", action="store_true", help="skip terminal statistics")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ensemblectl",
        description="Minimum-norm open-loop control of linear stochastic ensembles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="compute the ensemble control")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo trials under a control")
    _common(p)
    p.add_argument("--control", metavar="PATH",
                   help="control CSV (default: synthesize from the configuration)")

    p = sub.add_parser("verify", help="run the quantitative checks of a built-in example")
    p.add_argument("name", nargs="?", choices=sorted(EXAMPLES), help="example name")
    _common(p)

    p = sub.add_parser("example", help="built-in examples")
    p.add_argument("action", choices=["list"])
    return parser


def _resolve_config(args):
    if args.config and args.preset:
        raise ConfigError("give either --preset or --config, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = config_from_dict({"system": {"preset": args.preset}})
    else:
        raise ConfigError("a system is required: use --preset NAME or --config PATH")
    cfg = cfg.with_overrides(q=args.q, max_condition=args.max_condition, trials=args.trials,
                             seed=args.seed, scheme=args.scheme, h=args.h, directory=args.out)
    allowed = _NOISE_SCHEMES[cfg.system.noise.kind]
    if cfg.scheme not in allowed:
        raise ConfigError(f"scheme {cfg.scheme!r} does not fit {cfg.system.noise.kind} noise; "
                          f"use one of {', '.join(allowed)}")
    return cfg


def _outdir(cfg: RunConfig):
    out = Path(cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _synthesize(cfg, out):
    run = run_synthesis(cfg.system, cfg.time_grid, cfg.param_grid, q=cfg.q,
                        max_condition=cfg.max_condition, method=cfg.method)
    run.control.to_csv(out / "control.csv")
    outputs.write_singular_values(out / "singular_values.csv", run.factorization)
    outputs.write_diagnostic(out / "diagnostic.csv", run.diagnostic, run.factorization)
    result = {"q": run.q, "terms": run.factorization.terms, "rank": run.factorization.rank,
              "condition_ratio": run.factorization.condition_ratio,
              "relative_residual": run.relative_residual,
              "max_block_residual": run.max_block_residual,
              "control_norm": run.control.norm(), "synthesis_seconds": run.wall_time}
    return run, result


def cmd_synthesize(cfg: RunConfig):
    out = _outdir(cfg)
    run, result = _synthesize(cfg, out)
    files = ["control.csv", "singular_values.csv", "diagnostic.csv"]
    if cfg.plot:
        outputs.write_plot_script(out, files, cfg.system.m)
    # the effective q is recorded so the metadata reproduces the run
    outputs.write_meta(out / "run_meta.toml", cfg.with_overrides(q=run.q),
                       {"command": "synthesize", **result})
    print(f"q = {run.q} (rank {run.factorization.rank}), s_1/s_mq = "
          f"{run.factorization.condition_ratio:.4g}, relative residual = "
          f"{run.relative_residual:.4g}, max block residual = {run.max_block_residual:.4g}")
    print(f"wrote {', '.join(files)} and run_meta.toml to {out}")
    return EXIT_OK


def _load_control(path, sys_):
    try:
        control = ControlSignal.from_csv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read control file {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed control file {path}: {exc}") from exc
    if control.m != sys_.m:
        raise DimensionMismatch(f"control file has {control.m} channels, system has {sys_.m}")
    return control


def cmd_simulate(cfg: RunConfig, control_file=None, stats=True):
    if stats and cfg.trials < 2:
        raise InsufficientTrials(f"statistics need at least 2 trials, got {cfg.trials}; "
                                 "pass --no-stats to simulate only")
    out = _outdir(cfg)
    files, result = [], {"command": "simulate"}
    control_file = control_file or cfg.control_file
    if control_file:
        control = _load_control(control_file, cfg.system)
        result["control_file"] = str(control_file)
    else:
        run, synth = _synthesize(cfg, out)
        control = run.control
        cfg = cfg.with_overrides(q=run.q)
        result.update(synth)
        files += ["control.csv", "singular_values.csv", "diagnostic.csv"]
    pgrid = cfg.param_grid
    sim = SimulationConfig(h=cfg.h, scheme=cfg.scheme, seed=cfg.seed, trials=cfg.trials,
                           control=control)
    start = time.perf_counter()
    X, _ = simulate_ensemble(cfg.system, control, pgrid.points, sim)
    result["simulation_seconds"] = time.perf_counter() - start
    outputs.write_terminals(out / "terminals.csv", pgrid.points, X)
    files.append("terminals.csv")
    if stats:
        theory = theoretical_mse_many(cfg.system, cfg.system.T, pgrid.points)
        st = monte_carlo_stats(X, cfg.system, pgrid, theory)
        st.to_csv(out / "stats.csv")
        st.summary_csv(out / "summary.csv")
        files += ["stats.csv", "summary.csv"]
        result.update(J1=st.J1, J2_empirical=st.J2_empirical, J2_se=st.J2_se,
                      J2_theory=st.J2_theory)
        print(f"J1 = {st.J1:.6g}, J2 = {st.J2_empirical:.6g} +- {st.J2_se:.2g} "
              f"(theory {st.J2_theory:.6g})")
        worst = np.max(np.abs(st.mse_empirical - theory) / st.mse_se)
        print(f"per-parameter MSE: {st.mse_empirical.min():.5g} .. {st.mse_empirical.max():.5g}"
              f", worst deviation from theory {worst:.3g} SE")
    if cfg.plot:
        outputs.write_plot_script(out, files, cfg.system.m)
    outputs.write_meta(out / "run_meta.toml", cfg, result)
    print(f"wrote {', '.join(files)} and run_meta.toml to {out}")
    return EXIT_OK


def cmd_verify(name, out=None, trials=None, seed=None, q=None):
    out = Path(out or f"verify-{name}")
    report = verify_preset(name, out=out, trials=trials,
                           seed=VERIFY_SEED if seed is None else seed, q=q)
    if "stats.csv" in report.files or "sweep_beta.csv" in report.files:
        outputs.write_plot_script(out, report.files, report.run.system.m)
    for check in report.checks:
        print(check.line())
    cfg = config_from_dict({"system": {"preset": name}}).with_overrides(
        q=report.run.q, seed=VERIFY_SEED if seed is None else seed, trials=trials)
    result = {"command": "verify", "preset": name, "passed": report.passed}
    if "sweep_T.csv" in report.files:
        # horizons past the synthesis horizon run with the control set to zero there
        result["control_beyond_horizon"] = "zero"
    outputs.write_meta(out / "run_meta.toml", cfg, {
        **result,
        "checks": {c.name: {"passed": c.passed, "measured": c.measured,
                            "expected": c.expected, "gating": c.gating}
                   for c in report.checks}})
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{verdict}: {name} ({sum(c.passed for c in report.checks if c.gating)}/"
          f"{sum(c.gating for c in report.checks)} gating checks); artifacts in {out}")
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_example_list():
    for name in EXAMPLES:
        ex = builtin_example(name)
        s = ex.system
        scheme, h, trials = SIMULATION_DEFAULTS[name]
        q = ex.q if ex.q is not None else "auto"
        print(f"{name:<20} n={s.n} m={s.m} noise={s.noise.kind:<8} T={s.T:g} "
              f"N={ex.time_grid.N} P={ex.param_grid.P} q={q} scheme={scheme} h={h:g} "
              f"trials={trials}")
        print(f"{'':<20} {s.note}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "threads", None):
            kernels.set_threads(args.threads)
        if args.command == "example":
            return cmd_example_list()
        if args.command == "verify":
            name = args.name or args.preset
            if name is None:
                raise ConfigError("verify needs an example name")
            if args.name and args.preset and args.name != args.preset:
                raise ConfigError("conflicting example names")
            if args.trials is not None and args.trials < 2:
                raise InsufficientTrials("verification needs at least 2 trials")
            return cmd_verify(name, args.out, args.trials, args.seed, args.q)
        cfg = _resolve_config(args)
        if args.command == "synthesize":
            return cmd_synthesize(cfg)
        return cmd_simulate(cfg, args.control, stats=not args.no_stats)
    except _CONFIG_ERRORS as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EnsembleError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
