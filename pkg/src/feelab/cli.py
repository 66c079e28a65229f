"""Command-line front end: ``feelab <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_to_dict, load_config
from .dynamics import DYNAMIC_MECHANISMS, KERNELS, UpdateParams
from .experiments import (
    ALL_MECHANISMS,
    BUILTIN_SCENARIOS,
    ConfigError,
    ScenarioConfig,
    _atomic_write,
    run_scenario,
    solve_equilibrium_price,
    summary_text,
)
from .fixedpoint import BUILTINS, iterate_to_fixed_point
from .game import InstanceFamily, check_ic_dsic
from .market import MECHANISM_NAMES
from .values import limited_demand_curve_mc, probe_curve, revenue_curve_mc

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3

# per-round static equivalents used by check-ic for the dynamic mechanisms
_STATIC_FOR = {"wdpp": "posted-mv", "udpp": "posted-rm", "twdpp": "posted-rm"}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _add_source(p: argparse.ArgumentParser, required: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=required)
    src.add_argument("--scenario", choices=sorted(BUILTIN_SCENARIOS), help="builtin scenario name")
    src.add_argument("--config", type=Path, help="JSON scenario file")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_u64)
    p.add_argument("--mechanism", choices=ALL_MECHANISMS)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--steps", type=int, help="horizon override; burn-in resets to steps/5")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feelab", description="Dynamic posted-price fee mechanism lab.")
    parser.add_argument("--version", action="version", version=f"feelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("simulate", help="run a scenario and write its trace")
    _add_source(p)
    _add_overrides(p)
    p.add_argument("--out", "-o", type=Path, default=None, help="output directory")

    p = sub.add_parser("fixedpoint", help="iterate a mixture to its fixed point")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--builtin", choices=sorted(BUILTINS), default=None)
    src.add_argument("--scenario", choices=sorted(BUILTIN_SCENARIOS))
    src.add_argument("--config", type=Path)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--mechanism", choices=tuple(DYNAMIC_MECHANISMS))
    p.add_argument("--seed", type=_u64)
    p.add_argument("--x0", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--samples", type=int, default=20_000, help="Monte-Carlo samples for scenario kernels")
    p.add_argument("--no-clamp", action="store_true", help="keep alpha even above 1/(L+1)")
    p.add_argument("--out", "-o", type=Path, default=None)

    p = sub.add_parser("check-ic", help="search random instances for IC / DSIC violations")
    p.add_argument("--mechanism", choices=ALL_MECHANISMS, required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--excess-demand", action="store_true", help="posted price below the (m+1)-st value")
    p.add_argument("--n-max", type=int, default=8)
    p.add_argument("--m-max", type=int, default=3)
    p.add_argument("--out", "-o", type=Path, default=None)

    p = sub.add_parser("curves", help="Monte-Carlo demand, revenue and kernel curves as CSV")
    _add_source(p)
    _add_overrides(p)
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--q-max", type=float, default=None, help="upper end of the price grid")
    p.add_argument("--out", "-o", type=Path, default=None)

    sub.add_parser("list-scenarios", help="print the builtin scenarios")
    return parser


# --------------------------------------------------------------------------
# helpers


def _scenario(args) -> ScenarioConfig:
    cfg = BUILTIN_SCENARIOS[args.scenario] if getattr(args, "scenario", None) else load_config(args.config)
    overrides = {
        "seed": getattr(args, "seed", None),
        "mechanism": getattr(args, "mechanism", None),
        "alpha": getattr(args, "alpha", None),
        "delta": getattr(args, "delta", None),
        "horizon": getattr(args, "steps", None),
    }
    return cfg.with_overrides(**overrides)


def _out_dir(args, default: str) -> Path:
    return args.out if args.out is not None else Path("feelab-out") / default


def _write_manifest(out: Path, argv: list[str], command: str, seed, config: dict, outputs: list[str]) -> None:
    manifest = {
        "tool": "feelab",
        "version": __version__,
        "command": command,
        "argv": argv,
        "seed": seed,
        "config": config,
        "outputs": outputs,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, default=str) + "\n")


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, argv) -> int:
    cfg = _scenario(args)
    out = args.out if args.out is not None else Path(cfg.output or Path("feelab-out") / cfg.name)
    _, summary = run_scenario(cfg, out)
    config = config_to_dict(cfg)
    _atomic_write(out / "config.json", json.dumps(config, indent=2) + "\n")
    _write_manifest(out, argv, "simulate", cfg.seed, config,
                    ["trace.csv", "summary.txt", "summary.json", "config.json"])
    sys.stdout.write(summary_text(summary))
    print(f"wrote {out}/")
    return EXIT_OK


def cmd_fixedpoint(args, argv) -> int:
    if args.scenario or args.config:
        cfg = _scenario(args)
        if cfg.mechanism not in DYNAMIC_MECHANISMS:
            raise ConfigError([f"fixedpoint needs a dynamic mechanism, got {cfg.mechanism!r}"])
        mech = DYNAMIC_MECHANISMS[cfg.mechanism]
        params = UpdateParams(cfg.alpha, cfg.delta, cfg.m)
        n = cfg.demand.n_at(1)
        est, report = solve_equilibrium_price(
            mech, cfg.distribution, n, params, samples=args.samples, seed=cfg.seed,
            x0=args.x0 or cfg.q0, tol=args.tol,
        )
        label, seed, config = f"{cfg.name}-{mech.name}", cfg.seed, config_to_dict(cfg)
        extra = f"x_star_se: {est.se:.6g}\n"
    else:
        problem = BUILTINS[args.builtin or "f1"]
        if args.alpha is not None:
            if not 0 < args.alpha < 1:
                raise ConfigError(["alpha must lie in (0,1)"])
            problem = type(problem)(problem.f, problem.a_bar, problem.lipschitz_L, args.alpha, problem.name)
        report = iterate_to_fixed_point(
            problem, args.x0 if args.x0 is not None else 0.1, tol=args.tol, max_iter=args.max_iter,
            clamp_alpha=not args.no_clamp, log_trajectory=True,
        )
        label, seed, extra = problem.name, None, ""
        config = {"builtin": problem.name, "alpha": args.alpha, "x0": args.x0, "tol": args.tol,
                  "clamp_alpha": not args.no_clamp}

    out = _out_dir(args, f"fixedpoint-{label}")
    rows = [(i, f"{x:.12g}") for i, x in enumerate(report.trajectory)]
    _atomic_write(out / "trajectory.csv", _csv(["iteration", "x"], rows))
    text = report.summary() + "\n" + extra
    _atomic_write(out / "report.txt", text)
    _write_manifest(out, argv, "fixedpoint", seed, config, ["trajectory.csv", "report.txt"])
    sys.stdout.write(text)
    return EXIT_OK if report.converged else EXIT_RUNTIME


def cmd_check_ic(args, argv) -> int:
    name = _STATIC_FOR.get(args.mechanism, args.mechanism)
    if name not in MECHANISM_NAMES:
        raise ConfigError([f"check-ic supports per-round mechanisms only, not {args.mechanism!r}"])
    if args.trials < 1:
        raise ConfigError(["trials must be >= 1"])
    family = InstanceFamily(n_max=args.n_max, m_max=args.m_max, excess_demand=args.excess_demand)
    report = check_ic_dsic(name, family, trials=args.trials, seed=args.seed)
    out = _out_dir(args, f"check-ic-{name}")
    _atomic_write(out / "report.txt", report.summary() + "\n")
    _atomic_write(out / "report.json", json.dumps(report.to_dict(), indent=2) + "\n")
    config = {"mechanism": name, "trials": args.trials, "family": vars(family)}
    _write_manifest(out, argv, "check-ic", args.seed, config, ["report.txt", "report.json"])
    print(report.summary())
    return EXIT_OK


def cmd_curves(args, argv) -> int:
    cfg = _scenario(args)
    if args.points < 3 or args.samples < 2:
        raise ConfigError(["points must be >= 3 and samples >= 2"])
    n, m = cfg.demand.n_at(1), cfg.m
    q_max = args.q_max or float(np.quantile(cfg.distribution.sample(np.random.default_rng(cfg.seed), 10_000), 0.999))
    grid = np.linspace(q_max / (args.points - 1), q_max, args.points)
    params = UpdateParams(cfg.alpha, cfg.delta, m)
    demand, demand_se = limited_demand_curve_mc(cfg.distribution, n, m, grid, args.samples, cfg.seed)
    revenue, revenue_se = revenue_curve_mc(cfg.distribution, n, m, grid, args.samples, cfg.seed)
    header = ["q", "demand", "demand_se", "revenue", "revenue_se"]
    columns = [grid, demand, demand_se, revenue, revenue_se]
    if cfg.mechanism in DYNAMIC_MECHANISMS:
        rule = DYNAMIC_MECHANISMS[cfg.mechanism].rule
        kernel, kernel_se = KERNELS[rule](cfg.distribution, n, params, grid, args.samples, cfg.seed)
        header += ["kernel", "kernel_se", "expected_update"]
        columns += [kernel, kernel_se, cfg.alpha * kernel + (1 - cfg.alpha) * grid]
    rows = [[f"{v:.9g}" for v in row] for row in zip(*columns)]

    diag = probe_curve(lambda q: revenue[np.searchsorted(grid, q)], grid, tol=3 * float(revenue_se.max()))
    text = (
        f"scenario: {cfg.name}\nn: {n}\nm: {m}\nsamples: {args.samples}\n"
        f"revenue_lipschitz_estimate: {diag.L_hat:.6g}\n"
        f"revenue_concavity_violations: {diag.concavity_violations}\n"
    )
    out = _out_dir(args, f"curves-{cfg.name}")
    _atomic_write(out / "curves.csv", _csv(header, rows))
    _atomic_write(out / "diagnostics.txt", text)
    _write_manifest(out, argv, "curves", cfg.seed, config_to_dict(cfg), ["curves.csv", "diagnostics.txt"])
    sys.stdout.write(text)
    return EXIT_OK


def cmd_list(args, argv) -> int:
    for name, cfg in BUILTIN_SCENARIOS.items():
        print(f"{name:24s} {cfg.mechanism:6s} {cfg.distribution} {cfg.demand} horizon={cfg.horizon}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fixedpoint": cmd_fixedpoint,
    "check-ic": cmd_check_ic,
    "curves": cmd_curves,
    "list-scenarios": cmd_list,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, argv)
    except ConfigError as exc:
        where = f" in {exc.source}" if exc.source else ""
        print(f"feelab: invalid configuration{where}:", file=sys.stderr)
        for err in exc.errors:
            print(f"  - {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure; report and exit nonzero
        print(f"feelab: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
