"""Command line front end: analyze, simulate, estimate, press, compare.

Exit codes: 0 success, 2 configuration problems (also used by argparse),
3 data problems, 4 numerical failures.  All outputs are deterministic
for a fixed configuration and seed: no timestamps, stable float
formatting, replication-indexed random streams.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import analytic, estimation, geometry, montecarlo
from .channel import HomeOperatorAbsent
from .core import (
    KM2,
    BlockModel,
    ConfigError,
    DataError,
    NumericalError,
    SystemParams,
    TwoOpSpec,
    Window,
    fcd_scenario,
    fid_scenario,
    load_blocks_file,
    params_from_dict,
    params_to_dict,
    PRESETS,
)

DEFAULT_LAMBDA0_PER_KM2 = 30.0
DEFAULT_SINR_GRID = "-10:1:30"
DEFAULT_RATE_GRID_MBPS = "25:25:500"
_BARE = "__bare__"  # --fid / --fcd used without a value


# ---------------------------------------------------------------------------
# Small parsers

def parse_grid(text: str, name: str) -> np.ndarray:
    """Inclusive lo:step:hi grid; hi is included when it lands on the grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--{name} expects lo:step:hi, got {text!r}")
    try:
        lo, step, hi = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"--{name} expects numbers, got {text!r}") from exc
    if step <= 0:
        raise ConfigError(f"--{name} step must be positive")
    if hi < lo:
        raise ConfigError(f"--{name} upper end must be >= lower end")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def parse_bins(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"--bins expects comma-separated integers, got {text!r}") from exc


def parse_rhos(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"--rhos expects comma-separated numbers, got {text!r}") from exc
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise ConfigError("--rhos values must lie in [0, 1]")
    return vals


def _load_params(args) -> SystemParams:
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}; known: {sorted(PRESETS)}")
    base = PRESETS[args.preset]
    if args.params is None:
        return base
    try:
        data = json.loads(Path(args.params).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read params file {args.params}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"params file {args.params} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("params file must hold a JSON object")
    return params_from_dict(data, base=base)


def _sharing_mode_and_rho(args) -> tuple[str | None, float | None]:
    mode, rho = None, None
    if args.fid is not None:
        mode = "fid"
        rho = None if args.fid == _BARE else float(args.fid)
    if args.fcd is not None:
        if mode is not None:
            raise ConfigError("--fid and --fcd are mutually exclusive")
        mode = "fcd"
        rho = None if args.fcd == _BARE else float(args.fcd)
    if args.rho is not None:
        if rho is not None:
            raise ConfigError("the sharing fraction was given twice (--rho and --fid/--fcd)")
        rho = args.rho
    return mode, rho


def _resolve_scenario(args, allow_deployment: bool):
    """Returns (scenario, description). Exactly one scenario source allowed."""
    mode, rho = _sharing_mode_and_rho(args)
    deployment_path = getattr(args, "deployment", None)
    sources = sum(
        [args.blocks is not None, deployment_path is not None, rho is not None or mode is not None]
    )
    if sources == 0:
        raise ConfigError(
            "no scenario given: use --blocks FILE, --rho X [--fid|--fcd], or --deployment FILE"
        )
    if sources > 1:
        raise ConfigError("--blocks, --rho/--fid/--fcd and --deployment are mutually exclusive")
    if args.blocks is not None:
        model = load_blocks_file(args.blocks)
        if getattr(args, "window_km", None) is not None:
            half = args.window_km * 1000.0 / 2.0
            model = BlockModel(Window.square(half), model.densities)
        desc = "blocks(" + ", ".join(
            f"{sub.to_text()}:{lam * KM2:.6g}/km^2" for sub, lam in model.blocks()
        ) + ")"
        return model, desc
    if deployment_path is not None:
        if not allow_deployment:
            raise ConfigError(
                "--deployment is not supported here; use the simulate or estimate command"
            )
        dep = geometry.read_deployment_csv(deployment_path)
        return dep, f"deployment({deployment_path}, n_sites={dep.n_sites})"
    if rho is None:
        raise ConfigError("give the sharing fraction: --rho X, --fid X or --fcd X")
    mode = mode or "fid"
    lam0_km2 = args.lambda0 if args.lambda0 is not None else DEFAULT_LAMBDA0_PER_KM2
    lam0 = lam0_km2 / KM2
    spec = fid_scenario(lam0, rho) if mode == "fid" else fcd_scenario(lam0, rho)
    desc = f"{mode}(rho={rho!r}, lambda0={lam0_km2!r}/km^2)"
    return spec, desc


def _operator_density(scenario, operator: int = 1) -> float:
    if isinstance(scenario, geometry.Deployment):
        return estimation.estimate_density(scenario, operator)
    return analytic.operator_density_of(scenario, operator)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(f"wrote {path}")


# ---------------------------------------------------------------------------
# Subcommands

def cmd_analyze(args) -> int:
    params = _load_params(args)
    scenario, desc = _resolve_scenario(args, allow_deployment=False)
    out = _out_dir(args)
    grid = parse_grid(args.sinr or DEFAULT_SINR_GRID, "sinr")
    curve = analytic.sinr_coverage(scenario, params, grid, workers=args.threads)
    curve.to_csv(out / "sinr_coverage.csv")
    print(f"wrote {out / 'sinr_coverage.csv'}")
    lines = [
        f"scenario: {desc}",
        "engine: analytic",
        f"sinr_grid_db: {args.sinr or DEFAULT_SINR_GRID}",
    ]
    if args.rates:
        rates = parse_grid(args.rates, "rates") * 1e6
        rcurve = analytic.rate_coverage(scenario, params, rates, workers=args.threads)
        rcurve.to_csv(out / "rate_coverage.csv")
        print(f"wrote {out / 'rate_coverage.csv'}")
        lines.append(f"rate_grid_mbps: {args.rates}")
    if args.median:
        med = analytic.median_rate(scenario, params)
        lines.append(f"median_rate_bps: {med!r}")
        print(f"median rate: {med / 1e6:.3f} Mbps")
    lines.append("parameters:")
    lines.append(json.dumps(params_to_dict(params), sort_keys=True, indent=2))
    _write(out / "summary.txt", "\n".join(lines) + "\n")
    return 0


def cmd_simulate(args) -> int:
    params = _load_params(args)
    scenario, desc = _resolve_scenario(args, allow_deployment=True)
    if isinstance(scenario, geometry.Deployment) and args.window_km is not None:
        raise ConfigError("--window-km does not apply to a fixed deployment")
    out = _out_dir(args)
    grid = parse_grid(args.sinr or DEFAULT_SINR_GRID, "sinr")
    half = args.window_km * 1000.0 / 2.0 if args.window_km is not None else None
    plan = montecarlo.SimPlan(
        replications=args.reps,
        seed=args.seed,
        thresholds_db=grid,
        half_width_m=half,
        workers=args.threads,
    )
    result = montecarlo.run_simulation(scenario, params, plan)
    result.curve.to_csv(out / "sinr_empirical.csv")
    print(f"wrote {out / 'sinr_empirical.csv'}")
    if args.rates:
        rates = parse_grid(args.rates, "rates") * 1e6
        lam_op = _operator_density(scenario, plan.home_operator)
        rcurve = montecarlo.rate_curve_from_samples(result.sinr, rates, params, lam_op)
        rcurve.to_csv(out / "rate_empirical.csv")
        print(f"wrote {out / 'rate_empirical.csv'}")
    _write(out / "run_report.txt", result.report.to_text())
    return 0


def cmd_estimate(args) -> int:
    mode, rho = _sharing_mode_and_rho(args)
    if args.deployment is not None:
        if rho is not None or mode is not None:
            raise ConfigError("--deployment and --rho/--fid/--fcd are mutually exclusive")
        dep = geometry.read_deployment_csv(args.deployment)
        source = f"deployment({args.deployment})"
    elif rho is not None or mode is not None:
        # synthetic round trip: sample a coupled deployment, then estimate
        if rho is None:
            raise ConfigError("give the sharing fraction: --rho X, --fid X or --fcd X")
        if args.window_km is None:
            raise ConfigError("synthetic estimation needs --window-km for the sampling window")
        lam0_km2 = args.lambda0 if args.lambda0 is not None else DEFAULT_LAMBDA0_PER_KM2
        lam0 = lam0_km2 / KM2
        spec = fcd_scenario(lam0, rho) if mode == "fcd" else fid_scenario(lam0, rho)
        window = Window.square(args.window_km * 1000.0 / 2.0)
        dep = geometry.couple_two_operators(spec, window, args.seed)
        source = f"synthetic({mode or 'fid'}, rho={rho!r}, lambda0={lam0_km2!r}/km^2, seed={args.seed})"
    else:
        raise ConfigError("no data given: use --deployment FILE or --rho X --window-km W")
    out = _out_dir(args)
    if args.eps_coloc > 0:
        dep = estimation.merge_colocated(dep, args.eps_coloc)
    bins = parse_bins(args.bins) if args.bins else estimation.DEFAULT_BIN_COUNTS
    report = estimation.overlap_report(dep, bins)
    summary = estimation.sharing_summary(dep)
    text = (
        f"source: {source}\n"
        f"colocation_merge_eps_m: {args.eps_coloc!r}\n"
        + report.to_text()
        + summary.to_text()
    )
    _write(out / "overlap_report.txt", text)
    rows = ["n_bins,rho_direct,rho_smoothed"]
    for nb, raw, sm in report.bins_csv_rows():
        rows.append(f"{nb},{raw!r},{sm!r}")
    _write(out / "rho_vs_bins.csv", "\n".join(rows) + "\n")
    print(
        f"rho_indirect={report.rho_indirect:.4f} "
        f"rho_direct_plateau={report.rho_plateau:.4f}"
    )
    return 0


def cmd_press(args) -> int:
    dep = geometry.read_deployment_csv(args.deployment)
    out = _out_dir(args)
    target = args.target_density / KM2
    pressed = geometry.press(dep, target, operator=args.operator)
    geometry.write_deployment_csv(pressed, out / "pressed.csv")
    print(f"wrote {out / 'pressed.csv'}")
    which = args.operator if args.operator is not None else None
    new_density = estimation.estimate_density(pressed, which) * KM2
    print(f"pressed density: {new_density:.6g} /km^2 over {pressed.window.area() / KM2:.6g} km^2")
    return 0


def cmd_compare(args) -> int:
    params = _load_params(args)
    out = _out_dir(args)
    rhos = parse_rhos(args.rhos) if args.rhos else (0.0, 0.4, 1.0)
    lam0_km2 = args.lambda0 if args.lambda0 is not None else DEFAULT_LAMBDA0_PER_KM2
    lam0 = lam0_km2 / KM2
    rates = parse_grid(args.rates or DEFAULT_RATE_GRID_MBPS, "rates") * 1e6
    half_b = dataclasses.replace(params, bandwidth_hz=params.bandwidth_hz / 2.0)
    runs: list[tuple[str, object, SystemParams]] = []
    for rho in rhos:
        runs.append((f"fid_rho{rho:g}", fid_scenario(lam0, rho), params))
    for rho in rhos:
        runs.append((f"fcd_rho{rho:g}", fcd_scenario(lam0, rho), params))
    single = TwoOpSpec(lam0, 1.0, 1.0)  # operator 1 alone at density lam0
    runs.append((f"single_{half_b.bandwidth_hz / 1e6:g}mhz", single, half_b))
    runs.append((f"single_{params.bandwidth_hz / 1e6:g}mhz", single, params))

    curves: dict[str, analytic.CoverageCurve] = {}
    medians: dict[str, float] = {}
    reports: list[str] = []
    for i, (label, scenario, run_params) in enumerate(runs):
        plan = montecarlo.SimPlan(
            replications=args.reps,
            seed=(args.seed, i),
            workers=args.threads,
        )
        result = montecarlo.run_simulation(scenario, run_params, plan)
        lam_op = _operator_density(scenario, 1)
        curves[label] = montecarlo.rate_curve_from_samples(result.sinr, rates, run_params, lam_op)
        medians[label] = montecarlo.median_rate_from_samples(result.sinr, run_params, lam_op)
        reports.append(f"[{label}]\n{result.report.to_text()}")
    labels = [label for label, _, _ in runs]
    header = ["rate_mbps"]
    for label in labels:
        header += [label, f"{label}_ci"]
    lines = [",".join(header)]
    for j, rate in enumerate(rates):
        row = [repr(float(rate / 1e6))]
        for label in labels:
            cv = curves[label]
            row += [repr(float(cv.probabilities[j])), repr(float(cv.ci_halfwidth[j]))]
        lines.append(",".join(row))
    _write(out / "compare_rates.csv", "\n".join(lines) + "\n")
    med_lines = ["label,median_rate_bps"]
    for label in labels:
        med_lines.append(f"{label},{medians[label]!r}")
    _write(out / "compare_medians.csv", "\n".join(med_lines) + "\n")
    _write(out / "run_report.txt", "\n".join(reports))
    return 0


# ---------------------------------------------------------------------------
# Parser assembly

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default="paper-sec5", help="named parameter preset")
    p.add_argument("--params", metavar="FILE", help="JSON parameter overrides")
    p.add_argument("--out", default=".", metavar="DIR", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker process cap")


def _add_scenario(p: argparse.ArgumentParser, deployment: bool) -> None:
    p.add_argument("--blocks", metavar="FILE", help="JSON block-density table")
    p.add_argument("--rho", type=float, help="sharing fraction in [0, 1]")
    p.add_argument("--lambda0", type=float, metavar="Y",
                   help=f"per-operator density per km^2 (default {DEFAULT_LAMBDA0_PER_KM2:g})")
    p.add_argument("--fid", nargs="?", const=_BARE, metavar="RHO",
                   help="fixed-individual-density sharing (optionally the rho value)")
    p.add_argument("--fcd", nargs="?", const=_BARE, metavar="RHO",
                   help="fixed-cumulative-density sharing (optionally the rho value)")
    if deployment:
        p.add_argument("--deployment", metavar="FILE", help="site CSV to use as-is")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmwshare",
        description="SINR and rate coverage of spectrum- and site-sharing mmWave networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="coverage curves by numerical integration")
    _add_common(p)
    _add_scenario(p, deployment=False)
    p.add_argument("--sinr", metavar="LO:STEP:HI", help=f"SINR grid in dB (default {DEFAULT_SINR_GRID})")
    p.add_argument("--rates", metavar="LO:STEP:HI", help="also compute rate coverage (grid in Mbps)")
    p.add_argument("--median", action="store_true", help="also compute the median rate")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="coverage curves by Monte Carlo")
    _add_common(p)
    _add_scenario(p, deployment=True)
    p.add_argument("--sinr", metavar="LO:STEP:HI", help=f"SINR grid in dB (default {DEFAULT_SINR_GRID})")
    p.add_argument("--rates", metavar="LO:STEP:HI", help="also compute rate coverage (grid in Mbps)")
    p.add_argument("--reps", type=int, default=20000, help="Monte Carlo replications")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--window-km", type=float, metavar="W",
                   help="override the simulation window side length (km)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="densities and overlap from site data")
    _add_common(p)
    _add_scenario(p, deployment=True)
    p.add_argument("--eps-coloc", type=float, default=estimation.DEFAULT_MERGE_EPS_M,
                   metavar="M", help="co-location merge radius in meters (0 disables)")
    p.add_argument("--bins", metavar="K1,K2,...", help="counting-grid sizes (perfect squares)")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic sampling")
    p.add_argument("--window-km", type=float, metavar="W",
                   help="window side length (km) for synthetic sampling")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("press", help="rescale a deployment to a target density")
    _add_common(p)
    p.add_argument("--deployment", metavar="FILE", required=True, help="site CSV to press")
    p.add_argument("--target-density", type=float, required=True, metavar="X",
                   help="target density per km^2")
    p.add_argument("--operator", type=int, help="match this operator's density (default: all sites)")
    p.set_defaults(func=cmd_press)

    p = sub.add_parser("compare", help="rate coverage of sharing modes vs single operator")
    _add_common(p)
    p.add_argument("--rhos", metavar="R1,R2,...", help="sharing fractions (default 0,0.4,1)")
    p.add_argument("--lambda0", type=float, metavar="Y",
                   help=f"per-operator density per km^2 (default {DEFAULT_LAMBDA0_PER_KM2:g})")
    p.add_argument("--rates", metavar="LO:STEP:HI",
                   help=f"rate grid in Mbps (default {DEFAULT_RATE_GRID_MBPS})")
    p.add_argument("--reps", type=int, default=20000, help="Monte Carlo replications per curve")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(func=cmd_compare)

    return parser


def _merge_grid_values(argv: list[str]) -> list[str]:
    """Let ``--sinr -10:1:30`` parse: argparse mistakes the value for a flag."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if tok in ("--sinr", "--rates") and nxt and nxt.startswith("-") and ":" in nxt:
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    args = parser.parse_args(_merge_grid_values(argv))
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, HomeOperatorAbsent) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
