"""``mixlab`` command-line entry point."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .commutator import CounterexampleSpec, commutator_scan, counterexample_density, log_delta_grid
from .config import ConfigError, ExperimentConfig, load_config, parse_config_text
from .experiments import ALIASES, EXPERIMENTS, NAMED_DATA, mollifier_by_name, named_data, smooth_corpus
from .flows import FlowSpec, make_flow
from .norms import BesovSpec, SobolevDualSpec, besov_norm, log_derivative_norm, sobolev_dual_norm
from .report import write_report
from .spectral import ExponentTriple, ScalarField, TorusGrid, read_mixf, write_mixf
from .transport import SolverConfig, admissible_dt, solve

SIMULATE_DEFAULTS = {
    "N": 128, "period": 1.0, "flow": "alternating_sine_shear", "amplitude": 1.0, "switch_period": 0.5,
    "wavenumber": 1, "data": "von_mises", "T": 1.0, "nu": 0.0, "dt": 0.0, "samples": 20,
    "p": 4.0, "q": 4.0, "r": 2.0, "dump_every": 0,
}

SCAN_DEFAULTS = {
    "N": 256, "period": 32.0, "flow": "periodized_shear", "amplitude": 1.0, "data": "corpus:0",
    "mollifier": "gaussian", "delta_min": 1e-3, "delta_max": 10.0, "per_decade": 8,
    "p": 4.0, "q": 4.0, "r": 2.0,
}

COUNTEREXAMPLE_DEFAULTS = {
    "N": 1024, "period": 4.0, "xi_bar": (0.6, 0.8), "q": 1.0, "n_max": 3, "c1": 1.2, "c2": 1.8,
}


def _data(name: str, grid: TorusGrid, seed: int) -> ScalarField:
    if name.endswith(".mixf"):
        try:
            f = read_mixf(name)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read {name}: {exc}") from None
        if not f.grid.compatible(grid):
            raise ConfigError(f"{name} lives on a {f.grid.points_per_axis}-point grid of period {f.grid.period:g}")
        return f
    if name.startswith("corpus:"):
        try:
            i = int(name.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad corpus index in {name!r}") from None
        return smooth_corpus(grid, i + 1, seed)[i]
    if name in NAMED_DATA:
        return named_data(name, grid)
    raise ConfigError(f"unknown data {name!r}; expected {', '.join(NAMED_DATA)}, corpus:<i> or a .mixf path")


def _out_of_band(f: ScalarField) -> float:
    g = f.grid
    e = np.abs(f.spectrum) ** 2 * g.rfft_weights
    tot = float(e.sum())
    return 0.0 if tot == 0 else float(np.sqrt(e[~g.dealias_mask()].sum() / tot))


def _config(name: str, defaults: dict[str, Any], args: argparse.Namespace) -> ExperimentConfig:
    values = load_config(args.config)
    for item in args.set or []:
        extra = parse_config_text(item, "--set")
        dup = set(extra) & set(values)
        for k in dup:
            values.pop(k)
        values.update(extra)
    return ExperimentConfig.build(name, defaults, values, args.seed)


def _grid(cfg: ExperimentConfig) -> TorusGrid:
    try:
        return TorusGrid(2, cfg["N"], cfg["period"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config("simulate", SIMULATE_DEFAULTS, args)
    grid = _grid(cfg)
    try:
        u = make_flow(FlowSpec(cfg["flow"], cfg["amplitude"], cfg["switch_period"], cfg["wavenumber"]), grid)
        tr = ExponentTriple(cfg["p"], cfg["q"], cfg["r"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rho0 = _data(cfg["data"], grid, cfg.seed)
    dt = cfg["dt"] or min(admissible_dt(u), cfg["T"] / cfg["samples"])
    steps = int(math.ceil(cfg["T"] / dt - 1e-9))
    every = max(1, steps // cfg["samples"])
    mode = "exact_r2" if tr.r == 2.0 else "surrogate"
    dual = SobolevDualSpec(tr.r, None, mode)
    try:
        tj = solve(rho0, u, cfg["T"], SolverConfig(dt, nu=cfg["nu"], save_every=every, track_p=(2.0, tr.q), grad_p=tr.p),
                   probes={f"W-1,{tr.r:g}_{'exact' if mode == 'exact_r2' else 'surrogate'}": lambda f: sobolev_dual_norm(f, dual),
                           f"logd_L{tr.r:g}": lambda f: log_derivative_norm(f, tr.r)})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = [c for c in tj.diagnostics if c != "mean"]
    tj.write_csv(out / "trajectory.csv", cols)
    if cfg["dump_every"] > 0:
        (out / "fields").mkdir(exist_ok=True)
        for k in range(0, len(tj.states), cfg["dump_every"]):
            write_mixf(out / "fields" / f"rho_{k:04d}.mixf", tj.states[k])
        write_mixf(out / "fields" / "rho_final.mixf", tj.final)
    for flag in tj.flags:
        print(f"warning: {flag}", file=sys.stderr)
    print(f"simulate: {len(tj.times)} snapshots to {out / 'trajectory.csv'} (config {cfg.digest})")
    return 0


def cmd_commutator_scan(args: argparse.Namespace) -> int:
    cfg = _config("commutator_scan", SCAN_DEFAULTS, args)
    grid = _grid(cfg)
    try:
        u = make_flow(FlowSpec(cfg["flow"], cfg["amplitude"]), grid)
        tr = ExponentTriple(cfg["p"], cfg["q"], cfg["r"])
        deltas = log_delta_grid(cfg["delta_min"], cfg["delta_max"], cfg["per_decade"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rho = _data(cfg["data"], grid, cfg.seed)
    leak = _out_of_band(rho)
    if leak > 1e-8:
        print(f"warning: {leak:.2e} of the data lies outside the dealiased band; refine N", file=sys.stderr)
    scan = commutator_scan(u, rho, mollifier_by_name(cfg["mollifier"]), deltas, tr, workers=args.workers,
                           metadata={"config_digest": cfg.digest})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scan.write_csv(out / "scan.csv")
    print(f"commutator-scan: {len(deltas)} deltas to {out / 'scan.csv'} (config {cfg.digest})")
    return 0


def cmd_counterexample(args: argparse.Namespace) -> int:
    cfg = _config("counterexample", COUNTEREXAMPLE_DEFAULTS, args)
    grid = _grid(cfg)
    try:
        spec = CounterexampleSpec(tuple(cfg["xi_bar"]), cfg["q"], cfg["n_max"], cfg["c1"], cfg["c2"])
        rho, used = counterexample_density(spec, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    write_mixf(out / "fields" / "density.mixf", rho)
    with open(out / "terms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "delta", "amplitude", "omega1", "omega2"])
        for n, om in enumerate(used, start=1):
            w.writerow([n, repr(spec.delta(n)), repr(spec.amplitude(n)), repr(float(om[0])), repr(float(om[1]))])
    print(f"counterexample: {len(used)} terms to {out} (config {cfg.digest})")
    return 0


def cmd_norm(args: argparse.Namespace) -> int:
    try:
        f = read_mixf(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from None
    try:
        if args.kind == "dual":
            spec = SobolevDualSpec(args.r, args.L, "exact_r2" if args.r == 2.0 else "surrogate")
            value, label = sobolev_dual_norm(f, spec), spec.label
        elif args.kind == "besov":
            value, label = besov_norm(f, BesovSpec(args.s, args.p, args.q)), f"B^{args.s:g}_{args.p:g},{args.q:g}"
        else:
            value, label = log_derivative_norm(f, args.r), f"log-derivative L^{args.r:g}"
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(f"{label}\t{value!r}")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    name = ALIASES.get(args.command, args.command)
    defaults, fn = EXPERIMENTS[name]
    cfg = _config(name, dict(defaults), args)
    rep = fn(cfg, args.workers)
    out = write_report(rep, args.out, figures=not args.no_figures)
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f": {c.detail}" if c.detail else ""))
    for fit in rep.fits:
        if fit.flagged:
            print(f"note: fit {fit.name} has R^2 = {fit.r_squared:.3f} < 0.9 (flagged)")
    print(f"{name}: report in {out} (config {cfg.digest})")
    if not rep.passed:
        print("failed checks: " + ", ".join(c.name for c in rep.failures()), file=sys.stderr)
        return 1
    return 0


def _common(p: argparse.ArgumentParser, out: str) -> None:
    p.add_argument("--config", help="key = value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--out", default=out, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="threads for sweep points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixlab", description="Transport, mixing and commutator experiments on the torus.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="run the transport solver and write a trajectory CSV")
    _common(p, "out/simulate")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("commutator-scan", help="scan ||R_delta|| over a log delta grid")
    _common(p, "out/commutator-scan")
    p.set_defaults(func=cmd_commutator_scan)
    p = sub.add_parser("counterexample", help="build the lacunary counterexample density")
    _common(p, "out/counterexample")
    p.set_defaults(func=cmd_counterexample)
    p = sub.add_parser("norm", help="evaluate a norm of a MIXF field")
    p.add_argument("--kind", choices=("dual", "besov", "logd"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--r", type=float, default=2.0, help="exponent of the dual or log-derivative norm")
    p.add_argument("--L", type=float, default=None, help="length scale of the dual norm (default: period)")
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--q", type=float, default=2.0)
    p.set_defaults(func=cmd_norm)
    for name in EXPERIMENTS:
        alias = name.replace("_", "-")
        p = sub.add_parser(name, aliases=[alias] if alias != name else [], help=f"run the {alias} experiment")
        _common(p, f"out/{alias}")
        p.add_argument("--no-figures", action="store_true", help="skip PNG output")
        p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
