"""
Command-line front end.

    twomode-om sweep    --g 20 --gamma 0.2 --grid -1:1:401 --out spectrum.csv
    twomode-om thermal  --g 20 --gamma 0.001 --nth 2 --with-analytic --out thermal.csv
    twomode-om tau      --g 8 --gamma 0.02 --delta-over-g 0 --pair aa --out delayed.csv
    twomode-om compare  --g 20 --gamma 0.002 --omega 0.002
    twomode-om validate
    twomode-om --config spectrum.csv --out again.csv     # rerun from a CSV header

Rates are in units of kappa. Detunings are given in units of g, or of kappa
when g = 0. Exit codes: 0 success, 1 total failure, 2 validation failure or
rejected input.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import io
import math
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analytic
from .errors import TwoModeError
from .io import GridSpec, RunConfig, load_config, write_table
from .model import SystemParams, liouvillian
from .regression import PAIRS, default_tau_grid, g2_tau, parse_pair
from .steady import SteadyObservables, steady_state, sweep
from .validation import run_suite

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2

COMMANDS = ("sweep", "thermal", "tau", "compare", "validate")
SWEEP_COLUMNS = ("n_a_over_n0", "n_s_over_n0", "n_R_over_n0", "g2_aa", "g2_ss", "g2_RR", "g2_tot",
                 "trunc_tail", "flags")
DEFAULT_TOLERANCES = {"n_rel": 0.02, "g2_rel": 0.05, "g2_abs": 0.02}


class UsageError(Exception):
    pass


def _dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"--dims needs three comma-separated integers, got {text!r}")
    return tuple(int(p) for p in parts)


def _grid(text: str) -> str:
    try:
        return str(GridSpec.parse(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_common(p: argparse.ArgumentParser, *, gamma_default: Optional[float] = None, g_required: bool = True):
    p.add_argument("--g", type=float, required=g_required, default=None, help="coupling g/kappa")
    p.add_argument("--gamma", type=float, required=gamma_default is None, default=gamma_default,
                   help="mechanical damping gamma/kappa")
    p.add_argument("--omega", type=float, default=0.01, help="drive Omega/kappa (default 0.01)")
    p.add_argument("--nth", type=float, default=0.0, help="thermal phonon occupation")
    p.add_argument("--dims", type=_dims, default=None, help="Fock cutoffs a,s,b")
    p.add_argument("--allow-strong-drive", action="store_true", help="lift the Omega/kappa <= 0.1 guard")
    p.add_argument("--out", type=Path, default=None, help="output CSV (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twomode-om", description=__doc__.split("\n\n")[0].strip(),
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path, default=None,
                    help="rerun from a JSON config or from the header of a CSV written by this tool")
    ap.add_argument("--out", dest="top_out", type=Path, default=None, help="output path when rerunning a config")
    ap.add_argument("--workers", type=int, default=1, help="processes for detuning sweeps")
    sub = ap.add_subparsers(dest="command")

    for name, helptext in (("sweep", "steady-state detuning sweep"),
                           ("thermal", "detuning sweep at finite N_th"),
                           ("compare", "numeric sweep against the closed forms")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--grid", type=_grid, default="-1:1:401",
                       help="detuning grid min:max:points in units of g (kappa when g = 0)")
        if name != "compare":
            p.add_argument("--with-analytic", action="store_true",
                           help="also write the closed-form table next to --out")
        else:
            p.add_argument("--tol-n", type=float, default=DEFAULT_TOLERANCES["n_rel"])
            p.add_argument("--tol-g2", type=float, default=DEFAULT_TOLERANCES["g2_rel"])
            p.add_argument("--tol-abs", type=float, default=DEFAULT_TOLERANCES["g2_abs"],
                           help="absolute g2 tolerance near antiresonance zeros")

    p = sub.add_parser("tau", help="delayed correlation g2(tau)")
    _add_common(p)
    p.add_argument("--delta-over-g", type=float, default=None)
    p.add_argument("--delta-over-kappa", type=float, default=None, help="detuning when g = 0")
    p.add_argument("--pair", choices=PAIRS, default="aa")
    p.add_argument("--tau-max", type=float, default=None, help="largest delay in 1/kappa (default 5/gamma)")
    p.add_argument("--with-analytic", action="store_true", help="add the closed-form g2 column (aa, ss)")

    p = sub.add_parser("validate", help="run the invariant suite")
    _add_common(p, gamma_default=0.0, g_required=False)
    p.add_argument("--seed", type=int, default=1234)
    return ap


def config_from_args(args) -> RunConfig:
    cmd = args.command
    common = dict(command=cmd, g=args.g if args.g is not None else 0.0, gamma=args.gamma, omega=args.omega,
                  nth=args.nth, dims=args.dims, allow_strong_drive=args.allow_strong_drive)
    if cmd in ("sweep", "thermal", "compare"):
        extra = dict(grid=args.grid, with_analytic=getattr(args, "with_analytic", False))
        if cmd == "compare":
            extra["tolerances"] = {"n_rel": args.tol_n, "g2_rel": args.tol_g2, "g2_abs": args.tol_abs}
        return RunConfig(**common, **extra)
    if cmd == "tau":
        g = common["g"]
        if g > 0 and args.delta_over_kappa is not None:
            raise UsageError("with g > 0 give the detuning as --delta-over-g")
        if g == 0 and args.delta_over_g not in (None, 0.0):
            raise UsageError("with g = 0 give the detuning as --delta-over-kappa")
        delta = args.delta_over_g if g > 0 else args.delta_over_kappa
        return RunConfig(**common, delta=float(delta or 0.0), pair=args.pair, tau_max=args.tau_max,
                         with_analytic=args.with_analytic)
    return RunConfig(**common, seed=args.seed)


def _sweep_rows(cfg: RunConfig, obs: Sequence[SteadyObservables], ratios: Sequence[float], n0: float):
    for r, o in zip(ratios, obs):
        yield (r, o.n_a / n0, o.n_s / n0, o.n_R / n0, o.g2_aa_0, o.g2_ss_0, o.g2_RR_0, o.g2_tot_0,
               o.trunc_tail, ";".join(o.flags))


def _analytic_point(params: SystemParams) -> SteadyObservables:
    if params.n_th > 0:
        obs = analytic.thermal_observables(params)
    else:
        obs = analytic.closed_form_observables(params)
    return dataclasses.replace(obs, trunc_tail=float("nan"), residual=float("nan"))


@contextlib.contextmanager
def _output(path: Optional[Path]):
    if path is None:
        yield sys.stdout
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        yield fh


def _delta_column(cfg: RunConfig) -> str:
    return "delta_over_g" if cfg.g > 0 else "delta_over_kappa"


def _sibling(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}.{tag}{path.suffix or '.csv'}")


def run_sweep(cfg: RunConfig, out: Optional[Path], workers: int = 1) -> int:
    if cfg.command == "thermal" and cfg.nth <= 0:
        raise UsageError("thermal needs --nth > 0")
    if cfg.with_analytic and out is None:
        raise UsageError("--with-analytic writes a second table and needs --out")
    base = cfg.params()
    ratios = GridSpec.parse(cfg.grid).values()
    scale = cfg.g if cfg.g > 0 else 1.0
    rows = sweep(base, [r * scale for r in ratios], workers=workers)
    failed = sum("solver_failure" in o.flags for o in rows)
    columns = (_delta_column(cfg),) + SWEEP_COLUMNS
    residuals = [o.residual for o in rows if not math.isnan(o.residual)]
    extra = {"dims": list(base.resolved_dims), "n0": base.n0,
             "max_residual": max(residuals) if residuals else float("nan"), "failed_points": failed}
    with _output(out) as fh:
        write_table(fh, cfg, columns, _sweep_rows(cfg, rows, ratios, base.n0), extra=extra)
    if cfg.with_analytic:
        ana = [_analytic_point(base.replace(delta=r * scale)) for r in ratios]
        with _output(_sibling(out, "analytic")) as fh:
            write_table(fh, cfg, columns, _sweep_rows(cfg, ana, ratios, base.n0), source="analytic",
                        extra={"n0": base.n0})
    if failed == len(rows):
        print("error: every sweep point failed", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _deviation(num: float, ana: float, rel_tol: float, abs_tol: Optional[float]) -> tuple[float, bool]:
    if math.isnan(num) or math.isnan(ana):
        return float("nan"), math.isnan(num) and math.isnan(ana)
    rel = abs(num - ana) / abs(ana) if ana != 0 else math.inf
    ok = rel <= rel_tol or (abs_tol is not None and abs(num - ana) <= abs_tol)
    return rel, ok


def run_compare(cfg: RunConfig, out: Optional[Path], workers: int = 1) -> int:
    tol = {**DEFAULT_TOLERANCES, **cfg.tolerances}
    base = cfg.params()
    ratios = GridSpec.parse(cfg.grid).values()
    scale = cfg.g if cfg.g > 0 else 1.0
    numeric = sweep(base, [r * scale for r in ratios], workers=workers)
    quantities = (("n_a", "n_rel", None), ("n_s", "n_rel", None),
                  ("g2_aa_0", "g2_rel", "g2_abs"), ("g2_ss_0", "g2_rel", "g2_abs"))
    columns = [_delta_column(cfg)]
    for q, _, _ in quantities:
        columns += [f"{q}_numeric", f"{q}_analytic", f"{q}_rel_dev"]
    worst = {q: (0.0, None) for q, _, _ in quantities}
    failures = {q: 0 for q, _, _ in quantities}
    rows = []
    for r, o in zip(ratios, numeric):
        a = _analytic_point(base.replace(delta=r * scale))
        row = [r]
        for q, rel_key, abs_key in quantities:
            nv, av = getattr(o, q), getattr(a, q)
            if q.startswith("n_"):
                nv, av = nv / base.n0, av / base.n0
            dev, ok = _deviation(nv, av, tol[rel_key], tol[abs_key] if abs_key else None)
            if not ok:
                failures[q] += 1
            if not math.isnan(dev) and dev > worst[q][0]:
                worst[q] = (dev, r)
            row += [nv, av, dev]
        rows.append(row)
    with _output(out) as fh:
        write_table(fh, cfg, columns, rows, source="numeric+analytic", extra={"n0": base.n0})
    report = sys.stderr if out is None else sys.stdout
    for q, _, _ in quantities:
        dev, where = worst[q]
        status = "PASS" if failures[q] == 0 else "FAIL"
        loc = f" at {_delta_column(cfg)}={where:.4g}" if where is not None else ""
        print(f"{status}  {q:<8} max rel dev {dev:.3e}{loc}, {failures[q]} point(s) outside tolerance", file=report)
    if all(o.flags and "solver_failure" in o.flags for o in numeric):
        return EXIT_FAILURE
    return EXIT_OK if not any(failures.values()) else EXIT_INVALID


def run_tau(cfg: RunConfig, out: Optional[Path], workers: int = 1) -> int:
    first, second = parse_pair(cfg.pair)
    if cfg.with_analytic and (first != second or first not in ("a", "s")):
        raise UsageError("--with-analytic is available for the aa and ss pairs only")
    params = cfg.params(cfg.delta)
    taus = default_tau_grid(params, cfg.tau_max)
    try:
        L = liouvillian(params)
        rho = steady_state(L)
        series = g2_tau(L, rho, first, second, taus)
    except TwoModeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    columns = ["tau_kappa", "g2", "bound1_violated", "bound2_violated"]
    cols = [series.tau_grid, series.values, series.bound_violations.bound1, series.bound_violations.bound2]
    if cfg.with_analytic:
        ana = analytic.conditional_g2_tau(params, first, taus)
        columns.append("g2_analytic")
        cols.append(ana.values)
    rows = ([float(c[k]) if c.dtype != bool else bool(c[k]) for c in cols] for k in range(taus.size))
    extra = {"dims": list(params.resolved_dims), "g2_zero": series.g2_zero,
             "points": int(taus.size)}
    with _output(out) as fh:
        write_table(fh, cfg, columns, rows, extra=extra)
    return EXIT_OK


def run_validate(cfg: RunConfig, out: Optional[Path], workers: int = 1) -> int:
    # constructing the params applies the weak-drive guard to the requested omega
    cfg.params()
    seed = cfg.seed if cfg.seed is not None else 1234
    buf = io.StringIO()

    def report(r):
        print(r.line(), flush=True)
        buf.write(r.line() + "\n")

    results = run_suite(cfg.dims, omega=cfg.omega, seed=seed, report=report)
    failed = [r for r in results if not r.passed]
    summary = f"{len(results) - len(failed)}/{len(results)} invariants passed"
    print(summary)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(buf.getvalue() + summary + "\n")
    return EXIT_OK if not failed else EXIT_INVALID


RUNNERS = {"sweep": run_sweep, "thermal": run_sweep, "compare": run_compare, "tau": run_tau,
           "validate": run_validate}


_NEGATIVE_VALUE = re.compile(r"^-[0-9.]")


def _attach_negative_values(argv: Sequence[str]) -> list[str]:
    """Rewrite ``--opt -1:1:401`` as ``--opt=-1:1:401`` so argparse keeps negative values."""
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE_VALUE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_attach_negative_values(sys.argv[1:] if argv is None else argv))
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            if args.command and args.command != cfg.command:
                raise UsageError(f"config is for {cfg.command!r}, not {args.command!r}")
            out = args.top_out or getattr(args, "out", None)
        elif args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_INVALID
        else:
            cfg = config_from_args(args)
            out = getattr(args, "out", None) or args.top_out
        return RUNNERS[cfg.command](cfg, out, max(1, args.workers))
    except (UsageError, ValueError, OSError, TwoModeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
