"""Command-line entry point: ``levy-fujita <subcommand> ...``.

Exit codes: 0 success (simulate: completed), 1 bad input, 2 simulate ended
in blow-up, 3 simulate was under-resolved.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from .asymptotics import MassTrace, estimate_mass_limit, fmt, scaled_profile_gap
from .campaign import parse_campaign, run_campaign, summarize
from .config import ConfigError, parse_config
from .snapshot import read_snapshot, write_snapshot
from .solver import BLOWN_UP, COMPLETED, UNDER_RESOLVED, run
from .spectral_field import Grid
from .stable_kernel import KernelSpec, kernel_grid, kernel_value
from .testfn import TestFunctionConfig, budget_snapshot_times, critical_budget, scaling_law_fit

EXIT_CODES = {COMPLETED: 0, BLOWN_UP: 2, UNDER_RESOLVED: 3}
REPORT_COLUMNS = ("regime", "M_inf", "plateau_rate", "t_lo", "t_hi")


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])


def cmd_kernel(args) -> int:
    spec = KernelSpec(args.alpha, args.dim)
    if args.grid:
        grid = Grid(args.dim, args.n, args.L)
        write_snapshot(args.out, kernel_grid(spec, grid, args.t), args.t)
        print(f"wrote {args.out}")
        return 0
    if args.x is None:
        raise ConfigError("--x is required unless --grid is given")
    x = args.x if args.dim > 1 else args.x[0]
    if args.dim > 1 and len(args.x) != args.dim:
        raise ConfigError(f"--x needs {args.dim} coordinates")
    print(format(kernel_value(spec, x, args.t), ".15g"))
    return 0


def cmd_simulate(args) -> int:
    cfg = parse_config(Path(args.config).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    result = run(cfg.solver_config(), cfg.initial_field())
    result.trace.write_csv(out / "trace.csv")
    for i, (t, f) in enumerate(result.snapshots):
        write_snapshot(out / f"snap_{i}.lfk", f, t)
    msg = f"{result.outcome} after {result.steps} steps"
    if result.blowup_time_estimate is not None:
        msg += f", blow-up time estimate {result.blowup_time_estimate:.15g}"
    if result.diagnostic:
        msg += f" ({result.diagnostic})"
    print(msg)
    return EXIT_CODES[result.outcome]


def cmd_campaign(args) -> int:
    spec = parse_campaign(Path(args.spec).read_text())
    if args.max_parallel is not None:
        spec = type(spec)(spec.base, spec.sweeps, spec.output_dir, args.max_parallel, spec.max_runs)
    out = args.out or spec.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir")
    run_campaign(spec, out, force=args.force)
    print(summarize(out).format(), end="")
    return 0


def cmd_testfn(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = TestFunctionConfig(args.alpha, args.p, dim=args.dim)
    fit = scaling_law_fit(base, args.R_list, args.points)
    _write_csv(out / "scaling.csv", ("R", "integral_space_term", "integral_time_term", "total"), fit.rows)
    print(f"fitted exponent {fit.fitted_exponent:.6g}, theory {fit.theory:.6g}")
    if args.B_list:
        rows = _budget_rows(args, base)
        _write_csv(out / "budget.csv", ("B", "lhs", "rhs_term1", "rhs_term2"),
                   [(r.B, r.lhs, r.rhs_term1, r.rhs_term2) for r in rows])
        for r in rows:
            print(f"B={r.B:g}: lhs {r.lhs:.6g}, rhs {r.rhs:.6g}")
    return 0


def _budget_rows(args, base: TestFunctionConfig):
    """Simulate the critical absorbing problem and evaluate the budget table."""
    from .config import RunConfigFile

    R = args.budget_R
    b_min, b_max = min(args.B_list), max(args.B_list)
    spacing = b_min * R / 16
    grid = Grid.from_spacing(args.dim, spacing, 8 * b_max * R)
    t_end = 2 * R**args.alpha
    cfg = RunConfigFile(alpha=args.alpha, p=args.p, lam=-1, dim=args.dim,
                        grid_points=grid.points_per_axis, domain_length=grid.length,
                        t_end=t_end, dt_max=t_end / 256,
                        snapshot_times=budget_snapshot_times(R, args.alpha))
    result = run(cfg.solver_config(), cfg.initial_field())
    if result.outcome != COMPLETED:
        raise ConfigError(f"budget run ended {result.outcome}: {result.diagnostic}")
    tf = TestFunctionConfig(args.alpha, args.p, R=R, dim=args.dim)
    return critical_budget(result, tf, args.eps, args.B_list)


def cmd_report(args) -> int:
    run_dir = Path(args.in_dir)
    trace = MassTrace.read_csv(run_dir / "trace.csv")
    cfg = parse_config((run_dir / "config.txt").read_text())
    verdict = estimate_mass_limit(trace)
    ev = verdict.evidence
    qs = args.q
    snaps = sorted((read_snapshot(p) for p in run_dir.glob("snap_*.lfk")), key=lambda s: s[1])
    snaps = [s for s in snaps if s[1] > 0]
    gaps = {}
    for q in qs:
        gaps[q] = (scaled_profile_gap(snaps[-1][0], verdict.M_inf_estimate, snaps[-1][1], q, cfg.alpha)
                   if snaps else math.nan)
    gap_cols = [f"gap_q{q:g}_last" for q in sorted(set(qs) | {1.0, 2.0})]
    row = [verdict.regime, verdict.M_inf_estimate, ev.plateau_rate, ev.fit_window[0], ev.fit_window[1]]
    row += [gaps.get(float(c[5:-5]), math.nan) for c in gap_cols]
    header = REPORT_COLUMNS + tuple(gap_cols)
    _write_csv(run_dir / "report.csv", header, [row])
    for name, value in zip(header, row):
        print(f"{name:>14}  {value if isinstance(value, str) else fmt(value)}")
    if verdict.diagnostic:
        print(f"note: {verdict.diagnostic}")
    return 0


def cmd_summarize(args) -> int:
    print(summarize(args.dir).format(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levy-fujita", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", help="stable kernel value or gridded snapshot")
    k.add_argument("--alpha", type=float, required=True)
    k.add_argument("--dim", type=int, default=1)
    k.add_argument("--t", type=float, required=True)
    k.add_argument("--x", type=_floats)
    k.add_argument("--grid", action="store_true", help="write an LFK1 snapshot instead")
    k.add_argument("--n", type=int, default=512, help="points per axis for --grid")
    k.add_argument("--L", type=float, default=40.0, help="torus side for --grid")
    k.add_argument("--out", default="kernel.lfk")
    k.set_defaults(func=cmd_kernel)

    s = sub.add_parser("simulate", help="run one configuration file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("campaign", help="run a parameter sweep")
    c.add_argument("--spec", required=True)
    c.add_argument("--out")
    c.add_argument("--max-parallel", type=int)
    c.add_argument("--force", action="store_true", help="rerun finished runs")
    c.set_defaults(func=cmd_campaign)

    t = sub.add_parser("testfn", help="test-function scaling law and critical budget")
    t.add_argument("--alpha", type=float, required=True)
    t.add_argument("--p", type=float, required=True)
    t.add_argument("--dim", type=int, default=1)
    t.add_argument("--R-list", dest="R_list", type=_floats, required=True)
    t.add_argument("--B-list", dest="B_list", type=_floats)
    t.add_argument("--budget-R", dest="budget_R", type=float, default=4.0)
    t.add_argument("--eps", type=float, help="Young parameter (default 1/(2l))")
    t.add_argument("--points", type=int, help="points per axis for the scaling grids")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_testfn)

    r = sub.add_parser("report", help="dichotomy verdict for a simulate output directory")
    r.add_argument("--in", dest="in_dir", required=True)
    r.add_argument("--q", type=_floats, default=[1.0, 2.0])
    r.set_defaults(func=cmd_report)

    m = sub.add_parser("summarize", help="print a campaign summary table")
    m.add_argument("dir")
    m.set_defaults(func=cmd_summarize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
