"""Parameter sweeps over run configurations, with resumable per-run directories.

A campaign file holds the ordinary run keys (the base configuration) plus::

    sweep.alpha = 0.5, 1, 1.5      # any subset of alpha, p, lambda, epsilon_scale
    max_parallel = 4
    max_runs = 512                 # refuse larger cartesian products
    output_dir = results           # optional; the CLI --out flag wins

Each run lives in ``<output_dir>/<hash>/`` where the hash is taken over the
canonical text of its configuration, so rerunning a campaign skips finished runs.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .asymptotics import critical_exponent, estimate_mass_limit, fmt, mass_identity_residual
from .config import PARSERS, ConfigError, RunConfigFile, parse_assignments, split_lines
from .solver import BLOWN_UP, COMPLETED, run

__all__ = [
    "SUMMARY_COLUMNS",
    "CampaignSpec",
    "parse_campaign",
    "run_hash",
    "execute_run",
    "run_campaign",
    "SummaryTable",
    "summarize",
]

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("alpha", "p", "lambda", "eps", "p_critical", "regime", "M_inf", "blowup_T", "outcome")
RESULT_COLUMNS = SUMMARY_COLUMNS + ("mass_residual", "steps", "diagnostic")
SWEEPABLE = {"alpha": "alpha", "p": "p", "lambda": "lam", "epsilon_scale": "epsilon_scale"}


@dataclass(frozen=True)
class CampaignSpec:
    base: RunConfigFile = RunConfigFile()
    sweeps: tuple = ()  # ((attribute, (values...)), ...) in file order
    output_dir: Optional[Path] = None
    max_parallel: int = 1
    max_runs: int = 512

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be >= 1")
        size = math.prod(len(v) for _, v in self.sweeps)
        if size > self.max_runs:
            raise ConfigError(f"campaign has {size} runs, above the limit of {self.max_runs}")

    def configs(self) -> list[RunConfigFile]:
        """Cartesian product of the sweeps; the base alone when there are none."""
        names = [a for a, _ in self.sweeps]
        out = []
        for combo in itertools.product(*(v for _, v in self.sweeps)):
            out.append(self.base.with_values(**dict(zip(names, combo))))
        return out


def _list_of(conv):
    def parse(v):
        items = [s for s in v.split(",") if s.strip()]
        if not items:
            raise ValueError("needs at least one value")
        return tuple(conv(s) for s in items)
    return parse


def _pos_int(v):
    x = float(v)
    if not x.is_integer() or x < 1:
        raise ValueError("must be a positive integer")
    return int(x)


def parse_campaign(text: str) -> CampaignSpec:
    parsers = dict(PARSERS)
    for key, attr in SWEEPABLE.items():
        parsers[f"sweep.{key}"] = (f"sweep:{attr}", _list_of(PARSERS[key][1]))
    parsers["max_parallel"] = ("max_parallel", _pos_int)
    parsers["max_runs"] = ("max_runs", _pos_int)
    parsers["output_dir"] = ("output_dir", lambda v: Path(v.strip()))
    values = parse_assignments(split_lines(text), parsers)
    sweeps = tuple((k.split(":", 1)[1], values.pop(k)) for k in list(values) if k.startswith("sweep:"))
    extra = {k: values.pop(k) for k in ("max_parallel", "max_runs", "output_dir") if k in values}
    base = RunConfigFile(**values)
    if not base.dt_min <= base.dt_init <= base.dt_max:
        raise ConfigError("need dt_min <= dt_init <= dt_max")
    return CampaignSpec(base=base, sweeps=sweeps, **extra)


def run_hash(cfg: RunConfigFile) -> str:
    return hashlib.sha256(cfg.to_text().encode()).hexdigest()[:16]


def _result_row(cfg: RunConfigFile, outcome, regime, m_inf, blowup_t, residual, steps, diagnostic):
    return {
        "alpha": fmt(cfg.alpha),
        "p": fmt(cfg.p),
        "lambda": str(cfg.lam),
        "eps": fmt(cfg.epsilon_scale),
        "p_critical": fmt(critical_exponent(cfg.alpha, cfg.dim)),
        "regime": regime,
        "M_inf": fmt(m_inf),
        "blowup_T": fmt(blowup_t),
        "outcome": outcome,
        "mass_residual": fmt(residual),
        "steps": str(steps),
        "diagnostic": diagnostic,
    }


def _write_rows(path: Path, columns, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    os.replace(tmp, path)


def _read_result(path: Path) -> Optional[dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError:
        return None
    if len(rows) != 1 or set(rows[0]) != set(RESULT_COLUMNS):
        return None
    return rows[0]


def execute_run(cfg: RunConfigFile, run_dir, force: bool = False) -> dict:
    """Run one configuration into ``run_dir`` and return its result row.

    A finished directory is reused unless ``force``; failures become an
    ``error`` row rather than propagating.
    """
    run_dir = Path(run_dir)
    result_path = run_dir / "result.csv"
    if not force:
        cached = _read_result(result_path)
        if cached is not None:
            return cached
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.to_text())
    try:
        result = run(cfg.solver_config(), cfg.initial_field())
        result.trace.write_csv(run_dir / "trace.csv")
        residual = mass_identity_residual(result.trace, cfg.lam)
        m_inf = blowup_t = math.nan
        if result.outcome == BLOWN_UP:
            regime, blowup_t = "blow_up", result.blowup_time_estimate
        elif result.outcome != COMPLETED:
            regime = "inconclusive"
        elif cfg.lam == -1:
            verdict = estimate_mass_limit(result.trace)
            regime, m_inf = verdict.regime, verdict.M_inf_estimate
        else:
            regime = "global"
        row = _result_row(cfg, result.outcome, regime, m_inf, blowup_t, residual,
                          result.steps, result.diagnostic)
    except Exception as exc:  # isolate the failure to this run's row
        (run_dir / "error.txt").write_text(traceback.format_exc())
        row = _result_row(cfg, "error", "error", math.nan, math.nan, math.nan, 0,
                          f"{type(exc).__name__}: {exc}")
    _write_rows(result_path, RESULT_COLUMNS, [row])
    return row


def _execute_text(cfg_text: str, run_dir: str, force: bool) -> dict:
    from .config import parse_config

    return execute_run(parse_config(cfg_text), run_dir, force)


def run_campaign(spec: CampaignSpec, output_dir=None, force: bool = False) -> list[dict]:
    """Execute every run of ``spec`` and write ``summary.csv``; rows follow sweep order."""
    out = Path(output_dir if output_dir is not None else (spec.output_dir or "."))
    out.mkdir(parents=True, exist_ok=True)
    configs = spec.configs()
    dirs = [out / run_hash(c) for c in configs]
    if spec.max_parallel == 1 or len(configs) == 1:
        rows = [execute_run(c, d, force) for c, d in zip(configs, dirs)]
    else:
        with ProcessPoolExecutor(max_workers=spec.max_parallel) as pool:
            futures = [pool.submit(_execute_text, c.to_text(), str(d), force) for c, d in zip(configs, dirs)]
            rows = [f.result() for f in futures]
    _write_rows(out / "summary.csv", SUMMARY_COLUMNS, rows)
    return rows


GROUPS = (("p < p_c", lambda d: d < 0), ("p = p_c", lambda d: d == 0), ("p > p_c", lambda d: d > 0))


@dataclass
class SummaryTable:
    rows: list = field(default_factory=list)  # dicts keyed by SUMMARY_COLUMNS

    def groups(self) -> dict:
        out = {name: [] for name, _ in GROUPS}
        out["error"] = []
        for r in self.rows:
            if r["regime"] == "error":
                out["error"].append(r)
                continue
            diff = float(r["p"]) - float(r["p_critical"])
            diff = 0.0 if abs(diff) < 1e-12 else diff
            for name, test in GROUPS:
                if test(diff):
                    out[name].append(r)
        return out

    def format(self) -> str:
        widths = [max([len(c)] + [len(str(r.get(c, ""))) for r in self.rows]) for c in SUMMARY_COLUMNS]
        line = lambda vals: "  ".join(str(v).ljust(w) for v, w in zip(vals, widths)).rstrip()
        lines = [line(SUMMARY_COLUMNS)]
        for name, rows in self.groups().items():
            if rows:
                lines.append(f"-- {name} ({len(rows)})")
                lines.extend(line([r[c] for c in SUMMARY_COLUMNS]) for r in rows)
        return "\n".join(lines) + "\n"


def _parse_summary_row(raw: list) -> dict:
    if len(raw) != len(SUMMARY_COLUMNS):
        raise ValueError("wrong field count")
    row = dict(zip(SUMMARY_COLUMNS, raw))
    for key in ("alpha", "p", "eps", "p_critical", "M_inf", "blowup_T"):
        float(row[key])
    int(row["lambda"])
    return row


def summarize(directory) -> SummaryTable:
    """Read ``summary.csv`` from a campaign directory.

    A missing file gives an empty table; unreadable rows are kept as ``error`` rows.
    """
    path = Path(directory) / "summary.csv"
    table = SummaryTable()
    if not path.exists():
        return table
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and tuple(header) != SUMMARY_COLUMNS:
            log.warning("%s: unexpected header %s", path, header)
        for raw in reader:
            if not raw:
                continue
            try:
                table.rows.append(_parse_summary_row(raw))
            except ValueError:
                bad = dict.fromkeys(SUMMARY_COLUMNS, "")
                bad.update(zip(SUMMARY_COLUMNS, raw))
                bad["regime"] = "error"
                table.rows.append(bad)
    return table
