"""Flat ``key = value`` run configuration files.

Recognised keys and defaults::

    alpha = 1.0              p = 2.0                lambda = -1
    dim = 1                  grid_points = 1024     domain_length = 64
    scheme = ETD2            dt_init = 1e-3         dt_min = 1e-10
    dt_max = 1.0             safety_theta = 0.1     blowup_threshold = 1e8
    t_end = 1.0              clamp_tol = auto       seed = 0
    initial_condition = gaussian(1, 1)

plus ``tail_budget`` (1e-3) and ``grid_spacing`` (0.25), consulted when
``domain_length`` / ``grid_points`` are ``auto``; ``epsilon_scale`` (1.0),
which multiplies the initial data; ``snapshot_times`` (comma list);
``trace_start`` (auto = dt_init) and ``max_steps``.

``initial_condition`` is one of ``gaussian(mass, width)`` (width is the
standard deviation), ``constant(c)`` or ``indicator(mass, half_width)``.
Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields, replace
from typing import Optional, Union

import numpy as np

from .solver import SolverConfig
from .spectral_field import Field, Grid
from .stable_kernel import domain_length_for_tail

__all__ = ["ConfigError", "InitialCondition", "RunConfigFile", "parse_config", "parse_initial_condition"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialCondition:
    kind: str
    params: tuple

    def text(self) -> str:
        return f"{self.kind}({', '.join(_num(v) for v in self.params)})"

    def build(self, grid: Grid, scale: float = 1.0) -> Field:
        dim = grid.dim
        r = grid.radius
        if self.kind == "gaussian":
            mass, width = self.params
            norm = mass / (width * math.sqrt(2 * math.pi)) ** dim
            values = norm * np.exp(-(r**2) / (2 * width**2))
        elif self.kind == "constant":
            values = np.full(grid.shape, self.params[0])
        else:
            mass, hw = self.params
            inside = np.ones(grid.shape, dtype=bool)
            for x in grid.coordinates():
                inside &= np.abs(x) <= hw
            count = int(inside.sum())
            if count == 0:
                raise ValueError(f"indicator half_width {hw} covers no grid node")
            # normalise by the covered cells so the discrete mass is exact
            values = np.where(inside, mass / (count * grid.cell_volume), 0.0)
        return Field(grid, scale * values)


_ARITY = {"gaussian": 2, "constant": 1, "indicator": 2}


def parse_initial_condition(text: str) -> InitialCondition:
    m = re.fullmatch(r"\s*(\w+)\s*\((.*)\)\s*", text)
    if not m or m.group(1) not in _ARITY:
        raise ValueError(
            f"initial_condition must be gaussian(mass, width), constant(c) or "
            f"indicator(mass, half_width), got {text!r}"
        )
    kind = m.group(1)
    try:
        params = tuple(float(a) for a in m.group(2).split(","))
    except ValueError:
        raise ValueError(f"non-numeric argument in {text!r}") from None
    if len(params) != _ARITY[kind]:
        raise ValueError(f"{kind} takes {_ARITY[kind]} argument(s), got {len(params)}")
    if any(not math.isfinite(v) for v in params):
        raise ValueError("initial_condition arguments must be finite")
    if kind == "constant" and params[0] < 0:
        raise ValueError("constant initial data must be nonnegative")
    if kind != "constant" and (params[0] <= 0 or params[1] <= 0):
        raise ValueError(f"{kind} mass and width must be positive")
    return InitialCondition(kind, params)


def _num(v) -> str:
    return repr(float(v))


Auto = Optional  # None encodes "auto"


@dataclass(frozen=True)
class RunConfigFile:
    alpha: float = 1.0
    p: float = 2.0
    lam: int = -1
    dim: int = 1
    grid_points: Auto[int] = 1024
    domain_length: Auto[float] = 64.0
    scheme: str = "ETD2"
    dt_init: float = 1e-3
    dt_min: float = 1e-10
    dt_max: float = 1.0
    safety_theta: float = 0.1
    blowup_threshold: float = 1e8
    t_end: float = 1.0
    clamp_tol: Auto[float] = None
    initial_condition: InitialCondition = InitialCondition("gaussian", (1.0, 1.0))
    seed: int = 0
    tail_budget: float = 1e-3
    grid_spacing: float = 0.25
    epsilon_scale: float = 1.0
    snapshot_times: tuple = ()
    trace_start: Auto[float] = None
    max_steps: int = 1_000_000

    def with_values(self, **kw) -> "RunConfigFile":
        return replace(self, **kw)

    def grid(self) -> Grid:
        length = self.domain_length
        if length is None:
            length = domain_length_for_tail(self.alpha, self.dim, self.t_end, self.tail_budget)
        if self.grid_points is None:
            return Grid.from_spacing(self.dim, self.grid_spacing, length)
        return Grid(self.dim, self.grid_points, length)

    def initial_field(self, grid: Optional[Grid] = None) -> Field:
        return self.initial_condition.build(grid or self.grid(), self.epsilon_scale)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            alpha=self.alpha, p=self.p, lam=self.lam, scheme=self.scheme,
            dt_init=self.dt_init, dt_min=self.dt_min, dt_max=self.dt_max,
            safety_theta=self.safety_theta, blowup_threshold=self.blowup_threshold,
            t_end=self.t_end, snapshot_times=self.snapshot_times, clamp_tol=self.clamp_tol,
            trace_start=self.trace_start, max_steps=self.max_steps,
        )

    def to_text(self) -> str:
        """Canonical serialisation; ``parse_config(cfg.to_text()) == cfg``."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            key = "lambda" if f.name == "lam" else f.name
            if v is None:
                s = "auto"
            elif isinstance(v, InitialCondition):
                s = v.text()
            elif isinstance(v, tuple):
                s = ", ".join(_num(x) for x in v)
            elif isinstance(v, str):
                s = v
            elif isinstance(v, (bool, int)) and not isinstance(v, float):
                s = str(int(v))
            else:
                s = _num(v)
            lines.append(f"{key} = {s}")
        return "\n".join(lines) + "\n"


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _int(v: str) -> int:
    x = float(v)
    if not x.is_integer():
        raise ValueError("must be an integer")
    return int(x)


def _positive(conv):
    def check(v):
        x = conv(v)
        if not x > 0:
            raise ValueError("must be positive")
        return x
    return check


def _auto(conv):
    def check(v):
        return None if v.strip().lower() == "auto" else conv(v)
    return check


def _alpha(v):
    x = _float(v)
    if not 0 < x <= 2:
        raise ValueError("alpha must lie in (0,2]")
    return x


def _p(v):
    x = _float(v)
    if not x > 1:
        raise ValueError("p must exceed 1")
    return x


def _lambda(v):
    x = _int(v)
    if x not in (-1, 1):
        raise ValueError("lambda must be -1 or 1")
    return x


def _dim(v):
    x = _int(v)
    if x not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    return x


def _grid_points(v):
    x = _int(v)
    if x < 8 or x & (x - 1):
        raise ValueError("grid_points must be a power of two >= 8")
    return x


def _scheme(v):
    s = v.strip().upper()
    if s not in ("ETD1", "ETD2"):
        raise ValueError("scheme must be ETD1 or ETD2")
    return s


def _budget(v):
    x = _float(v)
    if not 0 < x < 1:
        raise ValueError("tail_budget must lie in (0,1)")
    return x


def _eps(v):
    x = _float(v)
    if not 0 < x <= 1:
        raise ValueError("epsilon_scale must lie in (0,1]")
    return x


def _times(v):
    if not v.strip():
        return ()
    xs = tuple(_float(s) for s in v.split(","))
    if any(x < 0 for x in xs):
        raise ValueError("snapshot_times must be nonnegative")
    return xs


def _nonneg(v):
    x = _float(v)
    if x < 0:
        raise ValueError("must be nonnegative")
    return x


PARSERS = {
    "alpha": ("alpha", _alpha),
    "p": ("p", _p),
    "lambda": ("lam", _lambda),
    "dim": ("dim", _dim),
    "grid_points": ("grid_points", _auto(_grid_points)),
    "domain_length": ("domain_length", _auto(_positive(_float))),
    "scheme": ("scheme", _scheme),
    "dt_init": ("dt_init", _positive(_float)),
    "dt_min": ("dt_min", _positive(_float)),
    "dt_max": ("dt_max", _positive(_float)),
    "safety_theta": ("safety_theta", _positive(_float)),
    "blowup_threshold": ("blowup_threshold", _positive(_float)),
    "t_end": ("t_end", _positive(_float)),
    "clamp_tol": ("clamp_tol", _auto(_nonneg)),
    "initial_condition": ("initial_condition", parse_initial_condition),
    "seed": ("seed", _int),
    "tail_budget": ("tail_budget", _budget),
    "grid_spacing": ("grid_spacing", _positive(_float)),
    "epsilon_scale": ("epsilon_scale", _eps),
    "snapshot_times": ("snapshot_times", _times),
    "trace_start": ("trace_start", _auto(_positive(_float))),
    "max_steps": ("max_steps", _positive(_int)),
}


def split_lines(text: str):
    """Yield ``(lineno, key, value)`` for every assignment line."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        yield lineno, key, value


def parse_assignments(pairs, parsers=PARSERS) -> dict:
    values = {}
    seen = {}
    for lineno, key, value in pairs:
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        if key not in parsers:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        seen[key] = lineno
        attr, conv = parsers[key]
        try:
            values[attr] = conv(value)
        except ValueError as exc:
            msg = str(exc)
            if not msg.startswith(key):
                msg = f"{key} {msg}"
            raise ConfigError(f"line {lineno}: {msg}") from None
    return values


def parse_config(text: str) -> RunConfigFile:
    """Validate a configuration file; errors cite the offending line."""
    values = parse_assignments(split_lines(text))
    cfg = RunConfigFile(**values)
    if not cfg.dt_min <= cfg.dt_init <= cfg.dt_max:
        raise ConfigError("need dt_min <= dt_init <= dt_max")
    return cfg
