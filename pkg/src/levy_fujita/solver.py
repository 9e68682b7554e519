"""Exponential time differencing for ``u_t = -Lambda^alpha u + lambda u^p``.

The linear part is integrated exactly in Fourier space; the pointwise
nonlinearity is explicit.  With ``z = -dt |xi|^alpha``::

    ETD1:  v = e^z u + lambda dt phi1(z) N(u)
    ETD2:  a = e^z u + lambda dt phi1(z) N(u)
           v = a + lambda dt phi2(z) (N(a) - N(u))

where ``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2``.  At the
zero mode ``phi1 = 1`` and ``phi2 = 1/2``, so the mass changes by exactly
``lambda dt int N(u)`` (ETD1) or the trapezoid ``lambda dt (int N(u) + int N(a))/2``
(ETD2); the absorbed-mass integral is accumulated with the same sums, which
makes the discrete mass identity hold to roundoff.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .asymptotics import MassTrace
from .spectral_field import Field, Grid, UnderResolvedError, _power_values, dealias_mask, integrate, lp_norm

__all__ = [
    "SolverConfig",
    "StepState",
    "RunResult",
    "phi1",
    "phi2",
    "etd_step",
    "adaptive_dt",
    "run",
    "detect_blowup",
    "ode_reference",
]

log = logging.getLogger(__name__)

COMPLETED = "completed"
BLOWN_UP = "blown_up"
UNDER_RESOLVED = "under_resolved"


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    p: float
    lam: int = -1
    scheme: str = "ETD2"
    dt_init: float = 1e-3
    dt_min: float = 1e-10
    dt_max: float = 1.0
    safety_theta: float = 0.1
    blowup_threshold: float = 1e8
    t_end: float = 1.0
    snapshot_times: tuple = ()
    clamp_tol: Optional[float] = None
    adaptive: bool = True
    trace_ratio: float = 1.1
    trace_start: Optional[float] = None
    max_steps: int = 1_000_000
    dealias: bool = True

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0,2], got {self.alpha}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.lam not in (-1, 0, 1):
            raise ValueError(f"lambda must be -1 or +1 (0 for the linear flow), got {self.lam}")
        if self.scheme not in ("ETD1", "ETD2"):
            raise ValueError(f"scheme must be ETD1 or ETD2, got {self.scheme!r}")
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.safety_theta > 0:
            raise ValueError("safety_theta must be positive")
        if not self.trace_ratio > 1:
            raise ValueError("trace_ratio must exceed 1")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(s) for s in self.snapshot_times)))

    @property
    def integer_power(self) -> bool:
        return float(self.p).is_integer()


@dataclass(frozen=True)
class StepState:
    time: float
    u: Field
    absorbed_integral: float = 0.0
    clamped_mass_total: float = 0.0


@dataclass
class RunResult:
    outcome: str
    trace: MassTrace
    blowup_time_estimate: Optional[float]
    snapshots: list = field(default_factory=list)
    config: Optional[SolverConfig] = None
    initial: Optional[Field] = None
    diagnostic: str = ""
    steps: int = 0


def phi1(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    out = np.expm1(zs) / zs
    zz = z[small]
    out[small] = 1.0 + zz / 2.0 + zz * zz / 6.0 + zz**3 / 24.0
    return out


def phi2(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.1
    zs = np.where(small, 1.0, z)
    out = (np.expm1(zs) - zs) / (zs * zs)
    zz = z[small]
    # sum_k z^k / (k+2)!, Horner form
    acc = np.zeros_like(zz)
    for k in range(12, -1, -1):
        acc = acc * zz + 1.0 / math.factorial(k + 2)
    out[small] = acc
    return out


class _Stepper:
    """Array-level ETD stepper; caches per-grid operators."""

    def __init__(self, grid: Grid, cfg: SolverConfig, clamp_tol: float):
        self.grid = grid
        self.cfg = cfg
        self.clamp_tol = clamp_tol
        self.k_alpha = grid.kmag_r**cfg.alpha
        self.mask = dealias_mask(grid) if (cfg.dealias and cfg.integer_power) else None
        self.cell = grid.cell_volume
        self._coef_dt = None

    def coefficients(self, dt):
        if self._coef_dt != dt:
            z = -dt * self.k_alpha
            self._coef = (np.exp(z), phi1(z), phi2(z) if self.cfg.scheme == "ETD2" else None)
            self._coef_dt = dt
        return self._coef

    def nonlinear(self, u, uh, tol):
        """Return (N spectral, int N, clamped mass, min value, bad).

        Integer powers are formed from the 2/3-truncated field without
        clamping, so the product is exactly dealiased; ``u`` is then ignored
        and rebuilt from ``uh``.  Other powers clamp small negatives in
        physical space.
        """
        g = self.grid
        if self.mask is not None:
            v = g.irfft(uh * self.mask)
            n_phys = v * v if self.cfg.p == 2 else v**int(self.cfg.p)
            nh = g.rfft(n_phys) * self.mask
            return nh, self.cell * float(np.sum(n_phys)), 0.0, math.inf, False
        n_phys, clamped, vmin, bad = _power_values(u, self.cfg.p, tol, self.cell)
        return g.rfft(n_phys), self.cell * float(np.sum(n_phys)), clamped, vmin, bad

    def step(self, u, uh, dt, tol):
        """Advance one step.  Returns (u, uh, absorbed increment, clamped, vmin, bad).

        ``vmin`` covers the new solution and, for clamped powers, the stage values.
        """
        g = self.grid
        lam = self.cfg.lam
        E, P1, P2 = self.coefficients(dt)
        if lam == 0:
            vh = E * uh
            v = g.irfft(vh)
            return v, vh, 0.0, 0.0, float(v.min()), False
        nh0, i0, c0, m0, bad0 = self.nonlinear(u, uh, tol)
        ah = E * uh + (lam * dt) * P1 * nh0
        if self.cfg.scheme == "ETD1":
            vh, inc, clamped, vmin, bad = ah, dt * i0, c0, m0, bad0
        else:
            a = g.irfft(ah) if self.mask is None else None
            nh1, i1, c1, m1, bad1 = self.nonlinear(a, ah, tol)
            vh = ah + (lam * dt) * P2 * (nh1 - nh0)
            inc, clamped, vmin, bad = 0.5 * dt * (i0 + i1), c0, min(m0, m1), bad0 or bad1
        v = g.irfft(vh)
        vmin = min(vmin, float(v.min()))
        return v, vh, inc, clamped, vmin, bad or vmin < -tol


def _default_clamp_tol(cfg: SolverConfig, u0: Field) -> float:
    if cfg.clamp_tol is not None:
        return cfg.clamp_tol
    return 1e-10 * lp_norm(u0, math.inf)


def etd_step(state: StepState, cfg: SolverConfig, dt: float) -> StepState:
    """One ETD1/ETD2 step from ``state`` (see module docstring)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = state.u
    if not u.is_finite():
        raise ValueError("state is not finite")
    tol = cfg.clamp_tol if cfg.clamp_tol is not None else 1e-10 * lp_norm(u, math.inf)
    stepper = _Stepper(u.grid, cfg, tol)
    v, _, inc, clamped, vmin, bad = stepper.step(u.values, u.grid.rfft(u.values), dt, tol)
    if bad:
        raise UnderResolvedError(f"solution minimum {vmin:.3e} below -clamp_tol")
    return StepState(state.time + dt, Field(u.grid, v),
                     state.absorbed_integral + inc, state.clamped_mass_total + clamped)


def _raw_dt(linf: float, cfg: SolverConfig) -> float:
    if not cfg.adaptive:
        return cfg.dt_init
    if linf <= 0 or cfg.lam == 0:
        return cfg.dt_max
    return cfg.safety_theta / linf ** (cfg.p - 1)


def adaptive_dt(state: StepState, cfg: SolverConfig) -> float:
    """``clamp(theta / ||u||_inf^(p-1), dt_min, dt_max)``.

    Raises :class:`UnderResolvedError` if the nonlinear time scale drops
    below ``dt_min`` before the sup norm reaches the blow-up threshold.
    """
    linf = lp_norm(state.u, math.inf)
    dt = _raw_dt(linf, cfg)
    if dt < cfg.dt_min and linf < cfg.blowup_threshold:
        raise UnderResolvedError(
            f"step {dt:.3e} below dt_min={cfg.dt_min:.3e} at ||u||_inf={linf:.3e}"
        )
    return min(max(dt, cfg.dt_min), cfg.dt_max)


def ode_reference(c: float, p: float, lam: int, t: float) -> float:
    """Solution of ``y' = lam y^p``, ``y(0) = c``: spatially constant data."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    if c == 0:
        return 0.0
    base = c ** (1 - p) - lam * (p - 1) * t
    if base <= 0:
        raise ValueError(f"t={t} is at or past the blow-up time {c ** (1 - p) / (p - 1)}")
    return base ** (-1.0 / (p - 1))


def detect_blowup(trace: MassTrace, cfg: SolverConfig) -> tuple[str, Optional[float]]:
    """Classify a finished trace and estimate the blow-up time.

    The estimate extrapolates ``||u||_inf^{-(p-1)}`` linearly to zero over the
    last ten trace rows, which is exact for the spatially constant ODE.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    t = trace.t
    linf = trace.linf
    dts = trace.column("dt")
    last = linf[-1]
    blown = (not np.isfinite(last)) or last > cfg.blowup_threshold
    if not blown and dts[-1] <= cfg.dt_min * (1 + 1e-9) and len(trace) >= 2:
        ref = linf[max(0, len(trace) - 11)]
        blown = ref > 0 and last >= 10 * ref
    if not blown:
        if t[-1] >= cfg.t_end * (1 - 1e-12):
            return COMPLETED, None
        return UNDER_RESOLVED, None
    good = np.isfinite(linf) & (linf > 0)
    tt, yy = t[good][-10:], linf[good][-10:] ** (-(cfg.p - 1))
    t_last = float(t[-1])
    if tt.size >= 2:
        slope, icpt = np.polyfit(tt, yy, 1)
        est = -icpt / slope if slope < 0 else t_last
    else:
        est = t_last
    return BLOWN_UP, float(min(max(est, t_last), t_last + cfg.dt_max))


def _schedule(cfg: SolverConfig) -> np.ndarray:
    start = cfg.trace_start if cfg.trace_start is not None else cfg.dt_init
    start = min(start, cfg.t_end)
    k = math.ceil(math.log(cfg.t_end / start) / math.log(cfg.trace_ratio)) if cfg.t_end > start else 0
    times = start * cfg.trace_ratio ** np.arange(k + 1)
    times = times[times < cfg.t_end * (1 - 1e-12)]
    extra = [s for s in cfg.snapshot_times if 0 < s <= cfg.t_end]
    times = np.unique(np.concatenate([times, extra, [cfg.t_end]]))
    return times


def run(cfg: SolverConfig, u0: Field, progress=None) -> RunResult:
    """Integrate from ``u0`` to ``cfg.t_end`` or until blow-up.

    Trace rows are written at geometric times (ratio ``trace_ratio``), at
    every snapshot time, and whenever the sup norm has grown by the same
    ratio since the previous row (which resolves the approach to blow-up).
    """
    if not u0.is_finite():
        raise ValueError("initial data must be finite")
    grid = u0.grid
    tol = _default_clamp_tol(cfg, u0)
    u_sup0 = lp_norm(u0, math.inf)
    if float(np.min(u0.values)) < -tol:
        raise ValueError("initial data must be nonnegative")
    if u_sup0 == 0:
        raise ValueError("initial data must not vanish identically")
    if not cfg.blowup_threshold > u_sup0:
        raise ValueError("blowup_threshold must exceed ||u0||_inf")

    stepper = _Stepper(grid, cfg, tol)
    stops = _schedule(cfg)
    snap_set = set(cfg.snapshot_times)
    u = np.array(u0.values)
    uh = grid.rfft(u)
    t = 0.0
    absorbed = 0.0
    clamped = 0.0
    trace = MassTrace()
    snapshots = []
    if 0.0 in snap_set:
        snapshots.append((0.0, Field(grid, u)))
    cell = grid.cell_volume

    def record(time, dt, linf):
        trace.append(time, cell * float(np.sum(u)), linf,
                     math.sqrt(cell * float(np.sum(u * u))), absorbed, clamped, dt)

    record(0.0, 0.0, u_sup0)
    last_linf = u_sup0
    linf = u_sup0
    outcome = None
    diagnostic = ""
    steps = 0
    i_stop = 0
    dt = 0.0
    while i_stop < len(stops):
        if steps >= cfg.max_steps:
            outcome, diagnostic = UNDER_RESOLVED, f"step budget {cfg.max_steps} exhausted at t={t:.6g}"
            break
        raw = _raw_dt(linf, cfg)
        if raw < cfg.dt_min:
            if linf < cfg.blowup_threshold:
                diagnostic = f"dt {raw:.3e} below dt_min at t={t:.6g}, ||u||_inf={linf:.3e}"
            if trace.rows[-1][0] < t:
                record(t, cfg.dt_min, linf)
            break
        dt = min(raw, cfg.dt_max)
        target = stops[i_stop]
        landed = t + dt >= target * (1 - 1e-12)
        if landed:
            dt = target - t
        step_tol = tol * max(1.0, linf / u_sup0)
        u, uh, inc, c_step, vmin, bad = stepper.step(u, uh, dt, step_tol)
        steps += 1
        t = target if landed else t + dt
        absorbed += inc
        clamped += c_step
        linf = float(np.max(np.abs(u)))
        finite = np.isfinite(linf)
        if bad:
            outcome = UNDER_RESOLVED
            diagnostic = f"solution minimum {vmin:.3e} below -clamp_tol at t={t:.6g}"
            record(t, dt, linf)
            break
        if not finite or linf > cfg.blowup_threshold:
            record(t, dt, linf if finite else math.inf)
            break
        if landed:
            record(t, dt, linf)
            last_linf = linf
            if t in snap_set:
                snapshots.append((t, Field(grid, u)))
            i_stop += 1
            if progress is not None:
                progress(t, trace)
        elif linf >= last_linf * cfg.trace_ratio:
            record(t, dt, linf)
            last_linf = linf

    verdict, t_est = detect_blowup(trace, cfg)
    if outcome is None:
        outcome = verdict
    elif verdict == BLOWN_UP:
        outcome = verdict
    if outcome != BLOWN_UP:
        t_est = None
    if outcome == UNDER_RESOLVED and not diagnostic:
        diagnostic = f"run stopped at t={t:.6g} before t_end"
    log.info("run finished: %s after %d steps at t=%.6g", outcome, steps, t)
    return RunResult(outcome, trace, t_est, snapshots, cfg, u0, diagnostic, steps)

