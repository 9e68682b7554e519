"""Large-time mass behaviour: dichotomy classification and decay bounds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .spectral_field import Field, lp_norm
from .stable_kernel import KernelSpec, kernel_grid

__all__ = [
    "TRACE_COLUMNS",
    "MassTrace",
    "Evidence",
    "DichotomyVerdict",
    "critical_exponent",
    "decay_bound_H",
    "integral_of_H",
    "small_data_mass_bound",
    "estimate_mass_limit",
    "scaled_profile_gap",
    "mass_identity_residual",
]

TRACE_COLUMNS = ("t", "mass", "linf", "l2", "absorbed", "clamped", "dt")


def fmt(x: float) -> str:
    return format(float(x), ".15g")


@dataclass
class MassTrace:
    """Time series of run diagnostics, one row per recorded time."""

    rows: list[tuple[float, ...]] = field(default_factory=list)

    def append(self, t, mass, linf, l2, absorbed, clamped, dt) -> None:
        if self.rows and not t > self.rows[-1][0]:
            raise ValueError(f"trace times must increase strictly ({t} after {self.rows[-1][0]})")
        self.rows.append((float(t), float(mass), float(linf), float(l2),
                          float(absorbed), float(clamped), float(dt)))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def mass(self) -> np.ndarray:
        return self.column("mass")

    @property
    def linf(self) -> np.ndarray:
        return self.column("linf")

    @property
    def absorbed(self) -> np.ndarray:
        return self.column("absorbed")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([fmt(v) for v in r])

    @classmethod
    def read_csv(cls, path) -> "MassTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"{path}: unexpected trace header {header}")
            trace = cls()
            for row in reader:
                trace.append(*map(float, row))
        return trace

    @classmethod
    def from_function(cls, times, mass_fn) -> "MassTrace":
        """Synthetic trace with only the mass column populated."""
        trace = cls()
        for t in times:
            trace.append(t, mass_fn(t), 0.0, 0.0, 0.0, 0.0, 0.0)
        return trace


@dataclass(frozen=True)
class Evidence:
    plateau_rate: float
    fit_window: tuple[float, float]
    prior_rate: float = math.nan
    relative_loss: float = math.nan
    extrapolated: float = math.nan


@dataclass(frozen=True)
class DichotomyVerdict:
    regime: str  # positive_limit | vanishing | inconclusive
    M_inf_estimate: float
    evidence: Evidence
    diagnostic: str = ""


def critical_exponent(alpha: float, dim: int) -> float:
    """Fujita exponent ``1 + alpha/N``."""
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must lie in (0,2], got {alpha}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return 1.0 + alpha / dim


def decay_bound_H(t, p, alpha, dim, mass0, lp0, C_emp) -> float:
    """``min(C^p t^{-N(p-1)/alpha} M0^p, ||u0||_p^p)``: bound on ``||u(t)||_p^p``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not p > 1:
        raise ValueError("p must exceed 1")
    cap = lp0**p
    scale = C_emp * mass0
    if scale == 0:
        return 0.0
    if t == 0:
        return cap
    # compare in logs so tiny t cannot overflow the first branch
    log_first = p * math.log(scale) - dim * (p - 1) / alpha * math.log(t)
    if cap > 0 and log_first >= math.log(cap):
        return cap
    return min(math.exp(log_first), cap)


def integral_of_H(p, alpha, dim, mass0, lp0, C_emp) -> float:
    """Closed form of ``int_0^inf H dt``, split where the two branches of H meet."""
    a = dim * (p - 1) / alpha
    if a <= 1:
        raise ValueError(
            f"integral diverges: p={p} <= 1 + alpha/N = {critical_exponent(alpha, dim)}"
        )
    A = C_emp**p * mass0**p
    B = lp0**p
    t_star = (A / B) ** (1.0 / a)
    # int_0^t* B dt + int_t*^inf A t^-a dt, using A t*^-a = B
    return B * t_star * a / (a - 1.0)


def small_data_mass_bound(eps, p, alpha, dim, mass0, lp0, C_emp) -> float:
    """Certified lower bound on the limiting mass of the run started from ``eps*u0``.

    A positive value proves the limit is positive for that data.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    total = integral_of_H(p, alpha, dim, mass0, lp0, C_emp)
    return eps * (mass0 - eps ** (p - 1) * total)


def _loglog_slope(t, m) -> float:
    return float(np.polyfit(np.log(t), np.log(m), 1)[0])


def estimate_mass_limit(
    trace: MassTrace,
    slope_tol: float = 0.01,
    slope_floor: float = 0.05,
    loss_tol: float = 0.01,
) -> DichotomyVerdict:
    """Classify the large-time mass behaviour from the last two decades of a trace.

    ``positive_limit``: final-decade log-log slope below ``slope_tol`` in
    magnitude and relative mass loss across that decade below ``loss_tol``.
    ``vanishing``: slope at most ``-slope_floor`` in both of the last two
    decades (or the mass reached zero).  Anything else is ``inconclusive``.
    """
    t = trace.t
    m = trace.mass
    keep = t > 0
    t, m = t[keep], m[keep]
    nan_ev = Evidence(math.nan, (math.nan, math.nan))
    if t.size < 3:
        return DichotomyVerdict("inconclusive", float(m[-1]) if m.size else 0.0, nan_ev,
                                "trace too short")
    t_hi = t[-1]
    if t_hi / t[0] < 100:
        return DichotomyVerdict("inconclusive", float(m[-1]), nan_ev,
                                f"trace spans t_hi/t_lo = {t_hi / t[0]:.3g} < 100")
    if m[-1] <= 0:
        return DichotomyVerdict("vanishing", 0.0, Evidence(-math.inf, (t_hi / 10, t_hi)),
                                "mass reached zero")
    last = t >= t_hi / 10 * (1 - 1e-12)
    prior = (t >= t_hi / 100 * (1 - 1e-12)) & (t <= t_hi / 10 * (1 + 1e-12))
    if last.sum() < 3 or prior.sum() < 3:
        return DichotomyVerdict("inconclusive", float(m[-1]), nan_ev,
                                "fewer than three samples per decade")
    rate = _loglog_slope(t[last], m[last])
    prior_rate = _loglog_slope(t[prior], m[prior])
    m_start = m[last][0]
    loss = (m_start - m[-1]) / m_start
    # M = a + b/t over the final decade, evidence only
    design = np.column_stack([np.ones(last.sum()), 1.0 / t[last]])
    extrap = float(np.linalg.lstsq(design, m[last], rcond=None)[0][0])
    ev = Evidence(rate, (float(t_hi / 10), float(t_hi)), prior_rate, float(loss), extrap)
    if abs(rate) < slope_tol and loss < loss_tol:
        return DichotomyVerdict("positive_limit", float(m[-1]), ev)
    if rate <= -slope_floor and prior_rate <= -slope_floor:
        return DichotomyVerdict("vanishing", 0.0, ev)
    return DichotomyVerdict("inconclusive", float(m[-1]), ev,
                            f"final-decade rate {rate:.3g}, prior-decade rate {prior_rate:.3g}")


def scaled_profile_gap(u: Field, M_inf: float, t: float, q: float, alpha: float) -> float:
    """``t^{(N/alpha)(1-1/q)} ||u - M_inf P_alpha(t)||_q``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if not q >= 1:
        raise ValueError("q must be >= 1")
    dim = u.grid.dim
    profile = kernel_grid(KernelSpec(alpha, dim), u.grid, t)
    inv_q = 0.0 if q == math.inf else 1.0 / q
    return t ** (dim / alpha * (1.0 - inv_q)) * lp_norm(u - profile.scale(M_inf), q)


def mass_identity_residual(trace: MassTrace, lam: int = -1) -> float:
    """``max_t |M(t) - M(0) - lam * integral(t)| / max_t |M(t)|``.

    The ``absorbed`` column holds ``int_0^t int u^p``, so for ``lam = -1`` this
    is the loss balance ``M(t) = M(0) - absorbed(t)``.
    """
    m = trace.mass
    if m.size == 0 or m[0] == 0:
        raise ValueError("trace needs a first row with nonzero mass")
    return float(np.max(np.abs(m - m[0] - lam * trace.absorbed)) / np.max(np.abs(m)))
