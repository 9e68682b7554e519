"""Rescaled test functions ``phi1(x)^l phi2(t)^l`` and the integrals they generate.

``phi1(x) = psi(|x| / (B R))`` and ``phi2(t) = psi(t / R^alpha)`` with ``psi`` a
smooth nonincreasing cutoff (1 on [0, 1], 0 on [2, inf)) and
``l = (2p - 1)/(p - 1)``, so that ``1/p + 1/(l - 1) = 1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .asymptotics import critical_exponent
from .solver import RunResult
from .spectral_field import Field, Grid, fractional_laplacian

__all__ = [
    "psi",
    "psi_derivative",
    "ell",
    "young_constant",
    "TestFunctionConfig",
    "spatial_cutoff",
    "testfn_grid",
    "composite_inequality_violation",
    "ScalingFit",
    "scaling_law_fit",
    "budget_snapshot_times",
    "BudgetRow",
    "critical_budget",
]

TIME_PANELS = 256


def _g(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def psi(r):
    """Smooth cutoff: 1 on [0,1], 0 on [2,inf), ``g(2-r)/(g(2-r)+g(r-1))`` between."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("psi is defined for r >= 0")
    a = _g(2.0 - r)
    b = _g(r - 1.0)
    out = a / (a + b)  # a + b > 0 everywhere
    return out if out.ndim else float(out)


def psi_derivative(r):
    r = np.asarray(r, dtype=float)
    a = _g(2.0 - r)
    b = _g(r - 1.0)
    mid = (r > 1) & (r < 2)
    out = np.zeros_like(r)
    rm = r[mid]
    out[mid] = -a[mid] * b[mid] * (1 / (2 - rm) ** 2 + 1 / (rm - 1) ** 2) / (a[mid] + b[mid]) ** 2
    return out if out.ndim else float(out)


def ell(p: float) -> float:
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    return (2 * p - 1) / (p - 1)


def young_constant(p: float, eps: float) -> float:
    """Sharp ``C(eps)`` in ``ab <= eps a^p + C(eps) b^{p/(p-1)}``."""
    return (p - 1) * p ** (-p / (p - 1)) * eps ** (-1 / (p - 1))


@dataclass(frozen=True)
class TestFunctionConfig:
    __test__ = False  # not a pytest class

    alpha: float
    p: float
    R: float = 1.0
    B: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0,2]")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not (self.R > 0 and self.B > 0):
            raise ValueError("R and B must be positive")

    @property
    def ell(self) -> float:
        return ell(self.p)

    @property
    def scaling_exponent(self) -> float:
        """``N + alpha - alpha (l - 1)``; nonpositive iff ``p <= 1 + alpha/N``."""
        return self.dim + self.alpha - self.alpha * (self.ell - 1)


def spatial_cutoff(grid: Grid, cfg: TestFunctionConfig) -> Field:
    return Field(grid, psi(grid.radius / (cfg.B * cfg.R)))


def testfn_grid(cfg: TestFunctionConfig, points_per_axis: int) -> Grid:
    """Torus of side ``8 B R``, four times the support radius."""
    return Grid(cfg.dim, points_per_axis, 8.0 * cfg.B * cfg.R)


def _check_resolution(grid: Grid, cfg: TestFunctionConfig) -> None:
    width = cfg.B * cfg.R
    if width / grid.spacing < 16:
        need = 16 * grid.length / width
        raise ValueError(
            f"transition annulus has {width / grid.spacing:.1f} < 16 points; "
            f"need at least {2 ** math.ceil(math.log2(need))} points per axis"
        )
    if 2 * width > grid.length / 2:
        raise ValueError("cutoff support 2BR does not fit inside the torus")


def composite_inequality_violation(grid: Grid, cfg: TestFunctionConfig, ell_value=None) -> float:
    """``max_x [Lambda^a(phi1^l) - l phi1^(l-1) Lambda^a phi1]``; theory says ``<= 0``."""
    _check_resolution(grid, cfg)
    l = cfg.ell if ell_value is None else float(ell_value)
    if l < 1:
        raise ValueError("l must be >= 1")
    phi = spatial_cutoff(grid, cfg)
    lhs = fractional_laplacian(Field(grid, phi.values**l), cfg.alpha).values
    rhs = l * phi.values ** (l - 1) * fractional_laplacian(phi, cfg.alpha).values
    return float(np.max(lhs - rhs))


def _time_nodes(R: float, alpha: float):
    T = 2.0 * R**alpha
    dt = T / TIME_PANELS
    return (np.arange(TIME_PANELS) + 0.5) * dt, dt


def budget_snapshot_times(R: float, alpha: float) -> tuple[float, ...]:
    """Midpoints of the time quadrature on ``[0, 2 R^alpha]``; pass as snapshot times."""
    return tuple(_time_nodes(R, alpha)[0].tolist())


@dataclass(frozen=True)
class ScalingFit:
    fitted_exponent: float
    theory: float
    rows: list  # (R, integral_space_term, integral_time_term, total)
    residual: float


def _scaling_terms(cfg: TestFunctionConfig, n: int):
    grid = testfn_grid(cfg, n)
    l = cfg.ell
    phi = spatial_cutoff(grid, cfg).values
    lap = fractional_laplacian(Field(grid, phi), cfg.alpha).values
    cell = grid.cell_volume
    t, dt = _time_nodes(cfg.R, cfg.alpha)
    ra = cfg.R**cfg.alpha
    phi2 = psi(t / ra)
    dphi2 = psi_derivative(t / ra) / ra
    space = cell * np.sum(phi * np.abs(lap) ** (l - 1)) * dt * np.sum(phi2**l)
    time = cell * np.sum(phi**l) * dt * np.sum(phi2 * np.abs(dphi2) ** (l - 1))
    return float(space), float(time)


def scaling_law_fit(cfg_base: TestFunctionConfig, R_list, points_per_axis=None) -> ScalingFit:
    """Log-log slope in ``R`` of the right side of the test-function estimate.

    The right side is ``int phi1 phi2^l |Lambda^a phi1|^(l-1) + int phi1^l phi2 |d_t phi2|^(l-1)``
    over ``Omega_1 x Omega_2``; theory predicts ``R^(N + a - a(l-1))``.
    """
    R_list = sorted(float(r) for r in R_list)
    if len(R_list) < 5 or math.log10(R_list[-1] / R_list[0]) < 1.5:
        raise ValueError("R_list needs at least 5 values spanning 1.5 decades")
    n = points_per_axis or (1024 if cfg_base.dim == 1 else 256)
    rows = []
    for R in R_list:
        s, t = _scaling_terms(replace(cfg_base, R=R), n)
        rows.append((R, s, t, s + t))
    logR = np.log([r[0] for r in rows])
    logT = np.log([r[3] for r in rows])
    slope, icpt = np.polyfit(logR, logT, 1)
    residual = float(np.max(np.abs(logT - (slope * logR + icpt))))
    if residual > 1e-6:
        warnings.warn(f"scaling fit residual {residual:.2e} exceeds 1e-6", RuntimeWarning)
    return ScalingFit(float(slope), cfg_base.scaling_exponent, rows, residual)


@dataclass(frozen=True)
class BudgetRow:
    B: float
    lhs: float
    rhs_term1: float
    rhs_term2: float

    @property
    def rhs(self) -> float:
        return self.rhs_term1 + self.rhs_term2


def critical_budget(run: RunResult, cfg: TestFunctionConfig, eps=None, B_list=(1.0,)) -> list[BudgetRow]:
    """Both sides of the critical-case estimate, per dilation ``B``.

    ``lhs = int u0 phi(.,0) - int int u^p phi - eps l int int_{Omega_2 x Omega_1} u^p``;
    ``rhs_term1 = l (int_{Omega_3} int_{Omega_1} u^p)^(1/p) (int int phi1^(l pb) phi2^((l-1) pb) |d_t phi2|^pb)^(1/pb)``;
    ``rhs_term2 = l C(eps) int int phi2^(l pb) phi1^((l-1) pb) |Lambda^a phi1|^pb``
    with ``pb = p/(p-1)``.  ``eps`` defaults to ``1/(2 l)``.
    """
    rc = run.config
    if rc is None or run.initial is None:
        raise ValueError("run carries no configuration or initial data")
    if rc.lam != -1 or run.outcome != "completed":
        raise ValueError("critical_budget needs a completed absorbing (lambda=-1) run")
    grid = run.initial.grid
    pc = critical_exponent(rc.alpha, grid.dim)
    if abs(rc.p - pc) > 1e-12 or abs(cfg.p - rc.p) > 1e-12 or cfg.alpha != rc.alpha or cfg.dim != grid.dim:
        raise ValueError(f"run and test function must share alpha, dim and p = p_c = {pc}")
    l = cfg.ell
    p = cfg.p
    pb = p / (p - 1)
    eps = 1.0 / (2.0 * l) if eps is None else float(eps)
    t_nodes, dt = _time_nodes(cfg.R, cfg.alpha)
    snaps = {}
    for ts, f in run.snapshots:
        snaps[round(ts / dt, 6)] = f
    fields = []
    for t in t_nodes:
        f = snaps.get(round(t / dt, 6))
        if f is None:
            raise ValueError(
                f"snapshot at t={t:.6g} missing; run with snapshot_times=budget_snapshot_times(R, alpha)"
            )
        fields.append(np.maximum(f.values, 0.0) ** p)
    ra = cfg.R**cfg.alpha
    phi2 = psi(t_nodes / ra)
    dphi2 = np.abs(psi_derivative(t_nodes / ra)) / ra
    in_omega3 = t_nodes >= ra
    cell = grid.cell_volume
    rows = []
    for B in B_list:
        c = replace(cfg, B=float(B))
        if 2 * c.B * c.R > grid.length / 2:
            raise ValueError(f"Omega_1 for B={B} does not fit inside the run domain")
        phi1 = psi(grid.radius / (c.B * c.R))
        omega1 = grid.radius <= 2 * c.B * c.R
        w_phi = phi1**l
        up_phi = np.array([cell * np.sum(up * w_phi) for up in fields])
        up_omega = np.array([cell * np.sum(up[omega1]) for up in fields])
        initial = cell * np.sum(run.initial.values * w_phi)
        weighted = dt * np.sum(phi2**l * up_phi)
        unweighted = dt * np.sum(up_omega)
        lhs = initial - weighted - eps * l * unweighted
        u3 = dt * np.sum(up_omega[in_omega3])
        t1 = cell * np.sum(phi1 ** (l * pb)) * dt * np.sum(phi2 ** ((l - 1) * pb) * dphi2**pb)
        term1 = l * u3 ** (1 / p) * t1 ** (1 / pb)
        aux = Grid.from_spacing(grid.dim, grid.spacing, 8 * c.B * c.R)
        aphi = psi(aux.radius / (c.B * c.R))
        lap = fractional_laplacian(Field(aux, aphi), c.alpha).values
        k_space = aux.cell_volume * np.sum(aphi ** ((l - 1) * pb) * np.abs(lap) ** pb)
        k_time = dt * np.sum(phi2 ** (l * pb))
        term2 = l * young_constant(p, eps) * k_space * k_time
        rows.append(BudgetRow(float(B), float(lhs), float(term1), float(term2)))
    return rows
