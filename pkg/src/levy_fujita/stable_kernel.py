"""Fundamental solution of ``u_t + Lambda^alpha u = 0`` and the linear semigroup.

``P_alpha(x, t) = (2 pi)^-N  int exp(i x.xi - t |xi|^alpha) dxi`` carries unit
mass.  Pointwise values use closed forms for alpha in {1, 2} and a graded
Gauss-Legendre quadrature of the radial Fourier inversion otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate as sint
from scipy import special

from .spectral_field import (
    Field,
    Grid,
    _check_alpha,
    apply_multiplier,
    lp_norm,
)

__all__ = [
    "KernelSpec",
    "QuadratureError",
    "kernel_value",
    "kernel_grid",
    "heat_semigroup_apply",
    "kernel_lq_constant",
    "decay_bound_check",
    "DecayCheck",
    "tail_coefficient",
    "tail_mass",
    "domain_length_for_tail",
]

# e^{-36.84} = 1e-16
_LOG_CUTOFF = math.log(1e16)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class QuadratureError(RuntimeError):
    def __init__(self, message, estimates):
        super().__init__(f"{message}; last estimates {estimates[0]!r}, {estimates[1]!r}")
        self.estimates = estimates


@dataclass(frozen=True)
class KernelSpec:
    alpha: float
    dim: int

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")


def _radius(spec: KernelSpec, x) -> float:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if spec.dim == 1:
        if a.size != 1:
            raise ValueError("1D kernel takes a scalar point")
        return abs(float(a[0]))
    if a.size != 2:
        raise ValueError("2D kernel takes a point (x1, x2)")
    return float(np.hypot(a[0], a[1]))


def _closed_form(alpha: float, dim: int, r: float, t: float) -> float:
    if alpha == 2.0:
        return (4.0 * math.pi * t) ** (-dim / 2) * math.exp(-r * r / (4.0 * t))
    c = 1.0 / math.pi if dim == 1 else 1.0 / (2.0 * math.pi)
    return c * t / (t * t + r * r) ** ((dim + 1) / 2)


def _panels(xi_max: float, r: float, level: int) -> tuple[np.ndarray, np.ndarray]:
    # geometric grading towards 0 absorbs the |xi|^alpha cusp of the symbol
    edges = xi_max * 0.5 ** np.arange(40)[::-1]
    edges = np.concatenate(([0.0], edges))
    a, b = edges[:-1], edges[1:]
    # at least one sub-panel per half oscillation of cos(r xi) / J0(r xi)
    counts = np.maximum(1, np.ceil((b - a) * r / math.pi)).astype(int) * 2**level
    lo = np.repeat(a, counts)
    width = np.repeat((b - a) / counts, counts)
    lo = lo + width * (np.arange(lo.size) - np.repeat(np.cumsum(counts) - counts, counts))
    nodes = lo[:, None] + 0.5 * width[:, None] * (_GL_NODES[None, :] + 1.0)
    weights = 0.5 * width[:, None] * _GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def _quadrature(alpha, dim, r, t, rtol=1e-9, max_refine=6) -> float:
    xi_max = (_LOG_CUTOFF / t) ** (1.0 / alpha)
    prev = None
    for level in range(max_refine + 1):
        xi, w = _panels(xi_max, r, level)
        decay = np.exp(-t * xi**alpha)
        if dim == 1:
            vals = np.cos(r * xi) * decay / math.pi
            scale = np.sum(w * decay) / math.pi
        else:
            vals = special.j0(r * xi) * xi * decay / (2.0 * math.pi)
            scale = np.sum(w * xi * decay) / (2.0 * math.pi)
        est = float(np.sum(w * vals))
        if prev is not None and abs(est - prev) <= rtol * abs(est) + 1e-15 * scale:
            return est
        prev_prev, prev = prev, est
    raise QuadratureError("Fourier inversion did not converge", (prev_prev, prev))


def kernel_value(spec: KernelSpec, x, t: float, method: str = "auto") -> float:
    """``P_alpha(x, t)`` at a single point.

    ``method="quadrature"`` forces the numerical inversion even where a
    closed form exists (used to cross-check the two).
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    r = _radius(spec, x)
    if method == "auto" and spec.alpha in (1.0, 2.0):
        return _closed_form(spec.alpha, spec.dim, r, t)
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    return _quadrature(spec.alpha, spec.dim, r, float(t))


def kernel_grid(spec: KernelSpec, grid: Grid, t: float) -> Field:
    """Torus-wrapped kernel: semigroup applied to the unit-mass discrete delta at 0."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if grid.dim != spec.dim:
        raise ValueError("grid and kernel dimensions differ")
    nyquist = math.pi / grid.spacing
    if math.exp(-t * nyquist**spec.alpha) >= 1e-14:
        warnings.warn(
            f"kernel at t={t} is under-resolved on spacing {grid.spacing:.3g} "
            f"(exp(-t*k_max^alpha) = {math.exp(-t * nyquist**spec.alpha):.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    delta = np.zeros(grid.shape)
    delta[(grid.points_per_axis // 2,) * grid.dim] = 1.0 / grid.cell_volume
    return heat_semigroup_apply(Field(grid, delta), t, spec.alpha)


def heat_semigroup_apply(f: Field, t: float, alpha: float) -> Field:
    """``P_alpha(t) * f`` on the torus."""
    _check_alpha(alpha)
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0:
        return Field(f.grid, f.values)
    return apply_multiplier(f, lambda k: np.exp(-t * k**alpha))


def tail_coefficient(alpha: float, dim: int) -> float:
    """``c`` in ``P_alpha(x, 1) ~ c |x|^(-N-alpha)`` as ``|x| -> inf`` (0 for alpha=2)."""
    _check_alpha(alpha)
    return (
        alpha
        * 2.0 ** (alpha - 1)
        * math.pi ** (-dim / 2 - 1)
        * math.sin(math.pi * alpha / 2)
        * math.gamma((dim + alpha) / 2)
        * math.gamma(alpha / 2)
    )


def _sphere_area(dim: int) -> float:
    return 2.0 if dim == 1 else 2.0 * math.pi


def tail_mass(alpha: float, dim: int, t: float, a: float) -> float:
    """Mass of ``P_alpha(t)`` outside the cube ``[-a, a]^N``.

    Exact for alpha=2 and for (alpha=1, N=1); otherwise the leading power-law
    tail outside the inscribed ball, which bounds the cube tail from above
    asymptotically.
    """
    if alpha == 2.0:
        inside = math.erf(a / (2.0 * math.sqrt(t)))
        return 1.0 - inside**dim
    if alpha == 1.0 and dim == 1:
        return 1.0 - 2.0 / math.pi * math.atan(a / t)
    c = tail_coefficient(alpha, dim)
    return _sphere_area(dim) * c * t / alpha * a ** (-alpha)


def domain_length_for_tail(alpha: float, dim: int, t_end: float, tail_budget: float = 1e-3) -> float:
    """Smallest ``L`` with the kernel mass outside ``[-L/4, L/4]^N`` at ``t_end`` within budget."""
    if not 0 < tail_budget < 1:
        raise ValueError("tail_budget must lie in (0, 1)")
    hi = max(1.0, t_end ** (1.0 / alpha))
    while tail_mass(alpha, dim, t_end, hi) > tail_budget:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if tail_mass(alpha, dim, t_end, mid) > tail_budget:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 4.0 * hi


@lru_cache(maxsize=None)
def kernel_lq_constant(alpha: float, dim: int, q: float) -> float:
    """``||P_alpha(., 1)||_q`` on R^N (sharp Young constant for the decay bound)."""
    _check_alpha(alpha)
    if q == math.inf:
        # P(0,1) = (2pi)^-N |S^{N-1}| Gamma(N/alpha) / alpha
        return _sphere_area(dim) * math.gamma(dim / alpha) / alpha / (2 * math.pi) ** dim
    if q < 1:
        raise ValueError("q must be >= 1")
    if q == 1:
        return 1.0
    if alpha == 2.0:
        return ((4 * math.pi) ** (-dim * q / 2) * (4 * math.pi / q) ** (dim / 2)) ** (1 / q)
    if q == 2:
        # Parseval: int P^2 = (2pi)^-N int exp(-2|xi|^alpha)
        val = _sphere_area(dim) * math.gamma(dim / alpha) / (alpha * 2 ** (dim / alpha))
        return (val / (2 * math.pi) ** dim) ** 0.5
    spec = KernelSpec(alpha, dim)
    r_max = 50.0
    area = _sphere_area(dim)

    def integrand(r):
        return area * r ** (dim - 1) * kernel_value(spec, r if dim == 1 else (r, 0.0), 1.0) ** q

    body = 0.0
    for a, b in ((0.0, 1.0), (1.0, 5.0), (5.0, r_max)):
        body += sint.quad(integrand, a, b, epsabs=0.0, epsrel=1e-10, limit=200)[0]
    c = tail_coefficient(alpha, dim)
    expo = q * (dim + alpha) - dim
    tail = area * c**q * r_max ** (-expo) / expo
    return (body + tail) ** (1 / q)


@dataclass(frozen=True)
class DecayCheck:
    lhs: float
    rhs: float
    initial_norm: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs and self.lhs <= self.initial_norm


def decay_bound_check(spec: KernelSpec, u0: Field, t: float, q: float) -> DecayCheck:
    """Compare ``||P(t)*u0||_q`` with ``C t^{-N(1-1/q)/alpha} ||u0||_1`` and ``||u0||_q``."""
    if not t > 0:
        raise ValueError("t must be positive")
    lhs = lp_norm(heat_semigroup_apply(u0, t, spec.alpha), q)
    inv_q = 0.0 if q == math.inf else 1.0 / q
    c = kernel_lq_constant(spec.alpha, spec.dim, q)
    rhs = c * t ** (-spec.dim * (1.0 - inv_q) / spec.alpha) * lp_norm(u0, 1)
    return DecayCheck(lhs, rhs, lp_norm(u0, q))

