"""Periodic grids, sampled fields and Fourier-space operators.

Fourier convention
------------------
A field on the torus ``[-L/2, L/2)^N`` sampled at ``x_j = -L/2 + j*h`` is
expanded as ``f(x) = sum_k fhat_k exp(i xi_k . x)`` with ``xi_k = 2*pi*k/L``
(``k`` in standard FFT ordering).  Hence::

    fhat_k = (1/L^N) * integral f(x) exp(-i xi_k . x) dx
           ~ (1/n^N) * sum_j f_j exp(-i xi_k . x_j)

so the zero mode is the mean ``(1/L^N) * integral f`` and Parseval reads
``h^N sum f^2 = L^N sum |fhat|^2``.  Spectral multipliers only depend on
``|xi|`` so the internal fast paths (real FFTs, origin at the first node)
agree with this convention exactly.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "Field",
    "Spectrum",
    "UnderResolvedError",
    "PowerResult",
    "fft_workers",
    "forward_transform",
    "inverse_transform",
    "fractional_laplacian",
    "apply_multiplier",
    "gradient",
    "integrate",
    "lp_norm",
    "pointwise_power",
    "dealias_mask",
]


class UnderResolvedError(RuntimeError):
    """Raised when a field leaves the regime the discretization can represent."""


def fft_workers() -> int:
    """Thread cap for transforms, read from ``LEVY_FUJITA_THREADS`` (default 1)."""
    raw = os.environ.get("LEVY_FUJITA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        warnings.warn(f"ignoring non-integer LEVY_FUJITA_THREADS={raw!r}")
        return 1


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on ``[-L/2, L/2)^dim``."""

    dim: int
    points_per_axis: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        n = int(self.points_per_axis)
        if n < 8 or not _is_pow2(n):
            raise ValueError(
                f"points_per_axis must be a power of two >= 8, got {self.points_per_axis}"
            )
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError(f"length must be positive and finite, got {self.length}")
        object.__setattr__(self, "points_per_axis", n)
        object.__setattr__(self, "length", float(self.length))

    @classmethod
    def from_spacing(cls, dim: int, spacing: float, min_length: float) -> "Grid":
        """Smallest power-of-two grid with the given spacing covering ``min_length``."""
        n = 8
        while n * spacing < min_length:
            n *= 2
        return cls(dim, n, n * spacing)

    @property
    def spacing(self) -> float:
        return self.length / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return -0.5 * self.length + self.spacing * np.arange(self.points_per_axis)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis wavenumbers ``2*pi*k/L`` in FFT ordering."""
        return 2.0 * np.pi * sfft.fftfreq(self.points_per_axis, d=self.spacing)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """``|x|`` at every node."""
        if self.dim == 1:
            return np.abs(self.axis)
        x, y = self.coordinates()
        return np.hypot(x, y)

    @cached_property
    def kmag(self) -> np.ndarray:
        """``|xi|`` on the full transform layout."""
        k = self.wavenumbers
        if self.dim == 1:
            return np.abs(k)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return np.hypot(kx, ky)

    @cached_property
    def kmag_r(self) -> np.ndarray:
        """``|xi|`` on the real-FFT (half-spectrum) layout."""
        n = self.points_per_axis
        kr = 2.0 * np.pi * sfft.rfftfreq(n, d=self.spacing)
        if self.dim == 1:
            return kr
        kx, ky = np.meshgrid(self.wavenumbers, kr, indexing="ij")
        return np.hypot(kx, ky)

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(-i xi_k x_0) with x_0 = -L/2 is (-1)^k on every axis
        k = np.rint(sfft.fftfreq(self.points_per_axis) * self.points_per_axis).astype(np.int64)
        s = np.where(k % 2 == 0, 1.0, -1.0)
        if self.dim == 1:
            return s
        return np.multiply.outer(s, s)

    def rfft(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values, norm="forward", workers=fft_workers())

    def irfft(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs, s=self.shape, norm="forward", workers=fft_workers())


@dataclass(frozen=True, eq=False)
class Field:
    """Real values sampled on every node of a :class:`Grid` (row-major)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, fn(*grid.coordinates()))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def scale(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Fourier coefficients of a field (full layout, convention in module docs)."""

    grid: Grid
    coefficients: np.ndarray = field(repr=False)


def _require_finite(f: Field) -> None:
    if not f.is_finite():
        bad = int(np.size(f.values) - np.count_nonzero(np.isfinite(f.values)))
        raise ValueError(f"field has {bad} non-finite value(s)")


def forward_transform(f: Field) -> Spectrum:
    _require_finite(f)
    g = f.grid
    c = sfft.fftn(f.values, norm="forward", workers=fft_workers()) * g._phase
    return Spectrum(g, c)


def inverse_transform(s: Spectrum) -> Field:
    g = s.grid
    v = sfft.ifftn(s.coefficients * g._phase, norm="forward", workers=fft_workers())
    return Field(g, v.real)


def apply_multiplier(f: Field, symbol) -> Field:
    """Inverse transform of ``symbol(|xi|) * fhat``; ``symbol`` acts on arrays."""
    g = f.grid
    return Field(g, g.irfft(symbol(g.kmag_r) * g.rfft(f.values)))


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (0,2], got {alpha}")


def fractional_laplacian(f: Field, alpha: float) -> Field:
    """``Lambda^alpha f``: multiplier ``|xi|^alpha`` with the zero mode removed."""
    _check_alpha(alpha)
    _require_finite(f)
    return apply_multiplier(f, lambda k: k**alpha)


def gradient(f: Field) -> tuple[Field, ...]:
    """Spectral partial derivatives, one field per axis."""
    g = f.grid
    c = g.rfft(f.values)
    n = g.points_per_axis
    kr = 2.0 * np.pi * sfft.rfftfreq(n, d=g.spacing)
    if g.dim == 1:
        kr = kr.copy()
        if n % 2 == 0:
            kr[-1] = 0.0  # Nyquist mode has no odd derivative
        return (Field(g, g.irfft(1j * kr * c)),)
    kx = g.wavenumbers.copy()
    kx[n // 2] = 0.0
    ky = kr.copy()
    ky[-1] = 0.0
    return (
        Field(g, g.irfft(1j * kx[:, None] * c)),
        Field(g, g.irfft(1j * ky[None, :] * c)),
    )


def integrate(f: Field) -> float:
    return float(f.grid.cell_volume * np.sum(f.values))


def lp_norm(f: Field, q: float) -> float:
    if q == np.inf:
        return float(np.max(np.abs(f.values)))
    if not q >= 1:
        raise ValueError(f"q must be >= 1 or inf, got {q}")
    a = np.abs(f.values)
    if q == 1:
        return float(f.grid.cell_volume * np.sum(a))
    # scale out the peak so large q does not underflow
    peak = a.max()
    if peak == 0:
        return 0.0
    return float(peak * (f.grid.cell_volume * np.sum((a / peak) ** q)) ** (1.0 / q))


@dataclass(frozen=True)
class PowerResult:
    field: Field
    clamped_mass: float
    min_value: float
    under_resolved: bool


def _power_values(v: np.ndarray, p: float, clamp_tol: float, cell: float):
    vmin = float(v.min())
    neg = v < 0
    clamped = float(cell * -np.sum(v[neg])) if vmin < 0 else 0.0
    w = np.maximum(v, 0.0) if vmin < 0 else v
    if p == 2:
        out = w * w
    elif p == 3:
        out = w * w * w
    else:
        out = w**p
    return out, clamped, vmin, vmin < -clamp_tol


def pointwise_power(f: Field, p: float, clamp_tol: float) -> PowerResult:
    """``max(f, 0)**p`` with the removed negative mass reported.

    Values below ``-clamp_tol`` are still clamped but flag the result as
    under-resolved; callers decide whether that is fatal.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if clamp_tol < 0:
        raise ValueError("clamp_tol must be nonnegative")
    out, clamped, vmin, bad = _power_values(f.values, p, clamp_tol, f.grid.cell_volume)
    if bad:
        warnings.warn(
            f"field minimum {vmin:.3e} is below -clamp_tol={-clamp_tol:.3e}; "
            "solution is under-resolved",
            RuntimeWarning,
            stacklevel=2,
        )
    return PowerResult(Field(f.grid, out), clamped, vmin, bad)


def dealias_mask(grid: Grid) -> np.ndarray:
    """Boolean 2/3-rule mask on the real-FFT layout (per-axis |k| < n/3)."""
    n = grid.points_per_axis
    kmax = n / 3.0
    k = np.abs(np.rint(sfft.fftfreq(n) * n))
    kr = np.arange(n // 2 + 1)
    if grid.dim == 1:
        return kr < kmax
    kx, ky = np.meshgrid(k, kr, indexing="ij")
    return (kx < kmax) & (ky < kmax)
