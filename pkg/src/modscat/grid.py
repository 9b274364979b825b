"""Uniform periodic grid in 2 or 3 dimensions with symmetric Fourier transforms.

The box is [-L, L)^d with n points per axis, spacing h = 2L/n.  Wavenumbers are
k_j = pi*j/L for j = -n/2 .. n/2-1, stored in FFT (wrapped) order.  The
discrete forward/inverse transforms approximate the symmetric continuum pair

    F[f](k)  = (2*pi)^(-d/2) * integral exp(-i k.x) f(x) dx
    Finv[g](x) = (2*pi)^(-d/2) * integral exp(+i k.x) g(k) dk

via the trapezoid rule (quadrature weights h^d and dk^d), which makes the
round trip an exact identity on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

_FFT_WORKERS = -1  # let pocketfft use all cores; plans are internal and stateless


def fftn(a):
    return sfft.fftn(a, workers=_FFT_WORKERS)


def ifftn(a):
    return sfft.ifftn(a, workers=_FFT_WORKERS)


@dataclass(frozen=True)
class GridSpec:
    """Discretized periodic box [-L, L)^d."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if self.L <= 0:
            raise ValueError(f"box half-length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dk(self) -> float:
        return np.pi / self.L

    @property
    def k_nyquist(self) -> float:
        return np.pi * self.n / (2.0 * self.L)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @cached_property
    def x_axis(self) -> np.ndarray:
        """Grid coordinates along one axis, ascending from -L."""
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def k_axis(self) -> np.ndarray:
        """Wavenumbers along one axis in FFT order, k_j = pi*j/L."""
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.h)

    def x_mesh(self, axis: int) -> np.ndarray:
        shape = [1] * self.d
        shape[axis] = self.n
        return self.x_axis.reshape(shape)

    def k_mesh(self, axis: int) -> np.ndarray:
        shape = [1] * self.d
        shape[axis] = self.n
        return self.k_axis.reshape(shape)

    @cached_property
    def x_sq(self) -> np.ndarray:
        """|x|^2 on the full grid."""
        out = np.zeros(self.shape)
        for a in range(self.d):
            out = out + self.x_mesh(a) ** 2
        return out

    @cached_property
    def k_sq(self) -> np.ndarray:
        """|k|^2 on the full grid, FFT order."""
        out = np.zeros(self.shape)
        for a in range(self.d):
            out = out + self.k_mesh(a) ** 2
        return out

    @cached_property
    def _fft_sign(self) -> np.ndarray:
        # exp(+i k L) = (-1)^j per axis, the phase that refers the DFT origin
        # to x = -L.  Real-valued, so forward and inverse share it.
        s1 = np.where(np.arange(self.n) % 2 == 0, 1.0, -1.0)
        # fft-order index j and position index carry the same parity pattern
        out = np.ones(self.shape)
        for a in range(self.d):
            shape = [1] * self.d
            shape[a] = self.n
            out = out * s1.reshape(shape)
        return out

    def shell_mask(self, fraction: float = 0.75) -> np.ndarray:
        """Boolean mask of the outer shell |x|_inf > fraction*L."""
        out = np.zeros(self.shape, dtype=bool)
        for a in range(self.d):
            out |= np.abs(self.x_mesh(a)) > fraction * self.L + np.zeros(self.shape)
        return out


def build_grid(d: int, n: int, L: float) -> GridSpec:
    return GridSpec(d=int(d), n=int(n), L=float(L))


@dataclass
class ComplexField:
    """Complex amplitude on a grid, tagged physical or frequency."""

    grid: GridSpec
    values: np.ndarray
    space: str = "physical"
    t: float = 0.0

    def __post_init__(self):
        if self.space not in ("physical", "frequency"):
            raise ValueError(f"unknown space tag {self.space!r}")
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("field contains non-finite values")

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.copy(), self.space, self.t)


def field_from_function(grid: GridSpec, fn, t: float = 0.0) -> ComplexField:
    """Sample fn(*coords) on the grid; fn receives broadcastable coordinate arrays."""
    coords = [grid.x_mesh(a) for a in range(grid.d)]
    vals = np.asarray(fn(*coords), dtype=np.complex128) + np.zeros(grid.shape)
    return ComplexField(grid, vals, "physical", t)


def _require(space: str, f: ComplexField):
    if f.space != space:
        raise ValueError(f"expected a {space}-tagged field, got {f.space!r}")


def transform_forward(f: ComplexField) -> ComplexField:
    """Symmetric-normalization forward transform, trapezoid quadrature."""
    _require("physical", f)
    g = f.grid
    scale = (2.0 * np.pi) ** (-g.d / 2.0) * g.h**g.d
    vals = scale * g._fft_sign * fftn(f.values)
    return ComplexField(g, vals, "frequency", f.t)


def transform_inverse(f: ComplexField) -> ComplexField:
    """Inverse of transform_forward; exact round trip on the grid."""
    _require("frequency", f)
    g = f.grid
    scale = (2.0 * np.pi) ** (-g.d / 2.0) * g.dk**g.d * g.n**g.d
    vals = scale * ifftn(f.values * g._fft_sign)
    return ComplexField(g, vals, "physical", f.t)


def norm_lp(f: ComplexField, p) -> float:
    """L^2 (with h^{d/2} quadrature weight) or L^infinity norm."""
    if p == 2:
        g = f.grid
        return float(np.linalg.norm(f.values.ravel()) * g.h ** (g.d / 2.0))
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.values)))
    raise ValueError(f"unsupported exponent p={p!r}; use 2 or inf")


def norm_l2_frequency(f: ComplexField) -> float:
    """Frequency-side L^2 norm with dk^{d/2} weight (discrete Plancherel partner)."""
    _require("frequency", f)
    g = f.grid
    return float(np.linalg.norm(f.values.ravel()) * g.dk ** (g.d / 2.0))


def norm_weighted_x(f: ComplexField, nu: float) -> float:
    """|| |x|^nu f ||_2 by grid quadrature."""
    _require("physical", f)
    if nu < 0:
        raise ValueError(f"weight exponent must be nonnegative, got {nu}")
    g = f.grid
    if nu == 0:
        return norm_lp(f, 2)
    w = g.x_sq ** (nu / 2.0)
    return float(np.sqrt(np.sum(w * w * np.abs(f.values) ** 2)) * g.h ** (g.d / 2.0))


def boundary_mass_fraction(f: ComplexField, fraction: float = 0.75) -> float:
    """Relative L^2 mass in the outer shell |x|_inf > fraction*L."""
    mask = f.grid.shell_mask(fraction)
    dens = np.abs(f.values) ** 2
    total = float(np.sum(dens))
    if total == 0.0:
        return 0.0
    return float(np.sum(dens[mask]) / total)
