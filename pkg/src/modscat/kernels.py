"""Fourier multipliers for free-space convolution with singular radial kernels.

Three radial kernels appear: the Coulomb kernel 1/|x|, the screened kernel
(1 - exp(-|x|))/|x|, and the Yukawa family exp(-a|x|)/|x| used internally by
the phase-accumulation machinery.

A free-space convolution is realized on the torus by truncating the kernel to
|x| < R.  With R <= L the periodic images of the truncated kernel never reach
the fundamental cell, so circular convolution with the *sampled* truncated
kernel equals the literal free-space sum over the grid, node for node.  The
operational multiplier is therefore the DFT of the sampled kernel (origin node
replaced by the cell average over one cell); it reproduces the direct
summation oracle to roundoff.  The analytic transform of the truncated kernel
is kept alongside as the continuum reference: it is nonnegative, dominated by
the Coulomb one, and validated against adaptive radial quadrature.  The two
agree up to the O(h^2) discretization ripple of the sampled singularity.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.signal
from scipy.special import j0, j1, struve

from .grid import ComplexField, GridSpec, fftn, ifftn

COULOMB = "coulomb"
BOPP_PODOLSKY = "bopp_podolsky"
YUKAWA = "yukawa"


def kernel_profile(kind: str, a: float = 1.0):
    """Radial profile K(r); callers handle the r -> 0 cell."""
    if kind == COULOMB:
        return lambda r: 1.0 / r
    if kind == BOPP_PODOLSKY:
        return lambda r: -np.expm1(-r) / r
    if kind == YUKAWA:
        return lambda r: np.exp(-a * r) / r
    raise ValueError(f"unknown kernel kind {kind!r}")


def _cell_average(profile, h: float, d: int, order: int = 24) -> float:
    """Average of K(|x|) over the origin cell [-h/2, h/2]^d (Gauss-Legendre)."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * h * nodes
    weights = 0.5 * h * weights
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    r = np.sqrt(sum(g**2 for g in grids))
    w = weights
    for _ in range(d - 1):
        w = np.multiply.outer(w, weights)
    return float(np.sum(w * profile(r)) / h**d)


def sample_truncated_kernel(
    grid: GridSpec, kind: str, R: float, a: float = 1.0
) -> np.ndarray:
    """Truncated kernel sampled on the centered grid; origin = cell average."""
    profile = kernel_profile(kind, a)
    r = np.sqrt(grid.x_sq)
    out = np.zeros(grid.shape)
    mask = (r > 0) & (r < R)
    out[mask] = profile(r[mask])
    origin = tuple([grid.n // 2] * grid.d)
    out[origin] = _cell_average(profile, grid.h, grid.d)
    return out


@dataclass(frozen=True)
class KernelMultiplier:
    """Multiplier realizing convolution with a truncated radial kernel.

    values[k] is the DFT of the sampled kernel in unsymmetric-transform units
    (approximates integral K(x) exp(-i k.x) dx, h^d weight included), so
    ifftn(fftn(rho) * values) is exactly the free-space grid sum.  reference()
    returns the continuum transform of the truncated kernel at the same nodes.
    """

    grid: GridSpec
    kind: str
    R: float
    values: np.ndarray = field(repr=False)
    screening: float = 0.0  # Yukawa decay rate; 0 for the other kinds

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("multiplier contains non-finite values")

    def reference(self) -> np.ndarray:
        """Continuum transform of the truncated kernel at the grid nodes."""
        return continuum_multiplier_values(
            self.grid, self.kind, self.R, self.screening if self.kind == YUKAWA else 1.0
        )


_mult_cache: dict = {}
_mult_lock = threading.Lock()


def _build_multiplier(grid: GridSpec, kind: str, R: float, a: float = 1.0):
    if R <= 0:
        raise ValueError(f"truncation radius must be positive, got {R}")
    if R > grid.L:
        raise ValueError(
            f"truncation radius {R} exceeds the box half-length {grid.L}; "
            "periodic images of the kernel would corrupt the convolution"
        )
    sampled = sample_truncated_kernel(grid, kind, R, a)
    m = fftn(np.fft.ifftshift(sampled)).real * grid.h**grid.d
    return KernelMultiplier(grid, kind, R, m, a if kind == YUKAWA else 0.0)


def _cached_multiplier(grid: GridSpec, kind: str, R: float, a: float = 1.0):
    key = (grid.d, grid.n, grid.L, kind, float(R), float(a))
    with _mult_lock:
        hit = _mult_cache.get(key)
    if hit is not None:
        return hit
    built = _build_multiplier(grid, kind, R, a)
    with _mult_lock:
        _mult_cache.setdefault(key, built)
    return built


def default_truncation(grid: GridSpec) -> float:
    # largest radius for which periodic images provably vanish
    return grid.L


def coulomb_multiplier(grid: GridSpec, R: float | None = None) -> KernelMultiplier:
    return _cached_multiplier(grid, COULOMB, default_truncation(grid) if R is None else R)


def bopp_podolsky_multiplier(grid: GridSpec, R: float | None = None) -> KernelMultiplier:
    return _cached_multiplier(
        grid, BOPP_PODOLSKY, default_truncation(grid) if R is None else R
    )


def yukawa_multiplier(grid: GridSpec, a: float, R: float | None = None) -> KernelMultiplier:
    return _cached_multiplier(
        grid, YUKAWA, default_truncation(grid) if R is None else R, a
    )


def nonlocal_potential(m: KernelMultiplier, density: ComplexField) -> ComplexField:
    """(kernel * density)(x) for a real-valued density such as |u|^2."""
    if density.grid != m.grid:
        raise ValueError("multiplier and density live on different grids")
    vals = density.values
    scale = np.max(np.abs(vals))
    if scale > 0 and np.max(np.abs(vals.imag)) > 1e-12 * scale:
        raise ValueError("density has a non-negligible imaginary part")
    conv = ifftn(fftn(vals) * m.values)
    if scale > 0:
        resid = np.max(np.abs(conv.imag)) / max(np.max(np.abs(conv)), 1e-300)
        if resid > 1e-10:
            raise FloatingPointError(f"convolution imaginary residue {resid:.2e}")
    return ComplexField(density.grid, conv.real.astype(complex), "physical", density.t)


def direct_convolution_oracle(
    kind: str, R: float, density: ComplexField, a: float = 1.0
) -> ComplexField:
    """Literal O(n^{2d}) free-space sum; ground truth for nonlocal_potential."""
    g = density.grid
    if g.n > 32:
        raise ValueError(f"direct oracle limited to n <= 32, got n={g.n}")
    profile = kernel_profile(kind, a)
    diffs = g.h * np.arange(-(g.n - 1), g.n)
    mesh = np.meshgrid(*([diffs] * g.d), indexing="ij")
    r = np.sqrt(sum(c**2 for c in mesh))
    table = np.zeros(r.shape)
    mask = (r > 0) & (r < R)
    table[mask] = profile(r[mask])
    table[tuple([g.n - 1] * g.d)] = _cell_average(profile, g.h, g.d)
    out = scipy.signal.convolve(table, density.values, mode="valid", method="direct")
    return ComplexField(g, out * g.h**g.d, "physical", density.t)


# ----------------------------------------------------------------------------
# Continuum transforms of the truncated kernels: closed forms and quadrature.
# ----------------------------------------------------------------------------


def _int_j0(z):
    """integral_0^z J0(s) ds (Abramowitz-Stegun 11.1.7)."""
    z = np.asarray(z, dtype=float)
    return z * j0(z) + 0.5 * np.pi * z * (j1(z) * struve(0, z) - j0(z) * struve(1, z))


def coulomb_hat(d: int, k, R: float):
    """Transform of |x|^{-1} 1_{|x|<R}: closed form in 3d, Struve form in 2d."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    out = np.empty(k.shape)
    small = k < 1e-12
    if d == 3:
        out[~small] = 4 * np.pi * (1 - np.cos(k[~small] * R)) / k[~small] ** 2
        out[small] = 2 * np.pi * R**2
    elif d == 2:
        out[~small] = 2 * np.pi * _int_j0(k[~small] * R) / k[~small]
        out[small] = 2 * np.pi * R
    else:
        raise ValueError("d must be 2 or 3")
    return out


_quad_cache: dict = {}


def _exp_j0_integral(k: float, R: float, a: float = 1.0) -> float:
    """integral_0^R exp(-a r) J0(k r) dr."""
    if a * R > 36.0:
        # tail beyond R is below exp(-36) of the total
        return 1.0 / np.sqrt(a * a + k * k)
    key = (round(float(k), 12), float(R), float(a))
    hit = _quad_cache.get(key)
    if hit is not None:
        return hit
    val, _ = scipy.integrate.quad(
        lambda r: np.exp(-a * r) * j0(k * r), 0.0, R, limit=int(200 + 2 * k * R)
    )
    _quad_cache[key] = val
    return val


def yukawa_hat(d: int, k, R: float, a: float = 1.0):
    """Transform of exp(-a|x|)/|x| 1_{|x|<R}."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    out = np.empty(k.shape)
    small = k < 1e-12
    if d == 3:
        kk = k[~small]
        out[~small] = (
            4
            * np.pi
            * (kk - np.exp(-a * R) * (kk * np.cos(kk * R) + a * np.sin(kk * R)))
            / (kk * (a**2 + kk**2))
        )
        out[small] = 4 * np.pi * (1 - (1 + a * R) * np.exp(-a * R)) / a**2
    elif d == 2:
        out[:] = 2 * np.pi * np.array([_exp_j0_integral(ki, R, a) for ki in k])
    else:
        raise ValueError("d must be 2 or 3")
    return out


def bopp_podolsky_hat(d: int, k, R: float):
    """Transform of (1-e^{-|x|})/|x| 1_{|x|<R} = truncated Coulomb - Yukawa."""
    return coulomb_hat(d, k, R) - yukawa_hat(d, k, R, 1.0)


def untruncated_reference(kind: str, d: int, k):
    """Whole-space transforms: 4pi/k^2 and 4pi/(k^2(1+k^2)) in 3d,
    2pi/k and 2pi(1/k - (1+k^2)^{-1/2}) in 2d."""
    k = np.asarray(k, dtype=float)
    if kind == COULOMB:
        return 4 * np.pi / k**2 if d == 3 else 2 * np.pi / k
    if kind == BOPP_PODOLSKY:
        if d == 3:
            return 4 * np.pi / (k**2 * (1 + k**2))
        return 2 * np.pi * (1 / k - 1 / np.sqrt(1 + k**2))
    raise ValueError(f"no untruncated reference for {kind!r}")


def continuum_multiplier_values(
    grid: GridSpec, kind: str, R: float, a: float = 1.0
) -> np.ndarray:
    """Continuum truncated transform sampled at the grid frequency nodes."""
    kmag = np.sqrt(grid.k_sq)
    uniq, inverse = np.unique(kmag.ravel(), return_inverse=True)
    if kind == COULOMB:
        vals = coulomb_hat(grid.d, uniq, R)
    elif kind == BOPP_PODOLSKY:
        vals = bopp_podolsky_hat(grid.d, uniq, R)
    elif kind == YUKAWA:
        vals = yukawa_hat(grid.d, uniq, R, a)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return vals[inverse].reshape(grid.shape)


def multiplier_quadrature(kind: str, d: int, k: float, R: float, a: float = 1.0) -> float:
    """Adaptive radial quadrature of the truncated transform (abs tol ~1e-10)."""
    profile = kernel_profile(kind, a)
    limit = int(400 + 4 * k * R / np.pi)
    if d == 3:
        if k < 1e-12:
            val, _ = scipy.integrate.quad(
                lambda r: 4 * np.pi * profile(r) * r**2, 0.0, R,
                epsabs=1e-10, limit=limit, points=[0.0],
            )
            return val
        val, _ = scipy.integrate.quad(
            lambda r: profile(r) * r * np.sin(k * r), 0.0, R,
            epsabs=1e-12, limit=limit,
        )
        return 4 * np.pi * val / k
    if d == 2:
        if k < 1e-12:
            val, _ = scipy.integrate.quad(
                lambda r: 2 * np.pi * profile(r) * r, 0.0, R,
                epsabs=1e-10, limit=limit, points=[0.0],
            )
            return val
        val, _ = scipy.integrate.quad(
            lambda r: profile(r) * r * j0(k * r), 0.0, R,
            epsabs=1e-12, limit=limit,
        )
        return 2 * np.pi * val
    raise ValueError("d must be 2 or 3")


def validation_moduli(k_min: float, k_max: float, per_decade: int = 20) -> np.ndarray:
    """Log-spaced |k| samples, >= per_decade moduli per decade."""
    decades = np.log10(k_max / k_min)
    count = max(int(np.ceil(decades * per_decade)), per_decade)
    return np.geomspace(k_min, k_max, count)


# ----------------------------------------------------------------------------
# Multiplier cache files: one header line of key=value text, then the n^d
# operational values as little-endian float64 in C (row-major, FFT) order.
# ----------------------------------------------------------------------------


def write_multiplier_cache(path, m: KernelMultiplier):
    header = (
        f"modscat-multiplier-cache v=1 d={m.grid.d} n={m.grid.n} L={float(m.grid.L)!r} "
        f"R={float(m.R)!r} kind={m.kind} screening={float(m.screening)!r} endian=little\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(m.values.astype("<f8").tobytes(order="C"))


def read_multiplier_cache(path) -> KernelMultiplier:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    fields = dict(item.split("=", 1) for item in header.split()[1:])
    if fields.get("v") != "1":
        raise ValueError(f"unsupported multiplier cache version in {header!r}")
    grid = GridSpec(int(fields["d"]), int(fields["n"]), float(fields["L"]))
    count = grid.n**grid.d
    if len(payload) != 8 * count:
        raise ValueError("multiplier cache truncated or padded")
    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape(grid.shape)
    return KernelMultiplier(
        grid, fields["kind"], float(fields["R"]), values, float(fields["screening"])
    )
