"""Small-scale oracle battery: independent ground truths vs the fast paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..galilean import fractional_j_norm
from ..grid import (
    ComplexField,
    build_grid,
    field_from_function,
    norm_lp,
    transform_forward,
)
from ..kernels import (
    BOPP_PODOLSKY,
    COULOMB,
    bopp_podolsky_hat,
    coulomb_hat,
    direct_convolution_oracle,
    multiplier_quadrature,
    nonlocal_potential,
    untruncated_reference,
    validation_moduli,
    _cached_multiplier,
)
from ..propagator import free_flow
from ..wavepacket import (
    VelocityGrid,
    WavepacketProfile,
    gamma_convolution,
    gamma_direct,
    gamma_fourier,
    gamma_free_gaussian_closed_form,
)


@dataclass(frozen=True)
class OracleResult:
    suite: str
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.tolerance)


def _gaussian(grid, width, amp=1.0):
    return field_from_function(
        grid, lambda *xs: amp * np.exp(-sum(x**2 for x in xs) / width**2)
    )


def kernel_oracles(n: int = 16, perturb_multiplier: float = 0.0):
    results = []
    coarse = 10.0 if n < 16 else 1.0
    for d in (2, 3):
        g = build_grid(d, n, 4.0)
        rho = _gaussian(g, width=0.35)
        l1 = float(np.sum(np.abs(rho.values)) * g.h**d)
        R = g.L / 2
        for kind in (COULOMB, BOPP_PODOLSKY):
            m = _cached_multiplier(g, kind, R)
            if perturb_multiplier:
                from ..kernels import KernelMultiplier

                m = KernelMultiplier(
                    m.grid, m.kind, m.R, m.values * (1.0 + perturb_multiplier), m.screening
                )
            fast = nonlocal_potential(m, rho)
            slow = direct_convolution_oracle(kind, R, rho)
            gap = float(np.max(np.abs(fast.values - slow.values)))
            results.append(
                OracleResult("kernels", f"conv_oracle_d{d}_{kind}", gap, 1e-9 * l1 * coarse)
            )
        # closed forms against adaptive radial quadrature
        for kind, hat in ((COULOMB, coulomb_hat), (BOPP_PODOLSKY, bopp_podolsky_hat)):
            worst = 0.0
            for k in validation_moduli(0.1, float(g.k_nyquist), per_decade=20):
                ref = multiplier_quadrature(kind, d, float(k), R)
                val = float(hat(d, np.array([k]), R)[0])
                worst = max(worst, abs(val - ref) / max(abs(ref), 1e-3))
            results.append(
                OracleResult("kernels", f"closed_form_d{d}_{kind}", worst, 1e-6)
            )
    # untruncated spot values from the source analysis
    ref3 = float(untruncated_reference(BOPP_PODOLSKY, 3, np.array([1.0]))[0])
    results.append(
        OracleResult("kernels", "bp_untruncated_2pi", abs(ref3 - 2 * np.pi), 1e-12)
    )
    return results


def propagator_oracles(n: int = 256):
    results = []
    g = build_grid(2, n, 12.0)
    u0 = _gaussian(g, width=1.0)
    tau = 0.5
    out = free_flow(u0, tau)
    pref = (1 + 4j * tau) ** (-1.0)
    exact = field_from_function(
        g, lambda x, y: pref * np.exp(-(x**2 + y**2) / (1 + 4j * tau)), t=tau
    )
    rel = norm_lp(ComplexField(g, out.values - exact.values), 2) / norm_lp(exact, 2)
    results.append(OracleResult("propagator", "gaussian_free_flow", rel, 1e-8))
    # transform pair: F[exp(-|x|^2)] = 2^{-d/2} exp(-|k|^2/4)
    fh = transform_forward(u0)
    ref = 0.5 * np.exp(-g.k_sq / 4.0)
    gap = float(np.max(np.abs(fh.values - ref)) / ref.max())
    results.append(OracleResult("propagator", "gaussian_transform_pair", gap, 1e-10))
    back = free_flow(free_flow(u0, 0.7), -0.7)
    results.append(
        OracleResult(
            "propagator",
            "free_flow_group_property",
            float(np.max(np.abs(back.values - u0.values))),
            1e-12,
        )
    )
    # two-route |J|^beta on a free Gaussian
    gj = build_grid(2, 256, 28.0)
    uj = field_from_function(
        gj,
        lambda x, y: (1 + 4j / 9.0) ** (-1.0)
        * np.exp(-(x**2 + y**2) / 9.0 / (1 + 4j / 9.0)),
        t=1.0,
    )
    res = fractional_j_norm(uj, 1.0, 1.1)
    results.append(OracleResult("propagator", "j_norm_two_routes", res.relative_gap, 1e-6))
    return results


def gamma_oracles(n: int = 256):
    results = []
    g = build_grid(2, n, 32.0)
    prof = WavepacketProfile(d=2)
    t, w, amp = 2.0, 1.2, 0.5
    a0 = 1.0 / w**2
    pref = amp * (1 + 4j * a0 * t) ** (-1.0)
    u = field_from_function(
        g, lambda x, y: pref * np.exp(-a0 * (x**2 + y**2) / (1 + 4j * a0 * t)), t=t
    )
    vg = VelocityGrid.natural(g, t, v_max=1.5)
    g_dir = gamma_direct(u, prof, vg, t)
    g_con = gamma_convolution(u, prof, vg, t)
    g_fou = gamma_fourier(u, prof, vg, t)
    ref = gamma_free_gaussian_closed_form(amp, a0, prof, vg, t)
    scale = max(g_dir.sup(), 1e-300)
    results.append(
        OracleResult(
            "gamma", "direct_vs_closed_form",
            vg.masked_sup(g_dir.values - ref.values) / scale, 1e-8,
        )
    )
    results.append(
        OracleResult(
            "gamma", "conv_vs_direct",
            vg.masked_sup(g_con.values - g_dir.values) / scale, 1e-8,
        )
    )
    results.append(
        OracleResult(
            "gamma", "fourier_vs_direct",
            vg.masked_sup(g_fou.values - g_dir.values) / scale, 1e-6,
        )
    )
    return results


def oracle_suite(suite: str = "all", n_kernel: int = 16, n_field: int = 256,
                 perturb_multiplier: float = 0.0):
    results = []
    if suite in ("all", "kernels"):
        results += kernel_oracles(n_kernel, perturb_multiplier)
    if suite in ("all", "propagator"):
        results += propagator_oracles(n_field)
    if suite in ("all", "gamma"):
        results += gamma_oracles(n_field)
    return results


def format_oracle_report(results) -> str:
    lines = []
    width = max(len(f"{r.suite}.{r.name}") for r in results)
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{tag}  {r.suite + '.' + r.name:<{width}}  measured {r.measured:.3e}"
            f"  tolerance {r.tolerance:.1e}"
        )
    good = sum(r.passed for r in results)
    lines.append(f"{good}/{len(results)} oracles passed")
    return "\n".join(lines)
