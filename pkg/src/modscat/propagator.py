"""Strang split-step integrator for i u_t + Lap u = V(u) u.

The free flow is applied exactly in frequency space; the potential substep is
exactly solvable because V depends on u only through |u|^2, which it leaves
invariant.  Both substeps are pointwise unitary, so the L^2 mass is conserved
to roundoff regardless of dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, GridSpec, boundary_mass_fraction, fftn, ifftn
from .kernels import (
    BOPP_PODOLSKY,
    COULOMB,
    KernelMultiplier,
    bopp_podolsky_multiplier,
    coulomb_multiplier,
    nonlocal_potential,
)

KINDS = ("linear", "hartree", "bopp_podolsky", "power", "custom")


@dataclass(frozen=True)
class NonlinearitySpec:
    """Right-hand side selector: V = conv_coeff*(kernel * |u|^2) + power_coeff*|u|^{2/d}."""

    kind: str = "hartree"
    conv_coeff: float = 0.0
    power_coeff: float = 0.0
    kernel_kind: str | None = None

    @classmethod
    def make(cls, kind: str) -> "NonlinearitySpec":
        if kind == "linear":
            return cls("linear", 0.0, 0.0, None)
        if kind == "hartree":
            return cls("hartree", 1.0, 0.0, COULOMB)
        if kind == "bopp_podolsky":
            return cls("bopp_podolsky", 1.0, -1.0, BOPP_PODOLSKY)
        if kind == "power":
            return cls("power", 0.0, -1.0, None)
        raise ValueError(f"unknown nonlinearity kind {kind!r}")

    @property
    def needs_kernel(self) -> bool:
        return self.conv_coeff != 0.0

    def build_multiplier(self, grid: GridSpec, R: float | None = None):
        if not self.needs_kernel:
            return None
        if self.kernel_kind == COULOMB:
            return coulomb_multiplier(grid, R)
        if self.kernel_kind == BOPP_PODOLSKY:
            return bopp_podolsky_multiplier(grid, R)
        raise ValueError(f"no kernel builder for {self.kernel_kind!r}")

    def potential(self, u: ComplexField, m: KernelMultiplier | None) -> np.ndarray:
        """Real potential V(u) on the grid."""
        dens = np.abs(u.values) ** 2
        out = np.zeros(u.grid.shape)
        if self.conv_coeff != 0.0:
            if m is None:
                raise ValueError(f"{self.kind} nonlinearity needs a kernel multiplier")
            if m.kind != self.kernel_kind:
                raise ValueError(
                    f"{self.kind} expects a {self.kernel_kind} multiplier, got {m.kind}"
                )
            conv = nonlocal_potential(
                m, ComplexField(u.grid, dens.astype(complex), "physical", u.t)
            )
            out += self.conv_coeff * conv.values.real
        if self.power_coeff != 0.0:
            out += self.power_coeff * dens ** (1.0 / u.grid.d)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("potential is not finite")
        return out


@dataclass
class EvolutionState:
    u: ComplexField
    spec: NonlinearitySpec
    step_count: int = 0
    boundary_mass: float = 0.0

    @property
    def t(self) -> float:
        return self.u.t


@dataclass
class StepControl:
    dt: float
    t_start: float
    t_end: float
    checkpoint_times: tuple = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.t_start:
            raise ValueError("t_end must be >= t_start")
        for t in self.checkpoint_times:
            if t < self.t_start - 1e-12 or t > self.t_end + 1e-12:
                raise ValueError(f"checkpoint {t} outside [{self.t_start}, {self.t_end}]")


def free_flow(u: ComplexField, tau: float) -> ComplexField:
    """Exact linear evolution exp(i tau Lap): frequency multiplier exp(-i|k|^2 tau)."""
    if u.space != "physical":
        raise ValueError("free_flow expects a physical-space field")
    if tau == 0.0:
        return ComplexField(u.grid, u.values.copy(), "physical", u.t)
    phase = np.exp(-1j * u.grid.k_sq * tau)
    vals = ifftn(fftn(u.values) * phase)
    return ComplexField(u.grid, vals, "physical", u.t + tau)


def potential_step(
    u: ComplexField, spec: NonlinearitySpec, m: KernelMultiplier | None, tau: float
) -> ComplexField:
    """u <- exp(-i tau V(u)) u; exact since |u| is pointwise invariant."""
    if spec.kind == "linear":
        return ComplexField(u.grid, u.values.copy(), "physical", u.t)
    V = spec.potential(u, m)
    vals = u.values * np.exp(-1j * tau * V)
    return ComplexField(u.grid, vals, "physical", u.t)


def strang_step(
    state: EvolutionState, m: KernelMultiplier | None, dt: float
) -> EvolutionState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = free_flow(state.u, 0.5 * dt)
    u = potential_step(u, state.spec, m, dt)
    u = free_flow(u, 0.5 * dt)
    if not np.all(np.isfinite(u.values)):
        raise FloatingPointError(
            f"non-finite field after step {state.step_count + 1} at t={u.t:.6g}"
        )
    return EvolutionState(u, state.spec, state.step_count + 1, state.boundary_mass)


class GuardBreach(RuntimeError):
    """Boundary-shell mass exceeded its limit; wrap-around contamination likely."""


def two_thirds_mask(grid: GridSpec) -> np.ndarray:
    """Per-axis 2/3-rule dealiasing mask on the frequency lattice."""
    cut = 2.0 / 3.0 * grid.k_nyquist
    mask = np.ones(grid.shape)
    for a in range(grid.d):
        mask = mask * (np.abs(grid.k_mesh(a)) < cut)
    return mask


def evolve(
    state: EvolutionState,
    control: StepControl,
    m: KernelMultiplier | None = None,
    sinks=(),
    guard_limit: float = 1e-6,
    guard_fraction: float = 0.75,
    guard_every: int = 25,
    dealias: bool = False,
):
    """Advance to t_end with Strang steps, calling sinks at checkpoint times.

    Adjacent half free-flows are merged between potential substeps, so each
    full step costs one free flow plus one potential application.  Checkpoint
    times must sit on the step lattice t_start + j*dt.  With dealias on, the
    2/3-rule projection rides along with every free-flow multiplier.
    """
    if abs(state.t - control.t_start) > 1e-9:
        raise ValueError(
            f"state time {state.t} does not match control.t_start {control.t_start}"
        )
    dt = control.dt
    n_steps = int(round((control.t_end - control.t_start) / dt))
    if abs(control.t_start + n_steps * dt - control.t_end) > 1e-9 * max(1.0, dt):
        raise ValueError("t_end - t_start is not a multiple of dt")
    checkpoints = {}
    for t in control.checkpoint_times:
        j = int(round((t - control.t_start) / dt))
        if abs(control.t_start + j * dt - t) > 1e-9:
            raise ValueError(f"checkpoint {t} does not sit on the dt lattice")
        checkpoints.setdefault(j, t)

    def check_guard(st: EvolutionState):
        st.boundary_mass = boundary_mass_fraction(st.u, guard_fraction)
        if st.boundary_mass > guard_limit:
            raise GuardBreach(
                f"boundary-shell mass {st.boundary_mass:.3e} exceeds {guard_limit:.1e} "
                f"at t={st.t:.6g}"
            )

    def emit(st: EvolutionState):
        check_guard(st)
        for sink in sinks:
            sink(st)

    if 0 in checkpoints:
        emit(state)
    half_open = False  # True when u sits half a free step beyond its label
    u = state.u
    mask = two_thirds_mask(u.grid) if dealias else None

    def flow(field, tau):
        out = free_flow(field, tau)
        if mask is None:
            return out
        return ComplexField(out.grid, ifftn(fftn(out.values) * mask), "physical", out.t)
    # align periodic closures to the global lattice index so that a resumed
    # run groups its half steps exactly like an uninterrupted one (bitwise)
    j_offset = int(round(control.t_start / dt))
    for j in range(1, n_steps + 1):
        if not half_open:
            u = flow(u, 0.5 * dt)
        else:
            u = flow(u, dt)
        u = potential_step(u, state.spec, m, dt)
        half_open = True
        due = j in checkpoints or j == n_steps or (j + j_offset) % guard_every == 0
        if due:
            u = flow(u, 0.5 * dt)
            half_open = False
            # canonical labels: requested checkpoint times verbatim, lattice else
            t_label = checkpoints.get(j, control.t_start + j * dt)
            u = ComplexField(u.grid, u.values, "physical", t_label)
            state = EvolutionState(u, state.spec, state.step_count + 1, state.boundary_mass)
            if not np.all(np.isfinite(u.values)):
                raise FloatingPointError(f"non-finite field at t={u.t:.6g}")
            if j in checkpoints:
                emit(state)
            else:
                check_guard(state)
        else:
            state = EvolutionState(u, state.spec, state.step_count + 1, state.boundary_mass)
    return state
