import numpy as np
import pytest

from modscat.grid import ComplexField, build_grid, field_from_function, norm_lp
from modscat.kernels import coulomb_multiplier
from modscat.propagator import (
    EvolutionState,
    GuardBreach,
    NonlinearitySpec,
    StepControl,
    evolve,
    free_flow,
    potential_step,
    strang_step,
)


def gaussian_free_closed_form(grid, t, width=1.0):
    """exp(i t Lap) e^{-|x|^2/w^2} = (1+4it/w^2)^{-d/2} e^{-|x|^2/(w^2+4it)}."""
    a = 1.0 / width**2
    pref = (1 + 4j * a * t) ** (-grid.d / 2.0)
    return field_from_function(
        grid, lambda *xs: pref * np.exp(-a * sum(x**2 for x in xs) / (1 + 4j * a * t)), t=t
    )


def periodized_gaussian_free(grid, t, width=1.0, images=3):
    """Method-of-images closed form: the free evolution the periodic box sees."""
    a = 1.0 / width**2
    pref = (1 + 4j * a * t) ** (-grid.d / 2.0)
    axes = [grid.x_mesh(i) for i in range(grid.d)]
    vals = np.zeros(grid.shape, dtype=complex)
    shifts = 2 * grid.L * np.arange(-images, images + 1)
    if grid.d == 2:
        for sx in shifts:
            for sy in shifts:
                r2 = (axes[0] + sx) ** 2 + (axes[1] + sy) ** 2
                vals += np.exp(-a * r2 / (1 + 4j * a * t))
    else:
        for sx in shifts:
            for sy in shifts:
                for sz in shifts:
                    r2 = (axes[0] + sx) ** 2 + (axes[1] + sy) ** 2 + (axes[2] + sz) ** 2
                    vals += np.exp(-a * r2 / (1 + 4j * a * t))
    return ComplexField(grid, pref * vals, "physical", t)


def test_free_flow_single_mode():
    g = build_grid(2, 16, 4.0)
    k0 = (g.k_axis[2], g.k_axis[5])
    u = field_from_function(g, lambda x, y: np.exp(1j * (k0[0] * x + k0[1] * y)))
    tau = 0.37
    out = free_flow(u, tau)
    expected = np.exp(-1j * (k0[0] ** 2 + k0[1] ** 2) * tau) * u.values
    assert np.max(np.abs(out.values - expected)) < 1e-13
    assert out.t == tau


def test_free_flow_gaussian_closed_form():
    g = build_grid(2, 256, 12.0)
    u0 = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2)))
    out = free_flow(u0, 0.5)
    exact = gaussian_free_closed_form(g, 0.5)
    err = norm_lp(ComplexField(g, out.values - exact.values), 2) / norm_lp(exact, 2)
    assert err < 1e-8


def test_free_flow_group_property():
    g = build_grid(2, 64, 6.0)
    rng = np.random.default_rng(5)
    u = ComplexField(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    back = free_flow(free_flow(u, 0.7), -0.7)
    assert np.max(np.abs(back.values - u.values)) < 1e-12 * np.max(np.abs(u.values))


def test_potential_step_linear_identity():
    g = build_grid(2, 16, 4.0)
    u = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2)))
    out = potential_step(u, NonlinearitySpec.make("linear"), None, 0.5)
    assert np.array_equal(out.values, u.values)


def test_potential_step_power_phase():
    # d=2 power nonlinearity: V = -|u|, so a node with |u|=c rotates by e^{+i tau c}
    g = build_grid(2, 16, 4.0)
    vals = np.full(g.shape, 0.3 + 0j)
    u = ComplexField(g, vals)
    tau = 0.25
    out = potential_step(u, NonlinearitySpec.make("power"), None, tau)
    assert np.max(np.abs(out.values - 0.3 * np.exp(1j * tau * 0.3))) < 1e-14


def test_potential_step_preserves_modulus():
    g = build_grid(2, 32, 6.0)
    u = field_from_function(g, lambda x, y: 0.4 * np.exp(-(x**2 + y**2)))
    m = coulomb_multiplier(g)
    out = potential_step(u, NonlinearitySpec.make("hartree"), m, 0.1)
    assert np.max(np.abs(np.abs(out.values) - np.abs(u.values))) < 1e-14


def test_potential_step_requires_kernel():
    g = build_grid(2, 16, 4.0)
    u = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2)))
    with pytest.raises(ValueError):
        potential_step(u, NonlinearitySpec.make("hartree"), None, 0.1)


def test_strang_linear_equals_free_flow():
    g = build_grid(2, 32, 6.0)
    u = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2)))
    st = EvolutionState(u, NonlinearitySpec.make("linear"))
    out = strang_step(st, None, 0.2)
    ref = free_flow(u, 0.2)
    assert np.max(np.abs(out.u.values - ref.values)) < 1e-13
    assert out.step_count == 1


def reference_solution(u0, spec, m, t_end, dt_ref):
    st = EvolutionState(u0, spec)
    n = int(round(t_end / dt_ref))
    for _ in range(n):
        st = strang_step(st, m, dt_ref)
    return st.u


@pytest.mark.parametrize("kind", ["hartree", "bopp_podolsky"])
def test_strang_second_order_convergence(kind):
    g = build_grid(2, 64, 8.0)
    u0 = field_from_function(g, lambda x, y: 1.5 * np.exp(-(x**2 + y**2)))
    spec = NonlinearitySpec.make(kind)
    m = spec.build_multiplier(g)
    t_end = 0.4
    ref = reference_solution(u0, spec, m, t_end, t_end / 256)
    errs = []
    for steps in (8, 16):
        out = reference_solution(u0, spec, m, t_end, t_end / steps)
        errs.append(norm_lp(ComplexField(g, out.values - ref.values), 2))
    ratio = errs[0] / errs[1]
    assert 3.5 <= ratio <= 4.5, ratio


def test_one_step_defect_is_third_order():
    # the local defect of a single step scales like dt^3: halving dt -> ~8x
    g = build_grid(2, 64, 8.0)
    u0 = field_from_function(g, lambda x, y: 1.5 * np.exp(-(x**2 + y**2)))
    spec = NonlinearitySpec.make("hartree")
    m = spec.build_multiplier(g)
    defect = {}
    for dt in (0.1, 0.05):
        ref = reference_solution(u0, spec, m, dt, dt / 128)
        one = strang_step(EvolutionState(u0, spec), m, dt).u
        defect[dt] = norm_lp(ComplexField(g, one.values - ref.values), 2)
    ratio = defect[0.1] / defect[0.05]
    assert 6.5 < ratio < 9.5, ratio


@pytest.mark.parametrize("kind", ["hartree", "bopp_podolsky", "power"])
def test_mass_conservation_1000_steps(kind):
    g = build_grid(2, 32, 8.0)
    u0 = field_from_function(g, lambda x, y: 0.5 * np.exp(-(x**2 + y**2)))
    spec = NonlinearitySpec.make(kind)
    m = spec.build_multiplier(g)
    st = EvolutionState(u0, spec)
    m0 = norm_lp(u0, 2)
    for _ in range(1000):
        st = strang_step(st, m, 1e-3)
    assert abs(norm_lp(st.u, 2) - m0) <= 1e-11 * m0


def test_gauge_covariance():
    g = build_grid(2, 32, 8.0)
    u0 = field_from_function(g, lambda x, y: 0.5 * np.exp(-(x**2 + y**2)))
    spec = NonlinearitySpec.make("hartree")
    m = spec.build_multiplier(g)
    phase = np.exp(0.7j)
    a = reference_solution(u0, spec, m, 0.2, 0.02)
    b = reference_solution(ComplexField(g, phase * u0.values), spec, m, 0.2, 0.02)
    assert np.max(np.abs(b.values - phase * a.values)) < 1e-12


def test_evolve_checkpoints_and_decay():
    # linear evolution matches |u|_inf = (1+16t^2)^{-d/4} |u0|_inf within 1e-6
    g = build_grid(2, 256, 160.0)
    w = 3.0
    u0 = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2) / w**2))
    spec = NonlinearitySpec.make("linear")
    seen = []
    control = StepControl(dt=0.05, t_start=0.0, t_end=10.0, checkpoint_times=(0.0, 1.0, 10.0))
    evolve(EvolutionState(u0, spec), control, None, sinks=[lambda st: seen.append(st)])
    assert [round(s.t, 9) for s in seen] == [0.0, 1.0, 10.0]
    for st in seen:
        t = st.t
        pred = (1 + 16 * t**2 / w**4) ** (-0.5)
        assert abs(norm_lp(st.u, np.inf) - pred) < 1e-6


def test_evolve_zero_span_single_checkpoint():
    g = build_grid(2, 16, 4.0)
    u0 = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2)), t=2.0)
    seen = []
    control = StepControl(dt=0.1, t_start=2.0, t_end=2.0, checkpoint_times=(2.0,))
    out = evolve(
        EvolutionState(u0, NonlinearitySpec.make("linear")),
        control,
        None,
        sinks=[lambda st: seen.append(st.t)],
    )
    assert seen == [2.0]
    assert out.step_count == 0


def test_evolve_guard_breach():
    g = build_grid(2, 64, 4.0)  # tiny box: a unit Gaussian disperses into the shell
    u0 = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2)))
    control = StepControl(dt=0.05, t_start=0.0, t_end=5.0, checkpoint_times=(5.0,))
    with pytest.raises(GuardBreach):
        evolve(EvolutionState(u0, NonlinearitySpec.make("linear")), control, None)


def test_evolve_rejects_offgrid_checkpoint():
    g = build_grid(2, 16, 4.0)
    u0 = field_from_function(g, lambda x, y: np.exp(-(x**2 + y**2)))
    control = StepControl(dt=0.1, t_start=0.0, t_end=1.0, checkpoint_times=(0.55,))
    with pytest.raises(ValueError):
        evolve(EvolutionState(u0, NonlinearitySpec.make("linear")), control, None)


def test_nonlinearity_spec_kinds():
    assert NonlinearitySpec.make("hartree").needs_kernel
    assert not NonlinearitySpec.make("power").needs_kernel
    bp = NonlinearitySpec.make("bopp_podolsky")
    assert bp.conv_coeff == 1.0 and bp.power_coeff == -1.0
    with pytest.raises(ValueError):
        NonlinearitySpec.make("cubic")


def test_dealias_toggle_projects_spectrum():
    from modscat.grid import fftn
    from modscat.propagator import two_thirds_mask

    g = build_grid(2, 64, 10.0)
    u0 = field_from_function(g, lambda x, y: 1.2 * np.exp(-(x**2 + y**2)))
    ctrl = StepControl(dt=0.05, t_start=0.0, t_end=1.0, checkpoint_times=(1.0,))
    seen = {}
    evolve(EvolutionState(u0, NonlinearitySpec.make("power")), ctrl, None,
           sinks=[lambda st: seen.setdefault("on", st.u)], dealias=True, guard_limit=1.0)
    evolve(EvolutionState(u0, NonlinearitySpec.make("power")), ctrl, None,
           sinks=[lambda st: seen.setdefault("off", st.u)], guard_limit=1.0)
    mask = two_thirds_mask(g)
    tail = np.abs(fftn(seen["on"].values))[mask == 0].max()
    assert tail < 1e-12
    # resolved data: the projection changes the solution only at the
    # truncated-tail level
    rel = np.max(np.abs(seen["on"].values - seen["off"].values))
    assert rel < 1e-4 * np.max(np.abs(seen["off"].values))
