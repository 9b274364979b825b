"""Scenario orchestration: evolve, analyze at checkpoints, persist, fit."""

from __future__ import annotations

import os
import time

import numpy as np

from ..asymptotics import (
    ScatteringTrace,
    asymptotic_reconstruction,
    decay_exponent_fit,
    energy_growth_fit,
    profile_limit,
    reconstruction_residual,
)
from ..galilean import gagliardo_nirenberg_ratio, report_norms, weighted_sobolev_norm
from ..grid import ComplexField, GridSpec, build_grid, field_from_function
from ..propagator import (
    EvolutionState,
    GuardBreach,
    NonlinearitySpec,
    StepControl,
    evolve,
)
from ..wavepacket import (
    VelocityGrid,
    WavepacketProfile,
    gamma_approx_gap,
    gamma_convolution,
    gamma_direct,
    gamma_fourier,
    gamma_fourier_gap,
    gamma_norm_ratios,
)
from .config import ScenarioConfig
from .io import (
    CSV_COLUMNS,
    read_snapshot,
    write_csv,
    write_gamma,
    write_json,
    write_manifest,
    write_snapshot,
    array_to_lists,
)


class NumericalFailure(RuntimeError):
    """NaN/overflow during evolution (CLI exit code 4)."""


def build_initial_data(cfg: ScenarioConfig, grid: GridSpec) -> ComplexField:
    if cfg.initial_data == "gaussian":
        c = np.asarray(cfg.data_center)
        vb = np.asarray(cfg.data_velocity)
        w = cfg.data_width

        def fn(*xs):
            r_sq = sum((x - ci) ** 2 for x, ci in zip(xs, c))
            phase = sum(vi * x for x, vi in zip(xs, vb))
            return np.exp(-r_sq / w**2) * np.exp(1j * phase)

        u0 = field_from_function(grid, fn)
    else:
        u0 = read_snapshot(cfg.data_file)
        if u0.grid != grid:
            raise ValueError(
                f"file initial data lives on d={u0.grid.d}, n={u0.grid.n}, "
                f"L={u0.grid.L}; scenario wants d={grid.d}, n={grid.n}, L={grid.L}"
            )
        u0 = ComplexField(grid, u0.values, "physical", 0.0)
    norm = weighted_sobolev_norm(u0, cfg.beta)
    if norm == 0:
        raise ValueError("initial data is identically zero")
    u0.values *= cfg.epsilon / norm
    return u0


def xi_subgrid(grid: GridSpec, v_max: float) -> VelocityGrid:
    """Frequency sub-lattice covering |xi| <= v_max, nodes on the k lattice."""
    dk = grid.dk
    half = int(np.ceil(v_max / dk)) + 2
    n_xi = 8
    while n_xi < 2 * half:
        n_xi *= 2
    n_xi = min(n_xi, grid.n)
    return VelocityGrid(GridSpec(grid.d, n_xi, n_xi * dk / 2.0), v_max)


def _snapshot_name(t: float) -> str:
    return f"snapshot_t{t:012.6f}.bin"


def _gamma_name(t: float) -> str:
    return f"gamma_t{t:012.6f}.bin"


_ROW_NAN = {c: np.nan for c in CSV_COLUMNS}


class _Runner:
    def __init__(self, cfg: ScenarioConfig, out: str):
        self.cfg = cfg
        self.out = out
        self.grid = build_grid(cfg.d, cfg.n, cfg.L)
        self.spec = NonlinearitySpec.make(cfg.equation)
        self.mult = self.spec.build_multiplier(self.grid, cfg.kernel_truncation)
        self.profile = WavepacketProfile(d=cfg.d, lam=cfg.wavepacket_width)
        self.vgrid = VelocityGrid.fixed(self.grid, cfg.t_end, cfg.v_max)
        self.xi_grid = xi_subgrid(self.grid, cfg.v_max)
        self.trace = ScatteringTrace(vgrid=self.vgrid, spec=self.spec, sigma=cfg.sigma)
        self.rows = []
        self.artifacts = []
        self.extras = {}
        self.chk_fields = {}  # t -> snapshot name (str) or in-memory array
        self.chk_snapped = set(
            np.round(np.asarray(cfg.checkpoint_times) / cfg.dt) * cfg.dt
        )

    # -- per-analysis-time work --------------------------------------------

    def analyze(self, st):
        cfg = self.cfg
        t, u = st.t, st.u
        is_chk = t in self.chk_snapped
        rep = report_norms(u, t, cfg.beta)
        gam = gamma_convolution(u, self.profile, self.vgrid, t)
        self.trace.append(gam, is_chk)
        row = dict(_ROW_NAN)
        row.update(
            {
                "t": t,
                "mass": rep.l2,
                "linf": rep.linf,
                "jbeta": rep.jbeta,
                "jbracket": rep.jbracket,
                "h0beta": rep.h0beta_pullback,
                "jbeta_route_gap": rep.jbeta_route_gap,
                "boundary_mass": st.boundary_mass,
                "gamma_sup": gam.sup(),
            }
        )
        if is_chk:
            scale = max(gam.sup(), 1e-300)
            g_dir = gamma_direct(u, self.profile, self.vgrid, t)
            g_fou = gamma_fourier(u, self.profile, self.vgrid, t)
            row["conv_vs_direct"] = (
                self.vgrid.masked_sup(gam.values - g_dir.values) / scale
            )
            row["fourier_vs_direct"] = (
                self.vgrid.masked_sup(g_fou.values - g_dir.values) / scale
            )
            ratios = gamma_norm_ratios(u, gam, t, cfg.beta, rep.jbeta)
            row["gamma_sup_ratio"] = ratios.sup_ratio
            row["gamma_l2_ratio"] = ratios.l2_ratio
            row["gamma_dbeta_ratio"] = ratios.dbeta_ratio
            nat = VelocityGrid.natural(self.grid, t, cfg.v_max)
            g_nat = gamma_convolution(u, self.profile, nat, t)
            pgap = gamma_approx_gap(u, g_nat, t, cfg.beta, rep.jbeta)
            row["phys_gap_ratio"] = pgap.ratio
            g_xi = gamma_convolution(u, self.profile, self.xi_grid, t)
            fgap = gamma_fourier_gap(
                u, self.profile, g_xi, t, cfg.beta, rep.jbeta, cfg.v_max
            )
            row["fourier_gap_ratio"] = fgap.ratio
            self.extras[t] = {
                "gn_ratio": gagliardo_nirenberg_ratio(u, t, cfg.beta),
                "phys_gap": pgap.sup_gap,
                "phys_bound": pgap.bound,
                "phys_ratio_proof": pgap.ratio_proof,
                "fourier_gap": fgap.sup_gap,
                "fourier_gap_literal": fgap.sup_gap_literal,
                "fourier_bound": fgap.bound,
                "kernel_mass_defect": fgap.kernel_mass_defect,
            }
            if cfg.emit_snapshots:
                name = _snapshot_name(t)
                write_snapshot(u, os.path.join(self.out, name), cfg.equation, cfg.epsilon)
                self.artifacts.append(name)
                gname = _gamma_name(t)
                write_gamma(gam, os.path.join(self.out, gname))
                self.artifacts.append(gname)
                self.chk_fields[t] = name
            else:
                self.chk_fields[t] = u.values.copy()
        self.rows.append(row)
        if is_chk and cfg.emit_snapshots:
            self.save_resume_state(t)

    def field_at(self, t):
        ref = self.chk_fields[t]
        if isinstance(ref, str):
            return read_snapshot(os.path.join(self.out, ref)).values
        return ref

    # -- resume ---------------------------------------------------------------

    def save_resume_state(self, t):
        path = os.path.join(self.out, "resume_state.npz")
        cols = {c: np.array([r[c] for r in self.rows] + [np.nan])[:-1] for c in CSV_COLUMNS}
        extras_t = sorted(self.extras)
        np.savez(
            path + ".tmp",
            t=t,
            snapshot=self.chk_fields[t] if isinstance(self.chk_fields[t], str) else "",
            artifacts=np.array(self.artifacts),
            chk_times=np.array(extras_t),
            extras=np.array(
                [[self.extras[tt][k] for k in sorted(self.extras[tt])] for tt in extras_t]
            )
            if extras_t
            else np.zeros((0, 0)),
            extra_keys=np.array(sorted(self.extras[extras_t[0]])) if extras_t else np.array([]),
            **{f"col_{c}": cols[c] for c in CSV_COLUMNS},
        )
        self.trace.save_state(path + ".trace.tmp.npz")
        os.replace(path + ".trace.tmp.npz", path + ".trace.npz")
        os.replace(path + ".tmp.npz", path)

    def load_resume_state(self):
        path = os.path.join(self.out, "resume_state.npz")
        if not os.path.exists(path) or not os.path.exists(path + ".trace.npz"):
            return None
        z = np.load(path, allow_pickle=False)
        t = float(z["t"])
        cols = {c: z[f"col_{c}"] for c in CSV_COLUMNS}
        count = len(cols["t"])
        self.rows = [{c: float(cols[c][i]) for c in CSV_COLUMNS} for i in range(count)]
        self.artifacts = [str(a) for a in z["artifacts"]]
        keys = [str(k) for k in z["extra_keys"]]
        for i, tt in enumerate(z["chk_times"]):
            self.extras[float(tt)] = {k: float(v) for k, v in zip(keys, z["extras"][i])}
            self.chk_fields[float(tt)] = _snapshot_name(float(tt))
        self.trace.load_state(path + ".trace.npz")
        snap = str(z["snapshot"])
        u = read_snapshot(os.path.join(self.out, snap))
        return t, u


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None, resume: bool = False):
    cfg = cfg.resolve()
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    t0_wall = time.perf_counter()
    runner = _Runner(cfg, out)

    analysis_times = cfg.analysis_times()
    start_t, u_start = 0.0, None
    if resume:
        if not cfg.emit_snapshots:
            raise ValueError("resume requires emit_snapshots = true")
        found = runner.load_resume_state()
        if found is not None:
            start_t, u_start = found
    if u_start is None:
        u_start = build_initial_data(cfg, runner.grid)
        start_t = 0.0
    remaining = tuple(t for t in analysis_times if t > start_t + 1e-12)

    status = {"status": "completed"}
    if remaining or start_t < cfg.t_end:
        control = StepControl(
            dt=cfg.dt, t_start=start_t, t_end=cfg.t_end, checkpoint_times=remaining
        )
        try:
            evolve(
                EvolutionState(u_start, runner.spec),
                control,
                runner.mult,
                sinks=[runner.analyze],
                guard_limit=cfg.guard_limit,
                guard_fraction=cfg.guard_fraction,
                dealias=cfg.dealias,
            )
        except GuardBreach as exc:
            status = {"status": "guard_breach", "detail": str(exc)}
        except FloatingPointError as exc:
            status = {"status": "numerical_failure", "detail": str(exc)}

    report = {
        "equation": cfg.equation,
        "epsilon": cfg.epsilon,
        "beta": cfg.beta,
        "status": status["status"],
        "detail": status.get("detail", ""),
        "quad_error": runner.trace.quad_error,
    }
    rows = runner.rows
    if rows:
        ts = np.array([r["t"] for r in rows])
        linf = np.array([r["linf"] for r in rows])
        h0 = np.array([r["h0beta"] for r in rows])
        mass = np.array([r["mass"] for r in rows])
        report["mass_drift"] = float(np.max(np.abs(mass - mass[0])) / mass[0])
        lo, hi = cfg.decay_fit_window
        try:
            fit = decay_exponent_fit(ts, linf, lo, min(hi, cfg.t_end))
            report["decay_slope"] = fit.slope
            report["decay_stderr"] = fit.stderr
            report["decay_window"] = list(fit.t_window)
        except ValueError as exc:
            report["decay_slope_error"] = str(exc)
        try:
            gfit = energy_growth_fit(ts, h0, 1.0, cfg.t_end)
            report["growth_slope"] = gfit.slope
            report["growth_stderr"] = gfit.stderr
        except ValueError as exc:
            report["growth_slope_error"] = str(exc)
        for col in (
            "gamma_sup_ratio",
            "gamma_l2_ratio",
            "gamma_dbeta_ratio",
            "phys_gap_ratio",
            "fourier_gap_ratio",
            "conv_vs_direct",
            "fourier_vs_direct",
            "jbeta_route_gap",
            "boundary_mass",
        ):
            vals = np.array([r[col] for r in rows])
            vals = vals[np.isfinite(vals)]
            if len(vals):
                report[f"max_{col}"] = float(np.max(vals))
        if runner.extras:
            gn = [e["gn_ratio"] for e in runner.extras.values()]
            report["max_gn_ratio"] = float(np.max(gn))
            report["checkpoint_extras"] = {
                repr(t): runner.extras[t] for t in sorted(runner.extras)
            }

    profile_payload = None
    if runner.trace.checkpoint_count >= 4 and status["status"] == "completed":
        est = profile_limit(runner.trace)
        resids = []
        for t in sorted(runner.chk_fields):
            recon, mask = asymptotic_reconstruction(est, runner.spec, t, runner.grid)
            resids.append(
                (t, reconstruction_residual(runner.field_at(t), recon, mask, t, cfg.d))
            )
        if len(resids) >= 5:
            rt = np.array([r[0] for r in resids])
            rv = np.array([r[1] for r in resids])
            try:
                rfit = decay_exponent_fit(rt, rv, 2.0, cfg.t_end)
                est.residual_exponent = rfit.slope
                est.residual_exponent_err = rfit.stderr
            except ValueError:
                pass
        sel = est.phase_mask
        denom = np.maximum(np.abs(est.predicted_slope[sel]), 1e-300)
        report.update(
            {
                "checkpoint_times": [float(t) for t in est.checkpoint_times],
                "gamma_gaps": [float(g) for g in est.gamma_gaps],
                "cauchy_gaps": [float(g) for g in est.cauchy_gaps],
                "recon_residuals": [[float(a), float(b)] for a, b in resids],
                "residual_exponent": est.residual_exponent,
                "residual_exponent_err": est.residual_exponent_err,
                # t^{d/2}-rescaled reference remainder slopes: -1/(10 d) and -1/10
                "residual_reference_slopes": [-0.1 / cfg.d, -0.1],
                "phase_slope_median_rel_gap": (
                    float(
                        np.median(
                            np.abs(est.phase_slope[sel] - est.predicted_slope[sel]) / denom
                        )
                    )
                    if np.any(sel)
                    else np.nan
                ),
                "unwrap_flagged": bool(est.unwrap_flagged),
            }
        )
        b = est.vgrid.box
        profile_payload = {
            "format": "modscat-profile",
            "version": 1,
            "equation": cfg.equation,
            "epsilon": cfg.epsilon,
            "t_final": float(runner.trace.last_checkpoint.t),
            "v_axis": array_to_lists(b.x_axis),
            "v_max": est.vgrid.v_max,
            "W_re": array_to_lists(est.W.real),
            "W_im": array_to_lists(est.W.imag),
            "phase_slope": array_to_lists(est.phase_slope),
            "phase_slope_err": array_to_lists(np.nan_to_num(est.phase_slope_err)),
            "predicted_slope": array_to_lists(est.predicted_slope),
            "cauchy_gaps": [float(g) for g in est.cauchy_gaps],
            "gamma_gaps": [float(g) for g in est.gamma_gaps],
            "checkpoint_times": [float(t) for t in est.checkpoint_times],
            "unwrap_flagged": bool(est.unwrap_flagged),
        }

    write_csv(os.path.join(out, "trace.csv"), rows)
    artifacts = list(runner.artifacts) + ["trace.csv", "report.json"]
    write_json(os.path.join(out, "report.json"), report)
    if profile_payload is not None:
        write_json(os.path.join(out, "profile.json"), profile_payload)
        artifacts.append("profile.json")
    wall = time.perf_counter() - t0_wall
    manifest = write_manifest(
        out, cfg.to_dict(), runner.grid, wall, status["status"], artifacts
    )
    if status["status"] == "guard_breach":
        raise GuardBreach(status["detail"])
    if status["status"] == "numerical_failure":
        raise NumericalFailure(status["detail"])
    return manifest
