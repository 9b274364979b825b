"""Diagnostic figures rendered from modscat trace directories.

Figures are pure functions of the files in the trace directory: the CSV, the
report JSON, the profile JSON, and the gamma checkpoint files.  Every number
annotated on a figure is copied verbatim from report.json (the same values the
report CLI prints), and each render also writes a `<out>.values.json` sidecar
with those numbers so tests can compare without parsing pixels.  Rendering is
deterministic: fixed style, fixed size, no timestamps.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "modscat",
}

FIGURE_KINDS = ("decay", "growth", "phase_drift", "profile_convergence", "remainder")


class FigureError(RuntimeError):
    pass


def _load(trace_dir):
    rep_path = os.path.join(trace_dir, "report.json")
    if not os.path.exists(rep_path):
        raise FigureError(f"{trace_dir} has no report.json")
    with open(rep_path) as fh:
        report = json.load(fh)
    manifest_path = os.path.join(trace_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FigureError(f"{trace_dir} has no manifest.json")
    return report


def _read_csv(trace_dir):
    path = os.path.join(trace_dir, "trace.csv")
    with open(path) as fh:
        schema = fh.readline().strip()
        if not schema.startswith("modscat-trace-csv"):
            raise FigureError(f"unexpected CSV schema {schema!r}")
        header = fh.readline().strip().split(",")
        rows = [dict(zip(header, map(float, line.split(",")))) for line in fh if line.strip()]
    if not rows:
        raise FigureError("trace.csv has no rows")
    return rows


def _read_profile(trace_dir):
    path = os.path.join(trace_dir, "profile.json")
    if not os.path.exists(path):
        raise FigureError(f"{trace_dir} has no profile.json")
    with open(path) as fh:
        return json.load(fh)


def _save(fig, out_path, values: dict):
    meta = {}
    if str(out_path).endswith(".svg"):
        meta = {"metadata": {"Date": None, "Creator": "modscat-figures"}}
    fig.savefig(out_path, **meta)
    plt.close(fig)
    with open(str(out_path) + ".values.json", "w", encoding="utf-8") as fh:
        json.dump(values, fh, sort_keys=True, indent=1)
        fh.write("\n")


def plot_decay(trace_dir, out_path, overlays=()):
    """log-log |u|_inf against t with the -d/2 reference and the fitted slope."""
    report = _load(trace_dir)
    rows = _read_csv(trace_dir)
    if len(rows) < 3:
        raise FigureError("need at least 3 checkpoints for the decay figure")
    d = 2 if abs(report.get("beta", 1.1) - 1.1) < 0.25 else 3
    slope = report.get("decay_slope")
    values = {"decay_slope": slope, "decay_stderr": report.get("decay_stderr")}
    with plt.style.context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        series = [(trace_dir, rows)]
        for extra in overlays:
            series.append((extra, _read_csv(extra)))
        for label_dir, rr in series:
            ts = np.array([r["t"] for r in rr])
            linf = np.array([r["linf"] for r in rr])
            rep = _load(label_dir)
            lbl = f"{rep.get('equation', '?')} eps={rep.get('epsilon', 0):g}"
            ax.loglog(ts, linf, "o-", ms=3, lw=0.8, label=lbl)
        ts = np.array([r["t"] for r in rows])
        ref = rows[0]["linf"] * (ts / ts[0]) ** (-d / 2.0)
        ax.loglog(ts, ref, "k--", lw=0.8, label=f"t^(-{d}/2) reference")
        if slope is not None:
            ax.set_title(f"fitted slope {slope:.17g}", fontsize=8)
        ax.set_xlabel("t")
        ax.set_ylabel("sup |u|")
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, out_path, values)
    return values


def plot_growth(trace_dir, out_path):
    report = _load(trace_dir)
    rows = _read_csv(trace_dir)
    slope = report.get("growth_slope")
    values = {"growth_slope": slope, "growth_stderr": report.get("growth_stderr")}
    with plt.style.context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        ts = np.array([r["t"] for r in rows])
        h0 = np.array([r["h0beta"] for r in rows])
        ax.semilogx(np.sqrt(1 + ts**2), h0 / h0[0], "o-", ms=3, lw=0.8)
        ax.set_xlabel("<t>")
        ax.set_ylabel("pullback weighted norm (relative)")
        if slope is not None:
            ax.set_title(f"fitted growth exponent {slope:.17g}", fontsize=8)
        fig.tight_layout()
        _save(fig, out_path, values)
    return values


def _gamma_files(trace_dir):
    names = sorted(
        n for n in os.listdir(trace_dir) if n.startswith("gamma_t") and n.endswith(".bin")
    )
    if not names:
        raise FigureError(f"{trace_dir} has no gamma checkpoint files")
    return [os.path.join(trace_dir, n) for n in names]


def _read_gamma_file(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        fields = dict(item.split("=", 1) for item in header.split()[1:])
        d, n = int(fields["d"]), int(fields["n"])
        t = float(fields["t"])
        axis = np.frombuffer(fh.read(8 * n), dtype="<f8")
        flat = np.frombuffer(fh.read(), dtype="<f8")
    inter = flat.reshape((n,) * d + (2,))
    return t, axis, inter[..., 0] + 1j * inter[..., 1]


def plot_phase_drift(trace_dir, out_path, sample_count: int = 4):
    """arg gamma(t, v0) against log t per v0, with the predicted -N[W]/2 slope."""
    report = _load(trace_dir)
    prof = _read_profile(trace_dir)
    files = _gamma_files(trace_dir)
    if len(files) < 3:
        raise FigureError("need at least 3 gamma checkpoints")
    series = [_read_gamma_file(p) for p in files]
    axis = series[0][1]
    n = len(axis)
    predicted = np.array(prof["predicted_slope"], dtype=float)
    wmag = np.abs(
        np.array(prof["W_re"], dtype=float) + 1j * np.array(prof["W_im"], dtype=float)
    )
    fitted = np.array(prof["phase_slope"], dtype=float)
    # sample v0 nodes on the first axis through the center, strongest first
    center = tuple([n // 2] * (series[0][2].ndim - 1))
    order = np.argsort(-wmag[(slice(None),) + center[: wmag.ndim - 1]])
    picks = order[:sample_count]
    values = {"unwrap_flagged": bool(prof.get("unwrap_flagged", False)), "panels": []}
    with plt.style.context(_STYLE):
        fig, axes = plt.subplots(
            1, sample_count, figsize=(2.6 * sample_count, 2.8), sharex=True
        )
        axes = np.atleast_1d(axes)
        for ax, i in zip(axes, picks):
            idx = (int(i),) + center[: wmag.ndim - 1]
            ts = np.array([s[0] for s in series])
            angles = np.unwrap([np.angle(s[2][idx]) for s in series])
            ax.plot(np.log(ts), angles - angles[0], "o-", ms=3, lw=0.8, label="measured")
            pred = predicted[idx]
            fit = fitted[idx]
            ax.plot(
                np.log(ts), pred * (np.log(ts) - np.log(ts[0])), "k--", lw=0.8,
                label="predicted",
            )
            ax.set_title(f"v0={axis[int(i)]:.3g}\nfit {fit:.6g} pred {pred:.6g}", fontsize=7)
            ax.set_xlabel("log t")
            values["panels"].append(
                {"v0": float(axis[int(i)]), "fitted_slope": float(fit),
                 "predicted_slope": float(pred)}
            )
        if values["unwrap_flagged"]:
            for ax in axes:
                ax.axhspan(*ax.get_ylim(), color="orange", alpha=0.15)
            fig.suptitle("phase unwrap ambiguity flagged", fontsize=8, color="darkorange")
        axes[0].set_ylabel("arg gamma drift")
        axes[0].legend(fontsize=6)
        fig.tight_layout()
        _save(fig, out_path, values)
    return values


def plot_profile_convergence(trace_dir, out_path):
    """|G| gaps vs t (renormalized and raw) plus the |W| heat map."""
    prof = _read_profile(trace_dir)
    times = np.array(prof["checkpoint_times"], dtype=float)
    cauchy = np.array(prof["cauchy_gaps"], dtype=float)
    raw = np.array(prof["gamma_gaps"], dtype=float)
    if len(times) < 2:
        raise FigureError("need at least 3 checkpoints for the convergence figure")
    wmag = np.abs(
        np.array(prof["W_re"], dtype=float) + 1j * np.array(prof["W_im"], dtype=float)
    )
    values = {
        "cauchy_gaps": [float(g) for g in cauchy],
        "gamma_gaps": [float(g) for g in raw],
        "checkpoint_times": [float(t) for t in times],
    }
    with plt.style.context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.2, 3.0))
        ax1.loglog(times, cauchy, "o-", ms=3, lw=0.9, label="renormalized G gaps")
        ax1.loglog(times, raw, "s--", ms=3, lw=0.9, label="raw gamma gaps")
        ax1.set_xlabel("t")
        ax1.set_ylabel("sup gap")
        ax1.legend(fontsize=7)
        if wmag.ndim == 2:
            v = prof["v_axis"]
            im = ax2.imshow(
                wmag.T, origin="lower", extent=[v[0], v[-1], v[0], v[-1]], cmap="magma"
            )
            fig.colorbar(im, ax=ax2, shrink=0.85)
            ax2.set_title("|W|", fontsize=8)
        else:
            ax2.plot(prof["v_axis"], wmag[:, wmag.shape[1] // 2, wmag.shape[2] // 2])
            ax2.set_title("|W| central slice", fontsize=8)
        fig.tight_layout()
        _save(fig, out_path, values)
    return values


def plot_remainder(trace_dir, out_path):
    """t^{d/2}-scaled reconstruction residuals with the reference slopes."""
    report = _load(trace_dir)
    resids = report.get("recon_residuals")
    if not resids:
        raise FigureError("report.json has no reconstruction residuals")
    ts = np.array([r[0] for r in resids])
    rv = np.array([r[1] for r in resids])
    values = {
        "recon_residuals": [[float(a), float(b)] for a, b in resids],
        "residual_exponent": report.get("residual_exponent"),
    }
    with plt.style.context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2))
        ax.loglog(ts, rv, "o-", ms=3, lw=0.9, label="scaled residual")
        for slope, lbl in zip(
            report.get("residual_reference_slopes", []), ("theorem rate", "ray-bound rate")
        ):
            ax.loglog(ts, rv[0] * (ts / ts[0]) ** slope, "--", lw=0.7, label=f"{lbl} {slope:g}")
        if values["residual_exponent"] is not None:
            ax.set_title(f"fitted residual exponent {values['residual_exponent']:.17g}",
                         fontsize=8)
        ax.set_xlabel("t")
        ax.set_ylabel("t^(d/2) sup |u - reconstruction|")
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, out_path, values)
    return values


def render(trace_dir, kind, out_path, overlays=()):
    if kind == "decay":
        return plot_decay(trace_dir, out_path, overlays)
    if kind == "growth":
        return plot_growth(trace_dir, out_path)
    if kind == "phase_drift":
        return plot_phase_drift(trace_dir, out_path)
    if kind == "profile_convergence":
        return plot_profile_convergence(trace_dir, out_path)
    if kind == "remainder":
        return plot_remainder(trace_dir, out_path)
    raise FigureError(f"unknown figure kind {kind!r}; pick from {FIGURE_KINDS}")
