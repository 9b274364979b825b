"""Scenario configuration: key=value text files with validated defaults."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ConfigError(ValueError):
    """Invalid scenario configuration (CLI exit code 3)."""


_EQUATIONS = ("linear", "hartree", "bopp_podolsky", "power")


@dataclass(frozen=True)
class ScenarioConfig:
    equation: str = "hartree"
    d: int = 2
    n: int | None = None                # default 256 (d=2) / 64 (d=3)
    L: float | None = None              # default 12 (d=2) / 8 (d=3)
    epsilon: float = 0.1
    initial_data: str = "gaussian"      # gaussian | file
    data_width: float = 1.0
    data_center: tuple = ()
    data_velocity: tuple = ()
    data_file: str = ""
    beta: float | None = None           # default d/2 + 1/10
    dt: float | None = None             # default keeps Nyquist phase/step <= 0.1
    t_end: float | None = None          # default 32 (d=2) / 16 (d=3)
    checkpoint_times: tuple = ()        # default dyadic 1,2,4,... <= t_end
    analysis_log_spacing: float = 0.1
    v_max: float | None = None          # default L / (4 t_end)
    sigma: int = 1
    wavepacket_width: float = 1.0
    kernel_truncation: float | None = None  # default L
    guard_limit: float = 1e-6
    guard_fraction: float = 0.75
    dealias: bool = False
    decay_fit_window: tuple = (4.0, np.inf)
    seed: int = 0
    emit_snapshots: bool = True
    out_dir: str = "out"

    def resolve(self) -> "ScenarioConfig":
        """Fill the documented defaults and check every invariant."""
        if self.equation not in _EQUATIONS:
            raise ConfigError(f"unknown equation {self.equation!r}; pick from {_EQUATIONS}")
        if self.d not in (2, 3):
            raise ConfigError(f"d must be 2 or 3, got {self.d}")
        n = self.n if self.n is not None else (256 if self.d == 2 else 64)
        L = self.L if self.L is not None else (12.0 if self.d == 2 else 8.0)
        if n < 8 or (n & (n - 1)) != 0:
            raise ConfigError(f"n must be a power of two >= 8, got {n}")
        if L <= 0:
            raise ConfigError(f"L must be positive, got {L}")
        if not (0 < self.epsilon <= 0.5):
            raise ConfigError(
                f"epsilon = {self.epsilon} outside the small-data guard (0, 0.5]"
            )
        if self.initial_data not in ("gaussian", "file"):
            raise ConfigError(f"initial_data must be gaussian or file, not {self.initial_data!r}")
        if self.initial_data == "file" and not self.data_file:
            raise ConfigError("initial_data = file requires data_file")
        if self.sigma not in (1, -1):
            raise ConfigError("sigma must be +1 or -1")
        if self.wavepacket_width <= 0 or self.data_width <= 0:
            raise ConfigError("widths must be positive")
        t_end = self.t_end if self.t_end is not None else (32.0 if self.d == 2 else 16.0)
        if t_end < 1.0:
            raise ConfigError("t_end must be >= 1 (analysis starts at t = 1)")
        beta = self.beta if self.beta is not None else self.d / 2.0 + 0.1
        k_ny = np.pi * n / (2.0 * L)
        dt = self.dt if self.dt is not None else 0.1 / k_ny**2
        # snap dt so that t = 1 and t_end sit on the step lattice
        dt = 1.0 / max(1, int(np.ceil(1.0 / dt)))
        if abs(round(t_end / dt) * dt - t_end) > 1e-9:
            raise ConfigError(f"t_end = {t_end} is not a multiple of dt = {dt}")
        if self.checkpoint_times:
            chk = tuple(float(t) for t in self.checkpoint_times)
            if any(t < 1.0 or t > t_end for t in chk):
                raise ConfigError("checkpoint times must lie in [1, t_end]")
            if tuple(sorted(chk)) != chk:
                raise ConfigError("checkpoint times must be sorted")
        else:
            chk = []
            t = 1.0
            while t < t_end * (1 + 1e-12):
                chk.append(t)
                t *= 2.0
            if chk[-1] != t_end:
                chk.append(t_end)
            chk = tuple(chk)
        v_max = self.v_max if self.v_max is not None else L / (4.0 * t_end)
        if 4.0 * t_end * v_max > 2.0 * L * (1 + 1e-12):
            raise ConfigError("v_max too large: wavepacket centers leave the box")
        data_center = tuple(self.data_center) if self.data_center else (0.0,) * self.d
        data_velocity = (
            tuple(self.data_velocity) if self.data_velocity else (0.0,) * self.d
        )
        if len(data_center) != self.d or len(data_velocity) != self.d:
            raise ConfigError("data_center / data_velocity must have d components")
        R = self.kernel_truncation if self.kernel_truncation is not None else L
        if not (0 < R <= L):
            raise ConfigError(f"kernel truncation must lie in (0, L], got {R}")
        lo, hi = self.decay_fit_window
        if not (0 < lo < hi):
            raise ConfigError("decay_fit_window must be an increasing positive pair")
        return replace(
            self,
            n=n,
            L=L,
            beta=beta,
            dt=dt,
            t_end=t_end,
            checkpoint_times=chk,
            v_max=v_max,
            data_center=data_center,
            data_velocity=data_velocity,
            kernel_truncation=R,
            decay_fit_window=(float(lo), float(hi)),
        )

    def analysis_times(self) -> np.ndarray:
        """Geometric ladder from 1 to t_end plus the checkpoints, on the dt lattice."""
        count = int(np.ceil(np.log(self.t_end) / self.analysis_log_spacing)) + 1
        ladder = np.exp(np.linspace(0.0, np.log(self.t_end), max(count, 2)))
        times = np.concatenate([ladder, np.array(self.checkpoint_times)])
        snapped = np.round(times / self.dt) * self.dt
        return np.unique(snapped)

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, tuple):
                out[k] = list(v)
            elif isinstance(v, (np.floating, np.integer)):
                out[k] = v.item()
            elif isinstance(v, float) and not np.isfinite(v):
                out[k] = repr(v)
            else:
                out[k] = v
        return out


_BOOL = {"true": True, "false": False, "yes": True, "no": False}


def _parse_value(raw: str, lineno: int):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if "," in raw:
        return tuple(_parse_value(part, lineno) for part in raw.split(","))
    low = raw.lower()
    if low in _BOOL:
        return _BOOL[low]
    if low == "inf":
        return np.inf
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config_text(text: str, source: str = "<config>") -> ScenarioConfig:
    known = set(ScenarioConfig.__dataclass_fields__)
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(raw, lineno)
    try:
        cfg = ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        return cfg.resolve()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def parse_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))
