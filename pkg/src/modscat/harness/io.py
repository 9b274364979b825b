"""File formats: snapshots, gamma checkpoints, trace CSV, reports, manifest.

Snapshot: one JSON header line {version, d, n, L, t, equation, epsilon,
endianness, checksum}, then n^d complex values as interleaved little-endian
binary64 (re, im) in row-major order.  Gamma checkpoint: one key=value header
line, the v-axis nodes, then the complex values, all little-endian binary64.
CSV: a schema line, a header row, then rows with 17 significant digits.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from ..grid import ComplexField, GridSpec
from ..wavepacket import GammaField, VelocityGrid

SNAPSHOT_VERSION = 1
CSV_SCHEMA = "modscat-trace-csv,1"

CSV_COLUMNS = [
    "t",
    "mass",
    "linf",
    "jbeta",
    "jbracket",
    "h0beta",
    "jbeta_route_gap",
    "boundary_mass",
    "gamma_sup",
    "gamma_sup_ratio",
    "gamma_l2_ratio",
    "gamma_dbeta_ratio",
    "phys_gap_ratio",
    "fourier_gap_ratio",
    "conv_vs_direct",
    "fourier_vs_direct",
]


def _sha256(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def write_snapshot(field: ComplexField, path, equation: str = "", epsilon: float = 0.0):
    g = field.grid
    inter = np.empty(g.shape + (2,), dtype="<f8")
    inter[..., 0] = field.values.real
    inter[..., 1] = field.values.imag
    payload = inter.tobytes(order="C")
    header = {
        "version": SNAPSHOT_VERSION,
        "d": g.d,
        "n": g.n,
        "L": g.L,
        "t": field.t,
        "equation": equation,
        "epsilon": epsilon,
        "endianness": "little",
        "checksum": _sha256(payload),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(payload)


def read_snapshot(path) -> ComplexField:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        payload = fh.read()
    if header.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {header.get('version')}")
    if header.get("checksum") != _sha256(payload):
        raise ValueError(f"snapshot {path} is corrupted (checksum mismatch)")
    g = GridSpec(int(header["d"]), int(header["n"]), float(header["L"]))
    count = g.n**g.d * 2
    dtype = "<f8" if header.get("endianness", "little") == "little" else ">f8"
    flat = np.frombuffer(payload, dtype=dtype)
    if flat.size != count:
        raise ValueError(f"snapshot {path} has {flat.size} values, expected {count}")
    inter = flat.astype(float).reshape(g.shape + (2,))
    vals = inter[..., 0] + 1j * inter[..., 1]
    return ComplexField(g, vals, "physical", float(header["t"]))


def write_gamma(gamma: GammaField, path):
    b = gamma.vgrid.box
    header = (
        f"modscat-gamma v=1 d={b.d} n={b.n} v_max={float(gamma.vgrid.v_max)!r} "
        f"t={float(gamma.t)!r} method={gamma.method} endian=little\n"
    )
    inter = np.empty(b.shape + (2,), dtype="<f8")
    inter[..., 0] = gamma.values.real
    inter[..., 1] = gamma.values.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(b.x_axis.astype("<f8").tobytes())
        fh.write(inter.tobytes(order="C"))


def read_gamma(path) -> GammaField:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        fields = dict(item.split("=", 1) for item in header.split()[1:])
        if fields.get("v") != "1":
            raise ValueError(f"unsupported gamma file header {header!r}")
        d, n = int(fields["d"]), int(fields["n"])
        v_max = float(fields["v_max"])
        t = float(fields["t"])
        axis = np.frombuffer(fh.read(8 * n), dtype="<f8")
        flat = np.frombuffer(fh.read(), dtype="<f8")
    if flat.size != 2 * n**d:
        raise ValueError(f"gamma file {path} truncated")
    box = GridSpec(d, n, v_max)
    if np.max(np.abs(box.x_axis - axis)) > 1e-12:
        raise ValueError(f"gamma file {path} axis mismatch")
    inter = flat.astype(float).reshape(box.shape + (2,))
    vals = inter[..., 0] + 1j * inter[..., 1]
    return GammaField(t, VelocityGrid(box, v_max), vals, fields["method"])


def format_csv_row(values) -> str:
    return ",".join("%.17g" % v for v in values)


def write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_SCHEMA + "\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(format_csv_row([row[c] for c in CSV_COLUMNS]) + "\n")


def read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        schema = fh.readline().strip()
        if schema != CSV_SCHEMA:
            raise ValueError(f"unexpected CSV schema {schema!r}")
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            rows.append({k: float(v) for k, v in zip(header, line.split(","))})
    return rows


def write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def array_to_lists(arr: np.ndarray, digits: int = 9):
    fmt = f"%.{digits}g"

    def conv(a):
        if a.ndim == 1:
            return [float(fmt % v) for v in a]
        return [conv(row) for row in a]

    return conv(np.asarray(arr, dtype=float))


def write_manifest(out_dir, config_dict: dict, grid: GridSpec, wall_clock: float,
                   status: str, artifacts):
    entries = []
    for name in sorted(artifacts):
        p = os.path.join(out_dir, name)
        with open(p, "rb") as fh:
            payload = fh.read()
        entries.append({"path": name, "bytes": len(payload), "sha256": _sha256(payload)})
    manifest = {
        "format": "modscat-run-manifest",
        "version": 1,
        "status": status,
        "config": config_dict,
        "grid_hash": _sha256(grid.x_axis.tobytes() + grid.k_axis.tobytes()),
        "wall_clock_s": wall_clock,
        "artifacts": entries,
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def verify_manifest(out_dir) -> dict:
    manifest = read_json(os.path.join(out_dir, "manifest.json"))
    for entry in manifest["artifacts"]:
        p = os.path.join(out_dir, entry["path"])
        with open(p, "rb") as fh:
            payload = fh.read()
        if _sha256(payload) != entry["sha256"]:
            raise ValueError(f"artifact {entry['path']} fails its checksum")
    return manifest
