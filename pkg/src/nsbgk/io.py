"""Config files, snapshot directories and diagnostics CSVs.

Snapshot layout::

    <dir>/manifest.json   schema version, grid spec, config echo, time, sha256 per file
    <dir>/f.csv, rho.csv, h.csv, u.csv

Each array file starts with a ``# axes=... shape=...`` header and stores the
array flattened to 2D (last axis as columns) in row-major order, every value
printed with 17 significant digits.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io as _io
import json
import os
import types
import typing

import numpy as np

from .config import SimConfig, config_fields
from .diagnostics import DiagnosticsRow, row_columns
from .domain import PhaseGrid, grid_from_spec
from .errors import (ChecksumError, ConfigError, ShapeError, SnapshotError,
                     UnsupportedVersionError)

SCHEMA_VERSION = 1
ARRAYS = ("f", "rho", "h", "u")


# -- config -------------------------------------------------------------------

def _field_kind(f: dataclasses.Field):
    hint = typing.get_type_hints(SimConfig)[f.name]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    base = args[0] if args else hint
    optional = type(None) in typing.get_args(hint) or isinstance(hint, types.UnionType)
    return base, optional


def _coerce(name, raw):
    f = config_fields()[name]
    base, optional = _field_kind(f)
    if isinstance(raw, str):
        text = raw.strip()
        if optional and text.lower() in ("none", "null", ""):
            return None
        try:
            if base is bool:
                low = text.lower()
                if low in ("true", "yes", "on", "1"):
                    return True
                if low in ("false", "no", "off", "0"):
                    return False
                raise ValueError(text)
            if base is int:
                return int(text)
            if base is float:
                return float(text)
            return text.strip("\"'")
        except ValueError:
            raise ConfigError(f"config key {name!r}: cannot read {raw!r} as "
                              f"{base.__name__}") from None
    if raw is None:
        if optional:
            return None
        raise ConfigError(f"config key {name!r} may not be null")
    if base is bool:
        if not isinstance(raw, bool):
            raise ConfigError(f"config key {name!r}: expected true/false, got {raw!r}")
        return raw
    if base is int:
        if isinstance(raw, bool) or not float(raw).is_integer():
            raise ConfigError(f"config key {name!r}: expected an integer, got {raw!r}")
        return int(raw)
    if base is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"config key {name!r}: expected a number, got {raw!r}")
        return float(raw)
    if not isinstance(raw, str):
        raise ConfigError(f"config key {name!r}: expected a string, got {raw!r}")
    return raw


def _parse_ini(text, path):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not s or (s.startswith("[") and s.endswith("]")):
            continue
        if "=" not in s:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        k, v = (p.strip() for p in s.split("=", 1))
        if k in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {k!r}")
        out[k] = v
    return out


def config_from_mapping(values: dict, source: str = "<mapping>") -> SimConfig:
    known = config_fields()
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"{source}: unknown config key(s): {', '.join(unknown)}")
    kw = {k: _coerce(k, v) for k, v in values.items()}
    return SimConfig(**kw)


def parse_config(path) -> SimConfig:
    """Read a flat JSON object or INI-style ``key = value`` file."""
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        nested = [k for k, v in values.items() if isinstance(v, (dict, list))]
        if nested:
            raise ConfigError(f"{path}: config must be flat; nested value for {nested[0]!r}")
    else:
        values = _parse_ini(text, path)
    return config_from_mapping(values, path)


# -- arrays -----------------------------------------------------------------------

def _array_text(a: np.ndarray, axes: list[str]) -> str:
    a = np.asarray(a, dtype=float)
    shape = a.shape
    flat = a.reshape(-1, shape[-1]) if a.ndim > 1 else a.reshape(1, -1)
    buf = _io.StringIO()
    buf.write(f"# axes={','.join(axes)} shape={','.join(str(s) for s in shape)}\n")
    for row in flat:
        buf.write(",".join("%.17g" % x for x in row))
        buf.write("\n")
    return buf.getvalue()


def _read_array(path: str, expected_shape: tuple) -> np.ndarray:
    name = os.path.basename(path)
    with open(path, encoding="ascii") as fh:
        header = fh.readline()
        if not header.startswith("# axes="):
            raise SnapshotError(f"{name}: missing '# axes=... shape=...' header")
        try:
            shape = tuple(int(s) for s in header.split("shape=")[1].split(",") if s.strip())
        except (IndexError, ValueError):
            raise SnapshotError(f"{name}: malformed header {header.strip()!r}") from None
        if shape != tuple(expected_shape):
            raise ShapeError(f"{name}: header shape {shape} does not match grid shape "
                             f"{tuple(expected_shape)}")
        try:
            data = np.loadtxt(fh, delimiter=",", dtype=float, ndmin=2)
        except ValueError as exc:
            raise SnapshotError(f"{name}: unreadable values ({exc})") from None
    if data.size != int(np.prod(shape)):
        raise ShapeError(f"{name}: holds {data.size} values, shape {shape} needs "
                         f"{int(np.prod(shape))}")
    return data.reshape(shape)


def _axes(grid: PhaseGrid):
    xs = [f"x{i + 1}" for i in range(grid.dim)]
    vs = [f"v{i + 1}" for i in range(grid.dim)]
    return {"f": xs + vs, "rho": xs, "h": xs, "u": ["component"] + xs}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_snapshot(state, directory, grid: PhaseGrid, cfg: SimConfig | None = None) -> dict:
    """Write the arrays of ``state`` plus manifest.json; returns the manifest."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    axes = _axes(grid)
    files = {}
    for name in ARRAYS:
        fname = f"{name}.csv"
        path = os.path.join(directory, fname)
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(_array_text(getattr(state, name), axes[name]))
        files[name] = {"file": fname, "sha256": _sha256(path)}
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "grid": grid.spec(),
        "config": cfg.to_dict() if cfg is not None else None,
        "t": float(state.t),
        "gamma": float(state.gamma),
        "arrays": files,
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


@dataclasses.dataclass
class Snapshot:
    state: object
    grid: PhaseGrid
    config: SimConfig | None
    manifest: dict


def read_snapshot(directory) -> Snapshot:
    """Load a snapshot, verifying version, checksums and shapes."""
    from .stepper import SystemState

    directory = os.fspath(directory)
    mpath = os.path.join(directory, "manifest.json")
    try:
        with open(mpath, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise SnapshotError(f"no manifest.json in {directory}") from None
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"manifest.json: invalid JSON ({exc.msg})") from None
    version = manifest.get("schema_version")
    if not isinstance(version, int):
        raise SnapshotError("manifest.json: missing schema_version")
    if version > SCHEMA_VERSION:
        raise UnsupportedVersionError(
            f"manifest.json: schema_version {version} is newer than supported "
            f"version {SCHEMA_VERSION}")
    missing = [k for k in ("grid", "t", "arrays") if k not in manifest]
    if missing:
        raise SnapshotError(f"manifest.json: missing key(s) {', '.join(missing)}")
    grid = grid_from_spec(manifest["grid"])
    cfg = SimConfig(**manifest["config"]) if manifest.get("config") else None
    shapes = {"f": grid.shape, "rho": grid.nx, "h": grid.nx, "u": (grid.dim,) + grid.nx}
    arrays = {}
    for name in ARRAYS:
        entry = manifest["arrays"].get(name)
        if entry is None:
            raise SnapshotError(f"manifest.json: no entry for array {name!r}")
        path = os.path.join(directory, entry["file"])
        if not os.path.exists(path):
            raise SnapshotError(f"{entry['file']}: file missing")
        if _sha256(path) != entry["sha256"]:
            raise ChecksumError(f"{entry['file']}: checksum mismatch (file corrupted or truncated)")
        arrays[name] = _read_array(path, shapes[name])
    gamma = float(manifest.get("gamma", cfg.gamma if cfg else 1.4))
    st = SystemState(arrays["f"], arrays["rho"], arrays["h"], arrays["u"], gamma,
                     float(manifest["t"]))
    return Snapshot(st, grid, cfg, manifest)


# -- diagnostics CSV ------------------------------------------------------------------

class DiagnosticsWriter:
    """Append-only CSV, one row per step, columns in :func:`row_columns` order."""

    def __init__(self, path, dim: int):
        self.path = os.fspath(path)
        self.dim = dim
        self._fh = open(self.path, "w", encoding="ascii", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(row_columns(dim))

    def write(self, row: DiagnosticsRow):
        self._w.writerow(row.format(self.dim))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path) -> dict[str, np.ndarray]:
    with open(path, encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(c) for c in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def write_iteration_trace(trace, path):
    """n, sup E^{n+1}, r^n (empty for n = 0), sup D^{n+1}."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "sup_E", "r", "sup_D"])
        for n, sup in enumerate(trace.sup_E):
            r = "" if n == 0 else "%.17g" % trace.ratios[n - 1]
            w.writerow([n, "%.17g" % sup, r, "%.17g" % float(np.max(trace.D[n]))])


__all__ = [
    "parse_config", "config_from_mapping", "write_snapshot", "read_snapshot", "Snapshot",
    "DiagnosticsWriter", "read_diagnostics", "write_iteration_trace", "SCHEMA_VERSION",
]
