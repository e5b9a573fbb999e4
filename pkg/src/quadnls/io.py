"""Snapshots, key=value configs, CSV diagnostics, text reports, parameter normalization."""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import spectral_core as sc
from .errors import CorruptSnapshot, VersionMismatch, ConfigError
from .functionals import FieldPair, PhysicalParams, check_mass_condition

# ------------------------------------------------------------ normalization

@dataclass(frozen=True)
class Normalization:
    """Normalized u(x) = a_u U(s x), v(x) = a_v V(s x) for raw (U, V); time is unchanged."""
    kappa: float
    a_u: complex
    a_v: complex
    x_scale: float        # s = 1/sqrt(2m)

    def describe(self):
        return (f"u = {self.a_u!r} * U(x * {self.x_scale!r}), v = {self.a_v!r} * V(x * {self.x_scale!r}), "
                f"kappa = {self.kappa!r}")

    def _regrid(self, g, factor):
        if isinstance(g, sc.RadialGrid):
            return sc.RadialGrid(g.d, g.nr, g.R_max * factor, g.order)
        return sc.Grid(g.d, g.n, g.L * factor)

    def to_normalized(self, fp_raw):
        g = self._regrid(fp_raw.grid, 1 / self.x_scale)
        return FieldPair(self.a_u * fp_raw.u, self.a_v * fp_raw.v, g)

    def to_raw(self, fp):
        g = self._regrid(fp.grid, self.x_scale)
        return FieldPair(fp.u / self.a_u, fp.v / self.a_v, g)


def normalize_params(raw: PhysicalParams):
    """kappa = m/M and the scaling taking the raw system to the normalized one."""
    if raw.m is None:
        raise ConfigError("normalize_params needs the raw constants m, M, lam, mu, c", "params.m")
    check_mass_condition(raw.lam, raw.mu, raw.c)
    s = 1 / np.sqrt(2 * raw.m)
    n = Normalization(kappa=raw.m / raw.M, a_u=np.sqrt(raw.c / 2) * abs(raw.mu),
                      a_v=-raw.lam / 2, x_scale=s)
    return n.kappa, n


# ------------------------------------------------------------ snapshots

MAGIC = b"QNLS1"
_HDR = struct.Struct("<5sBB1xqdddd32s")      # magic, d, kind, pad, n, L, kappa, t, order, sha256
TENSOR, RADIAL = 0, 1


def _payload(fp):
    u = np.ascontiguousarray(fp.u, dtype="<c16")
    v = np.ascontiguousarray(fp.v, dtype="<c16")
    return u.tobytes() + v.tobytes()


def save_snapshot(path, fp, meta=None):
    meta = dict(meta or {})
    g = fp.grid
    if isinstance(g, sc.RadialGrid):
        kind, n, L, order = RADIAL, g.nr, g.R_max, g.order
    else:
        kind, n, L, order = TENSOR, g.n, g.L, 0
    body = _payload(fp)
    hdr = _HDR.pack(MAGIC, g.d, kind, n, float(L), float(meta.get("kappa", np.nan)),
                    float(meta.get("t", 0.0)), float(order), hashlib.sha256(body).digest())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(hdr)
        fh.write(body)
    os.replace(tmp, path)


def read_header(buf):
    if len(buf) < 5:
        raise CorruptSnapshot("file too short for a header")
    if buf[:5] != MAGIC:
        raise VersionMismatch(f"magic {bytes(buf[:5])!r} is not {MAGIC!r}")
    if len(buf) < _HDR.size:
        raise CorruptSnapshot("truncated header")
    magic, d, kind, n, L, kappa, t, order, digest = _HDR.unpack_from(buf)
    if kind not in (TENSOR, RADIAL):
        raise CorruptSnapshot(f"unknown grid kind {kind}")
    return dict(d=d, kind=kind, n=n, L=L, kappa=kappa, t=t, order=int(order), checksum=digest)


def load_snapshot(path, with_meta=False):
    with open(path, "rb") as fh:
        buf = fh.read()
    h = read_header(buf)
    try:
        if h["kind"] == RADIAL:
            g = sc.RadialGrid(h["d"], h["n"], h["L"], h["order"])
        else:
            g = sc.Grid(h["d"], h["n"], h["L"])
    except Exception as exc:
        raise CorruptSnapshot(f"header describes an invalid grid: {exc}") from exc
    count = int(np.prod(g.shape))
    body = buf[_HDR.size:]
    if len(body) != 2 * 16 * count:
        raise CorruptSnapshot(f"payload has {len(body)} bytes, expected {32 * count}")
    if hashlib.sha256(body).digest() != h["checksum"]:
        raise CorruptSnapshot("checksum mismatch")
    arr = np.frombuffer(body, dtype="<c16")
    u = arr[:count].reshape(g.shape).astype(complex)
    v = arr[count:].reshape(g.shape).astype(complex)
    fp = FieldPair(u, v, g)
    if with_meta:
        return fp, {"t": h["t"], "kappa": h["kappa"]}
    return fp


# ------------------------------------------------------------ config

def parse_config(text):
    """key = value lines, '#' comments, keys like 'grid.n'. Returns a flat dict of strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", f"line {lineno}")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"line {lineno}: empty key", f"line {lineno}")
        if k in out:
            raise ConfigError(f"duplicate key {k}", k)
        out[k] = v
    return out


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def config_hash(cfg):
    text = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class Section:
    """Typed access to a config dict; errors name the offending key."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.used = set()

    def _raw(self, key, default):
        self.used.add(key)
        if key in self.cfg:
            return self.cfg[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required field {key}", key)
        return default

    def has(self, key):
        return key in self.cfg

    def str(self, key, default=None, choices=None):
        v = self._raw(key, default)
        if choices is not None and v not in choices:
            raise ConfigError(f"{key} must be one of {choices}, got {v!r}", key)
        return v

    def float(self, key, default=None, positive=False):
        v = self._raw(key, default)
        if v is None:
            return None
        try:
            x = float(v)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {v!r}", key) from None
        if positive and not x > 0:
            raise ConfigError(f"{key} must be positive", key)
        return x

    def int(self, key, default=None, positive=False):
        v = self._raw(key, default)
        if v is None:
            return None
        try:
            x = int(v)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {v!r}", key) from None
        if positive and not x > 0:
            raise ConfigError(f"{key} must be positive", key)
        return x

    def bool(self, key, default=None):
        v = self._raw(key, default)
        if isinstance(v, bool) or v is None:
            return v
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {v!r}", key)

    def floats(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, (list, tuple)):
            return v
        try:
            return [float(x) for x in v.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{key} must be a list of numbers", key) from None


_REQUIRED = object()
REQUIRED = _REQUIRED


# ------------------------------------------------------------ CSV and reports

def fmt(x):
    """17 significant digits; None prints as an empty cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(row.get(c)) for c in columns) + "\n")


def diagnostics_rows(diags):
    return [{k: getattr(r, k) for k in ("t", "M", "E", "K", "P", "variance", "virial_first", "ball_mass")}
            for r in diags]


def write_report(path, title, cfg, grid, items, checks):
    """items: list of (key, value); checks: list of (name, passed, detail)."""
    lines = [f"# {title}", f"config_hash = {config_hash(cfg)}", f"grid = {grid.describe()}"]
    for k, v in items:
        lines.append(f"{k} = {fmt(v)}")
    for name, ok, detail in checks:
        lines.append(f"check {name}: {'PASS' if ok else 'FAIL'} {detail}")
    lines.append(f"overall = {'PASS' if all(c[1] for c in checks) else 'FAIL'}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return lines
