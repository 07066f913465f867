"""Bit-exact file formats: TFF1 field snapshots, JSON documents, CSV series.

TFF1 layout (little endian)::

    b"TFF1" | u32 version = 1 | u8 d | u32 N | f64 time | (2N+1)^d x (f64 re, f64 im)

Modes are stored in lexicographic order of ``(m_1, ..., m_d)`` from
``(-N, ..., -N)``, which is C order of the full-lattice array.
"""

from __future__ import annotations

import csv
import json
import platform
import struct
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .lattice_field import hermitian_defect

MAGIC = b"TFF1"
VERSION = 1
_HEADER = struct.Struct("<4sIBId")
HERMITIAN_TOL = 1e-12


class FormatError(ValueError):
    """A file does not follow its declared format."""


def encode_tff(u: np.ndarray, d: int, time: float = 0.0) -> bytes:
    a = np.asarray(u, dtype=np.complex128)
    if a.ndim != d or len(set(a.shape)) != 1 or a.shape[0] % 2 != 1:
        raise FormatError(f"expected a full ({'K,' * d}) lattice array, got shape {a.shape}")
    N = (a.shape[0] - 1) // 2
    body = np.ascontiguousarray(a).view(np.float64).astype("<f8").tobytes()
    return _HEADER.pack(MAGIC, VERSION, d, N, float(time)) + body


def decode_tff(buf: bytes) -> tuple:
    """Return ``(field, d, N, time)``; validates size and Hermitian symmetry."""
    if len(buf) < _HEADER.size:
        raise FormatError("truncated TFF1 header")
    magic, ver, d, N, time = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if ver != VERSION:
        raise FormatError(f"unsupported TFF1 version {ver}")
    K = 2 * N + 1
    n = K ** d
    body = buf[_HEADER.size:]
    if len(body) != 16 * n:
        raise FormatError(f"payload has {len(body)} bytes, expected {16 * n}")
    vals = np.frombuffer(body, dtype="<f8").astype(np.float64)
    u = (vals[0::2] + 1j * vals[1::2]).reshape((K,) * d)
    defect = hermitian_defect(u, d)
    if defect > HERMITIAN_TOL:
        raise FormatError(f"field is not Hermitian (defect {defect:.3e} > {HERMITIAN_TOL})")
    return u, d, N, time


def write_tff(path, u: np.ndarray, d: int, time: float = 0.0) -> None:
    Path(path).write_bytes(encode_tff(u, d, time))


def read_tff(path) -> tuple:
    return decode_tff(Path(path).read_bytes())


def write_tff_sequence(directory, snapshots: Iterable[tuple], d: int, stem: str = "snap") -> list:
    """Write ``(time, field)`` pairs as numbered TFF1 files; return the names."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, (t, u) in enumerate(snapshots):
        name = f"{stem}_{i:05d}.tff"
        write_tff(out / name, u, d, t)
        names.append(name)
    return names


# ---------------------------------------------------------------------------
# structured text


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def dumps(obj) -> str:
    """Stable JSON: sorted keys, round-trip float repr, trailing newline."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def versions() -> dict:
    import scipy

    return {"tensorfield": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": sys.version.split()[0], "platform": platform.platform()}


def manifest(command: str, config: dict, outputs: Sequence[str] = ()) -> dict:
    """Resolved configuration, seed and versions of one run.

    Nothing here depends on wall-clock time, so a manifest and its seed
    determine every output byte.
    """
    return {"command": command, "config": dict(config), "seed": config.get("seed"),
            "versions": versions(), "outputs": list(outputs), "format": 1}
