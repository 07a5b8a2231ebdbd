"""Binary container for response data and result bundles.

Layout (all integers little-endian)::

    b"RBC1" | uint32 version | uint64 manifest length | UTF-8 JSON manifest
    repeated: uint32 name length | UTF-8 name | uint32 ndim | uint64 dims... | float64 LE data
    uint64 checksum

The checksum is the 8-byte BLAKE2b digest of every preceding byte.  The
manifest lists each array's shape under ``"arrays"``; readers reject files
whose payload disagrees with it.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"RBC1"
VERSION = 1


class DatasetError(ValueError):
    """Malformed, truncated or corrupted container."""


@dataclass
class Container:
    manifest: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)


def checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def encode(manifest: dict, arrays: dict[str, np.ndarray]) -> bytes:
    man = dict(manifest)
    man["arrays"] = {k: list(np.shape(v)) for k, v in arrays.items()}
    text = json.dumps(man, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(text)), text]
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<Q", checksum(body))


def decode(data: bytes) -> Container:
    if len(data) < 24 or data[:4] != MAGIC:
        raise DatasetError("not an RBC1 container (bad magic)")
    body, tail = data[:-8], data[-8:]
    if struct.unpack("<Q", tail)[0] != checksum(body):
        raise DatasetError("checksum mismatch: file is corrupted or truncated")
    version, mlen = struct.unpack_from("<IQ", body, 4)
    if version != VERSION:
        raise DatasetError(f"unsupported container version {version}")
    pos = 16
    if pos + mlen > len(body):
        raise DatasetError("manifest length exceeds file size")
    try:
        manifest = json.loads(body[pos: pos + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetError(f"manifest is not valid UTF-8 JSON: {exc}") from None
    pos += mlen
    declared = manifest.get("arrays", {})
    arrays = {}
    try:
        while pos < len(body):
            (nlen,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos: pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", body, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}Q", body, pos)
            pos += 8 * ndim
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * count > len(body):
                raise DatasetError(f"array {name!r} runs past the end of the payload")
            arrays[name] = np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += 8 * count
    except struct.error as exc:
        raise DatasetError(f"truncated array header: {exc}") from None
    if set(declared) != set(arrays):
        raise DatasetError(f"manifest declares arrays {sorted(declared)}, payload has {sorted(arrays)}")
    for name, shape in declared.items():
        if list(arrays[name].shape) != list(shape):
            raise DatasetError(f"array {name!r} has shape {arrays[name].shape}, manifest says {shape}")
    return Container(manifest, arrays)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_container(path, manifest: dict, arrays: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, encode(manifest, arrays))


def read_container(path) -> Container:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None
    return decode(data)


# -- response datasets ---------------------------------------------------------------------------

def response_to_container(R, config_echo: dict | None = None, q_true=None, W_ref=None,
                          provenance: dict | None = None):
    """Manifest and arrays for a :class:`ResponseData`."""
    manifest = {
        "type": "response",
        "T": R.T,
        "dt": R.dt,
        "kind": R.kind,
        "n_tau": R.n_tau,
        "n_gamma": R.n_gamma,
        "synthetic_noise_level": R.synthetic_noise_level,
        "nonlocal_source": bool(R.nonlocal_source),
        "domain": R.meta,
        "config": config_echo or {},
        "provenance": provenance or {},
    }
    arrays = {"kernel": R.kernel, "gamma_weights": R.gamma_weights}
    if q_true is not None:
        arrays["q_true"] = np.asarray(q_true, dtype=float)
    if W_ref is not None:
        arrays["W_ref"] = np.asarray(W_ref, dtype=float)
    return manifest, arrays


def save_response(path, R, **kw) -> None:
    manifest, arrays = response_to_container(R, **kw)
    write_container(path, manifest, arrays)


def load_response(path):
    """Returns ``(ResponseData, container)``; raises :class:`DatasetError`."""
    from .wave_forward import ResponseData

    c = read_container(path)
    m = c.manifest
    if m.get("type") != "response":
        raise DatasetError(f"{path} is not a response dataset (type={m.get('type')!r})")
    for key in ("T", "dt", "kind", "n_tau", "n_gamma", "domain"):
        if key not in m:
            raise DatasetError(f"manifest misses {key!r}")
    k = c.arrays.get("kernel")
    if k is None or k.shape != (2 * m["n_tau"], m["n_gamma"], m["n_gamma"]):
        raise DatasetError("kernel missing or inconsistent with n_tau / n_gamma")
    try:
        R = ResponseData(k, m["T"], m["dt"], c.arrays["gamma_weights"], kind=m["kind"],
                         synthetic_noise_level=m.get("synthetic_noise_level", 0.0),
                         nonlocal_source=m.get("nonlocal_source", False), meta=m["domain"])
    except (ValueError, KeyError) as exc:
        raise DatasetError(f"invalid response payload: {exc}") from None
    return R, c
