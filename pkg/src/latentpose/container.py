"""Versioned flat-file container for model parameters.

Layout (all integers little-endian)::

    8 bytes   magic  b"LPMODEL\\0"
    uint32    format version (currently 1)
    uint32    header length in bytes
    header    UTF-8 text, one ``key=value`` per line
    payload   float64 little-endian arrays, row-major, in header order

Header keys: ``kind`` (model type), ``n_arrays``, then ``array.<i>=<name>
<d0>x<d1>x...`` for each array, then any number of ``meta.<key>=<value>``
lines. Files contain no timestamps, so identical parameters always produce
identical bytes.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"LPMODEL\x00"
VERSION = 1


def _shape_str(shape) -> str:
    return "x".join(str(int(d)) for d in shape) if len(shape) else "scalar"


def _parse_shape(text: str) -> tuple[int, ...]:
    if text == "scalar":
        return ()
    try:
        return tuple(int(d) for d in text.split("x"))
    except ValueError as exc:
        raise FormatError(f"bad array shape {text!r}") from exc


def encode_model(kind: str, arrays: dict[str, np.ndarray], meta: dict[str, object] | None = None) -> bytes:
    lines = [f"kind={kind}", f"n_arrays={len(arrays)}"]
    for i, (name, arr) in enumerate(arrays.items()):
        if any(c in name for c in " \n="):
            raise ValueError(f"array name {name!r} contains reserved characters")
        lines.append(f"array.{i}={name} {_shape_str(np.shape(arr))}")
    for key, value in (meta or {}).items():
        text = str(value)
        if "\n" in text or "\n" in key or "=" in key:
            raise ValueError(f"meta entry {key!r} contains reserved characters")
        lines.append(f"meta.{key}={text}")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + payload


def decode_model(blob: bytes) -> tuple[str, dict[str, np.ndarray], dict[str, str]]:
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise FormatError("not a model file (bad magic)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise FormatError(f"unsupported model format version {version} (expected {VERSION})")
    if len(blob) < 16 + hlen:
        raise FormatError("truncated model header")
    try:
        header = blob[16 : 16 + hlen].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("model header is not UTF-8") from exc
    fields: dict[str, str] = {}
    for line in header.splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"malformed header line {line!r}")
        fields[key] = value
    try:
        kind = fields["kind"]
        n = int(fields["n_arrays"])
        specs = [fields[f"array.{i}"].rsplit(" ", 1) for i in range(n)]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"incomplete model header: {exc}") from exc
    arrays: dict[str, np.ndarray] = {}
    offset = 16 + hlen
    for name, shape_text in specs:
        shape = _parse_shape(shape_text)
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(blob):
            raise FormatError(f"truncated model payload at array {name!r}")
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=offset).astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after model payload")
    meta = {k[5:]: v for k, v in fields.items() if k.startswith("meta.")}
    return kind, arrays, meta


def save_model(path, kind: str, arrays: dict[str, np.ndarray], meta: dict[str, object] | None = None) -> str:
    """Write a model file and return the SHA-256 of its bytes."""
    blob = encode_model(kind, arrays, meta)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_model(path) -> tuple[str, dict[str, np.ndarray], dict[str, str]]:
    return decode_model(Path(path).read_bytes())


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
