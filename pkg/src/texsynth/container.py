"""Versioned checksummed binary container for trained artifacts.

One family serves both neural models and AR banks: a JSON manifest (kind,
format version, arbitrary metadata, array directory) followed by contiguous
little-endian float64 blobs and a trailing whole-file SHA-256.  Writing is
deterministic: same payload, same bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError, VersionError

MAGIC = b"TEXSYNTHBIN\x00"
VERSION = 1


def write_container(path: str | Path, kind: str, meta: dict,
                    arrays: dict[str, np.ndarray]) -> Path:
    """Serialize ``meta`` plus named float64 arrays under a checksum."""
    path = Path(path)
    directory = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        directory.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    manifest = json.dumps(
        {"kind": kind, "version": VERSION, "meta": meta, "arrays": directory},
        sort_keys=True,
    ).encode("utf-8")

    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", VERSION)
    body += struct.pack("<Q", len(manifest))
    body += manifest
    for blob in blobs:
        body += blob
    body += hashlib.sha256(bytes(body)).digest()
    path.write_bytes(bytes(body))
    return path


def read_container(path: str | Path,
                   expected_kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Load and verify a container; returns (meta, arrays)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 12 + 32:
        raise ChecksumError(f"{path}: file too short to be a container")
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, not a texsynth container")
    digest = blob[-32:]
    if hashlib.sha256(blob[:-32]).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch (corrupt or truncated)")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if version != VERSION:
        raise VersionError(f"{path}: unsupported container version {version}")
    (manifest_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    manifest = json.loads(blob[offset:offset + manifest_len].decode("utf-8"))
    offset += manifest_len
    if expected_kind is not None and manifest["kind"] != expected_kind:
        raise FormatError(
            f"{path}: container holds {manifest['kind']!r}, expected {expected_kind!r}"
        )
    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return manifest["meta"], arrays
