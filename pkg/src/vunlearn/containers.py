"""Single-file binary containers: one JSON header line plus a float32 blob.

Used for model checkpoints, estimator snapshots and oracle test fixtures.
The header records payload size and checksum so loads fail loudly (distinct
error types for malformed header, wrong version, truncation, corruption)
instead of returning silently damaged parameters.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import (
    ContainerChecksumError,
    ContainerFormatError,
    ContainerTruncationError,
    ContainerVersionError,
)

CONTAINER_FORMAT_VERSION = 1
_REQUIRED_KEYS = ("format_version", "kind", "blob_bytes", "blob_sha256")


def params_to_blob(arrays) -> bytes:
    """Concatenate parameter arrays into a little-endian float32 blob."""
    if not arrays:
        return b""
    flat = np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])
    return flat.astype("<f4").tobytes()


def blob_to_params(blob: bytes, shapes) -> list[np.ndarray]:
    """Inverse of params_to_blob; returns float64 arrays with the given shapes."""
    flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    expected = int(sum(int(np.prod(s)) for s in shapes))
    if flat.size != expected:
        raise ContainerTruncationError(
            f"blob holds {flat.size} values but shapes require {expected}"
        )
    out, k = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(flat[k : k + size].reshape(shape).copy())
        k += size
    return out


def write_container(path, kind: str, header: dict, blob: bytes) -> None:
    head = dict(header)
    head["format_version"] = CONTAINER_FORMAT_VERSION
    head["kind"] = kind
    head["blob_bytes"] = len(blob)
    head["blob_sha256"] = hashlib.sha256(blob).hexdigest()
    text = json.dumps(head, sort_keys=True, separators=(",", ":"))
    Path(path).write_bytes(text.encode("utf-8") + b"\n" + blob)


def read_container(path, kind: str | None = None) -> tuple[dict, bytes]:
    """Read and verify a container; returns (header, blob)."""
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ContainerFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"{path}: unreadable header: {exc}") from exc
    if not isinstance(header, dict):
        raise ContainerFormatError(f"{path}: header is not a JSON object")
    for key in _REQUIRED_KEYS:
        if key not in header:
            raise ContainerFormatError(f"{path}: header missing {key!r}")
    if header["format_version"] != CONTAINER_FORMAT_VERSION:
        raise ContainerVersionError(
            f"{path}: unsupported format_version {header['format_version']!r}"
        )
    if kind is not None and header["kind"] != kind:
        raise ContainerFormatError(
            f"{path}: expected kind {kind!r}, found {header['kind']!r}"
        )
    blob = raw[newline + 1 :]
    if len(blob) < header["blob_bytes"]:
        raise ContainerTruncationError(
            f"{path}: payload truncated ({len(blob)} of {header['blob_bytes']} bytes)"
        )
    if len(blob) > header["blob_bytes"]:
        raise ContainerFormatError(
            f"{path}: {len(blob) - header['blob_bytes']} unexpected trailing bytes"
        )
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise ContainerChecksumError(f"{path}: payload checksum mismatch")
    return header, blob
