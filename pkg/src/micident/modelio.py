"""Versioned binary container for trained models.

Layout: 8-byte magic, uint32 LE header length, UTF-8 JSON header, then a
payload of raw little-endian float32 arrays in declared order. The
header records per-array byte offsets and the SHA-256 of the payload,
which is verified on load.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import BadConfig, MissingFile

MAGIC = b"MICIDENT"
FORMAT_VERSION = 1


def save_container(path, kind: str, meta: dict, arrays: Sequence[Tuple[str, np.ndarray]]) -> None:
    """Write arrays plus metadata to the container format."""
    blobs: List[bytes] = []
    index = []
    offset = 0
    for name, arr in arrays:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append(
            {"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)}
        )
        blobs.append(data)
        offset += len(data)
    payload = b"".join(blobs)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "arrays": index,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def load_container(path) -> Tuple[str, dict, Dict[str, np.ndarray]]:
    """Read a container; returns (kind, meta, arrays by name)."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"model file not found: {path}")
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise BadConfig(f"{path}: not a micident model container (bad magic)")
    header_len = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])[0]
    header_start = len(MAGIC) + 4
    header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise BadConfig(f"{path}: unsupported format version {header.get('format_version')}")
    payload = raw[header_start + header_len :]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise BadConfig(f"{path}: payload SHA-256 mismatch, file is corrupt")
    arrays: Dict[str, np.ndarray] = {}
    for item in header["arrays"]:
        start, nbytes = item["offset"], item["nbytes"]
        flat = np.frombuffer(payload[start : start + nbytes], dtype="<f4")
        arrays[item["name"]] = flat.reshape(item["shape"]).astype(np.float64)
    return header["kind"], header["meta"], arrays
