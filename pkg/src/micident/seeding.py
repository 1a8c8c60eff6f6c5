"""Stable seed derivation so parallel order can never change outputs."""

from __future__ import annotations

import hashlib


def stable_seed(*parts) -> int:
    """Derive a 64-bit seed from heterogeneous parts.

    Floats are canonicalized through repr so 20 and 20.0 hash differently
    only when they really are different values.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little")
