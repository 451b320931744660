"""Stable seed derivation.

All stochastic stages (parameter init, noise, smoothing noise, shuffles,
chunk streams) get their own seed derived from the user seed and a tag, so
that runs are reproducible and independent stages never share a stream.
"""

from __future__ import annotations

import hashlib


def derive_seed(base: int, tag: str) -> int:
    """A 63-bit seed from (base, tag), stable across platforms and runs."""
    digest = hashlib.sha256(f"{base}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
