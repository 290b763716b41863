"""Deterministic seed derivation.

All randomness flows from one master seed; child seeds are derived as
SHA-256 of "master/component/index" so runs reproduce across platforms
and replicates stay independent of execution order.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, component: str, index: int = 0) -> int:
    """64-bit child seed for (master, component, index)."""
    digest = hashlib.sha256(f"{master}/{component}/{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
