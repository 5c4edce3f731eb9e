"""Deterministic seed derivation for parallel-safe substreams.

Trial/layer/step streams are derived by hashing the base seed together with
string tags, so concurrent consumers can never reorder each other's
randomness and any individual stream is reconstructible from its tags.
"""

from __future__ import annotations

import hashlib


def derive_seed(base_seed: int, *parts) -> int:
    """64-bit seed from sha256(base_seed:part0:part1:...)."""
    text = ":".join([str(int(base_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big")
