"""Stable seed derivation helpers.

Everything random in this package is driven by explicit integer seeds.
Sub-streams (per round, per purpose, per sample id) are derived by hashing,
never by Python's salted ``hash()``, so results are reproducible across
processes and platforms.
"""

from __future__ import annotations

import hashlib


def id_digest(sample_id: str) -> int:
    """Map a sample id to a stable 64-bit integer."""
    raw = hashlib.blake2b(sample_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(raw, "big")


def stable_seed(*parts: int | str) -> int:
    """Derive a 64-bit seed from a tuple of ints/strings.

    Used to split one root seed into independent named sub-streams,
    e.g. ``stable_seed(root, "train", round_index)``.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, int):
            h.update(b"i" + part.to_bytes(16, "big", signed=True))
        else:
            h.update(b"s" + part.encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "big")
