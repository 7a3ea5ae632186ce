"""Deterministic derivation of independent RNG stream seeds."""

from __future__ import annotations

import hashlib

_MASK = (1 << 63) - 1


def derive_seed(*parts: object) -> int:
    """Mix arbitrary labels into a stable 63-bit seed.

    Unlike the built-in hash(), the result does not depend on the
    interpreter's hash salt, so streams keyed by strings reproduce
    across processes and machines.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & _MASK
