"""Deterministic seed derivation.

One global seed fans out into named streams so that every random draw in a
run is attributable to exactly one labeled stream, and independent stages
(defender training, attacker queries, verification draws) never share a
stream. Derivation is a keyed hash, so it is stable across processes and
platforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

_MASK_63 = (1 << 63) - 1


def derive_seed(global_seed: int, label: str) -> int:
    """Map (global_seed, label) to a stable 63-bit stream seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(global_seed)).encode())
    h.update(b"\x00")
    h.update(label.encode())
    return int.from_bytes(h.digest(), "little") & _MASK_63


@dataclass
class SeedPolicy:
    """Global seed plus a record of every stream label handed out."""

    global_seed: int
    streams: dict[str, int] = field(default_factory=dict)

    def stream(self, label: str) -> int:
        if not label:
            raise ValueError("stream label must be non-empty")
        seed = derive_seed(self.global_seed, label)
        self.streams[label] = seed
        return seed

    def rng(self, label: str) -> np.random.Generator:
        return np.random.default_rng(self.stream(label))

    def manifest(self) -> dict:
        return {"global_seed": self.global_seed, "streams": dict(self.streams)}
