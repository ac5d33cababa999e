"""Shared helpers: seeded RNG streams, small combinatorics, errors."""

from __future__ import annotations

import hashlib
import random
from math import comb


class SteinerError(Exception):
    """Base class for package errors."""


class ParseError(SteinerError):
    """Malformed input text.  Carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(SteinerError):
    """Invalid parameter combination."""


class DivisibilityError(SteinerError):
    """Input vector fails a divisibility condition; carries the witness."""

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


def derive_rng(master_seed: int, label: str) -> random.Random:
    """Return an independent RNG stream derived from a master seed.

    Streams with distinct labels are independent of each other and of
    the order in which they are created, so adding a new consumer does
    not reshuffle the randomness seen by existing ones.
    """
    h = hashlib.sha256(f"{label}:{master_seed}".encode()).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


def falling(x: int, m: int) -> int:
    """Falling factorial x(x-1)...(x-m+1)."""
    out = 1
    for i in range(m):
        out *= x - i
    return out


def binom(n: int, k: int) -> int:
    return comb(n, k) if 0 <= k <= n else 0
