"""Deterministic random-stream derivation.

Every random draw in the package flows from one user-facing seed. Module
streams are separated with fixed string labels so that, say, the dropout
stream cannot collide with the shuffle stream. Labels are hashed with CRC-32
(stable across runs and platforms, unlike ``hash``) and fed to numpy's
``SeedSequence`` as a spawn key.
"""

from __future__ import annotations

import zlib

import numpy as np


def _sequence(seed: int, label: str) -> np.random.SeedSequence:
    tag = zlib.crc32(label.encode("utf-8"))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(tag,))


def spawn_rng(seed: int, label: str) -> np.random.Generator:
    """A PCG64 generator on the stream named by ``label``."""
    return np.random.default_rng(_sequence(seed, label))


def derive_seed(seed: int, label: str) -> int:
    """A 64-bit sub-seed for components that take a plain integer seed."""
    return int(_sequence(seed, label).generate_state(1, np.uint64)[0])
