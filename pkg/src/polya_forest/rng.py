"""Seed splitting.

Every random stream is derived from one 64-bit master seed. A stream is
identified by a stage name and an integer index (replicate, chain, ...);
the stage name is hashed with BLAKE2b so stream ids are stable across
Python processes and versions.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stage_id(stage: str) -> int:
    digest = hashlib.blake2b(stage.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(master_seed: int, stage: str, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(master_seed) & MASK64,
        spawn_key=(stage_id(stage), int(index)),
    )


def stream(master_seed: int, stage: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(stage, index)`` under ``master_seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, stage, index)))
