"""Named, independent random streams derived from one master seed.

Every source of randomness in the project (weather, network init,
exploration, minibatch shuffling, evaluation) draws from its own stream so
that changing how one subsystem consumes randomness cannot silently shift
any other subsystem.  Streams are identified by a mix of integers and
short string labels; labels are hashed with CRC-32, which is stable across
processes and platforms (unlike Python's salted ``hash``).
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK63 = (1 << 63) - 1


def _entropy(keys: tuple[int | str, ...]) -> list[int]:
    out: list[int] = []
    for k in keys:
        if isinstance(k, str):
            out.append(zlib.crc32(k.encode("utf-8")))
        else:
            out.append(int(k) & _MASK63)
    return out


def stream_seq(*keys: int | str) -> np.random.SeedSequence:
    """SeedSequence for the stream identified by ``keys``."""
    if not keys:
        raise ValueError("at least one stream key is required")
    return np.random.SeedSequence(_entropy(tuple(keys)))


def stream_rng(*keys: int | str) -> np.random.Generator:
    """Fresh Generator for the stream identified by ``keys``."""
    return np.random.default_rng(stream_seq(*keys))


def stream_int(*keys: int | str) -> int:
    """Deterministic 63-bit integer derived from the stream keys.

    Used where an API takes a plain integer seed (e.g. per-episode
    environment seeds).
    """
    state = stream_seq(*keys).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31 | int(state[1]) >> 1) & _MASK63
