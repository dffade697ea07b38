"""64-bit FNV-1a hashing of feature names."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def fnv1a_64(data: bytes | str) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK
    return h


def h64_many(names: Sequence[str]) -> np.ndarray:
    """Hash many feature names at once; returns a uint64 array aligned with `names`."""
    encoded = [n.encode("utf-8") for n in names]
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([len(e) for e in encoded], out=offsets[1:])
    data = np.frombuffer(b"".join(encoded), dtype=np.uint8)
    return _kernels.fnv1a_batch(data, offsets)
