"""Counter-based random streams derived from a single root seed."""
import hashlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    # stable across processes, unlike hash()
    return int.from_bytes(hashlib.sha256(str(part).encode()).digest()[:4], "little")


def stream(root_seed, *keys):
    """Return an independent Generator for ``(root_seed, *keys)``.

    Keys may be ints or strings; the same tuple always yields the same stream,
    so parallel and serial execution draw identical numbers.
    """
    ss = np.random.SeedSequence(int(root_seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
