"""Named, reproducible random streams.

All randomness in the package flows from one 64-bit seed through named
substreams.  A substream is identified by a purpose string plus integer
indices (chunk number, sweep point, ...).  The purpose string is hashed, so
introducing a new kind of draw never shifts the values produced by existing
streams, and chunked Monte Carlo runs are reproducible independently of how
chunks are scheduled.
"""

import hashlib

import numpy as np


def substream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Return the Generator for a named stream derived from ``seed``."""
    tag = purpose + ":" + ",".join(str(i) for i in indices)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    # four 32-bit words of the digest + the user seed form the entropy pool
    words = [int.from_bytes(digest[4 * i : 4 * (i + 1)], "little") for i in range(4)]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *words])
    return np.random.Generator(np.random.PCG64(ss))


def draw_complex(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex Gaussian with unit total variance."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)
