"""Counter-based seed derivation.

Every random stream is keyed by the master seed plus a path of integers and
string tags, e.g. ``derive_rng(seed, "pair", 2, "member", 0, "init")``, so
any sub-result can be replayed without running the ones before it.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    raise TypeError(f"seed key parts must be non-negative ints or strings, got {part!r}")


def derive_seed_sequence(seed, *keys):
    return np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)])


def derive_rng(seed, *keys):
    return np.random.default_rng(derive_seed_sequence(seed, *keys))


def derive_int(seed, *keys):
    return int(derive_seed_sequence(seed, *keys).generate_state(1, dtype=np.uint32)[0])
