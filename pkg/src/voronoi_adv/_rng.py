"""Named, reproducible random substreams derived from one root seed."""

import zlib

import numpy as np


def substream(seed, name, *extra):
    """Return a Generator keyed on ``(seed, name, *extra)``.

    Streams with different names are statistically independent, so e.g. the
    attack stream can be consumed without perturbing the shuffle stream.
    ``seed`` may also be a tuple such as ``(root_seed, class_id)``.
    """
    parts = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    key = [int(parts[0]) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())]
    key.extend(int(e) & 0xFFFFFFFFFFFFFFFF for e in (*parts[1:], *extra))
    return np.random.default_rng(key)


def as_generator(seed_or_rng, name="default"):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return substream(seed_or_rng, name)
