"""Named random substreams derived from one integer seed."""

import zlib

import numpy as np


def substream(seed, name):
    """Return a Generator for ``name`` that is independent of every other name.

    The same (seed, name) always yields the same stream, regardless of the
    order in which streams are requested.
    """
    key = zlib.crc32(str(name).encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(key,))))
