"""Counter-based random number streams.

All Monte-Carlo draws come from Philox-4x64 generators keyed off the
user seed through a SeedSequence spawn tree. Path-block streams and
distributional generators live on disjoint branches, so they never
overlap; within a path-block stream, path p owns the p-th disjoint block
of n_steps words. Any path range can therefore be generated
independently (that is what makes chunked/threaded simulation
deterministic for every worker count) and the numbering is stable across
versions. Normals come from raw words by inverse transform, exactly one
word per normal.
"""

import numpy as np
from scipy.special import ndtri

_KIND_PATHS = 0
_KIND_GENERAL = 1


def _bitgen(seed, kind, stream):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(kind, int(stream)))
    return np.random.Philox(seed=ss)


def uniform_from_words(words):
    """Map raw 64-bit words to doubles in the open interval (0, 1)."""
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normal_block(seed, first_path, n_paths, n_steps, stream=0):
    """Standard normals for paths [first_path, first_path + n_paths).

    Returns an (n_paths, n_steps) array. Independent of how the caller
    chunks the path range: block (seed, stream, p) is always the same
    numbers.
    """
    bg = _bitgen(seed, _KIND_PATHS, stream)
    bg.advance(int(first_path) * int(n_steps))
    words = bg.random_raw(int(n_paths) * int(n_steps))
    return ndtri(uniform_from_words(words)).reshape(n_paths, n_steps)


def generator(seed, stream=0):
    """numpy Generator on its own substream, for distributional draws
    (gamma, poisson, choice) outside the per-path block scheme."""
    return np.random.Generator(_bitgen(seed, _KIND_GENERAL, stream))
