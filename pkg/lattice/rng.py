# lattice/rng.py
"""
Counter-based randomness for disorder realizations.

Every random quantity attached to a site is a pure function of
(seed, stream, coordinate): the coordinate is packed into a 64-bit counter,
combined with the seed and the stream tag, and pushed through the
SplitMix64 finalizer (Steele, Lea & Flood 2014). The top 53 bits of the
result give a uniform double in [0, 1).

Because nothing depends on the order in which sites are visited, the same
site gets the same value in every box, on every worker, in every run.
"""

import numpy as np

MASK64 = (1 << 64) - 1

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX_A = np.uint64(0xBF58476D1CE4E5B9)
MIX_B = np.uint64(0x94D049BB133111EB)

# Coordinates are packed in 21-bit fields, offset so negatives fit.
COORD_BITS = 21
COORD_OFFSET = 1 << (COORD_BITS - 1)

# Stream tags keep independent site quantities apart.
STREAM_OCCUPATION = 0x01
STREAM_POTENTIAL = 0x02
STREAM_DISPLACEMENT_X = 0x03
STREAM_DISPLACEMENT_Y = 0x04


def splitmix64(values):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(values, dtype=np.uint64) + GOLDEN_GAMMA
    z = (z ^ (z >> np.uint64(30))) * MIX_A
    z = (z ^ (z >> np.uint64(27))) * MIX_B
    return z ^ (z >> np.uint64(31))


def mix(base_seed, index):
    """Seed of realization `index` derived from `base_seed`; order-independent."""
    z = splitmix64(np.array([int(base_seed) & MASK64], dtype=np.uint64))
    z = splitmix64(z ^ np.uint64(int(index) & MASK64))
    return int(z[0])


def pack_coordinates(coordinates):
    """Pack an (n, d) integer array (d ≤ 3) into one uint64 counter per row."""
    coords = np.atleast_2d(np.asarray(coordinates, dtype=np.int64))
    if coords.shape[1] > 3:
        raise ValueError("at most three coordinates fit into one counter")
    if coords.size and (np.abs(coords).max() >= COORD_OFFSET):
        raise ValueError(f"coordinates must satisfy |x| < {COORD_OFFSET}")
    packed = np.zeros(coords.shape[0], dtype=np.uint64)
    for axis in range(coords.shape[1]):
        field = (coords[:, axis] + COORD_OFFSET).astype(np.uint64)
        packed |= field << np.uint64(COORD_BITS * axis)
    return packed


def site_uniforms(seed, coordinates, stream):
    """Uniform [0, 1) value per site row of `coordinates` for (seed, stream)."""
    counters = pack_coordinates(coordinates)
    key = splitmix64(np.array([(int(seed) ^ (int(stream) << 56)) & MASK64], dtype=np.uint64))[0]
    z = splitmix64(splitmix64(counters) ^ key)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
