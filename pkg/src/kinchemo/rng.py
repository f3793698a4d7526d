"""Counter-based random streams.

Every agent owns a stream identified by ``(seed, stream_id)``; the n-th draw
of that stream is a pure function of ``(seed, stream_id, n)``.  Results are
therefore independent of how agents are batched or distributed over
workers.  The mixing function is the SplitMix64 finalizer applied twice,
keyed on seed and stream id.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_MUL = np.uint64(0xD1B54A32D192ED03)


def _mix64(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def random_bits(seed, stream, counter):
    """64 random bits for each ``(stream, counter)`` pair.

    Parameters
    ----------
    seed : int
        Global seed.
    stream, counter : array_like of int
        Broadcastable arrays of stream ids and per-stream draw indices.

    Returns
    -------
    numpy.ndarray of uint64
    """
    stream = np.asarray(stream, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    stream, counter = np.broadcast_arrays(stream, counter)
    with np.errstate(over="ignore"):
        key = _mix64(np.array([seed], dtype=np.uint64) * _GOLDEN + _GOLDEN)[0]
        z = _mix64(stream * _STREAM_MUL ^ key)
        z = _mix64(z + (counter + np.uint64(1)) * _GOLDEN)
    return z


def uniform(seed, stream, counter):
    """Uniform doubles in the open interval (0, 1)."""
    bits = random_bits(seed, stream, counter)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def exponential(seed, stream, counter, rate):
    """Exponential variates with the given rate (inverse-transform)."""
    return -np.log(uniform(seed, stream, counter)) / rate
