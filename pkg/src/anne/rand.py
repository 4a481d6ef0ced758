"""Counter-based per-sample random streams.

Label-noise injection draws one random decision per sample. To make results
independent of iteration order (and trivially parallelizable), each draw is a
pure function of (seed, sample_id, stream) pushed through a SplitMix64-style
mixer, rather than a position in a shared sequential stream.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = float(2.0 ** -53)


def _mix(z):
    # SplitMix64 finalizer; z is a uint64 scalar or array (wrapping intended)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def stream_uniforms(seed, sample_ids, stream):
    """Uniform [0, 1) draws keyed by (seed, sample_id, stream).

    Deterministic, order-independent: permuting sample_ids permutes the
    output identically.
    """
    ids = np.asarray(sample_ids).astype(np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN * np.uint64(stream))
        z = _mix(base + _GOLDEN * (ids + np.uint64(1)))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def stream_integers(seed, sample_ids, stream, high):
    """Integer draws in [0, high) keyed like stream_uniforms."""
    u = stream_uniforms(seed, sample_ids, stream)
    out = np.floor(u * high).astype(np.int64)
    # guard the u -> high edge that floor can hit only through rounding
    np.clip(out, 0, high - 1, out=out)
    return out
