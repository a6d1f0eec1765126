"""Reproducible, disjoint random streams on the counter-based Philox generator."""

import numpy as np


def stream_key(stream) -> tuple:
    if isinstance(stream, (tuple, list)):
        return tuple(int(s) for s in stream)
    return (int(stream),)


def make_rng(seed: int, stream=0, *substreams: int) -> np.random.Generator:
    """Generator for ``(seed, stream, *substreams)``; distinct keys never overlap.

    ``stream`` may itself be a tuple of integers.
    """
    key = stream_key(stream) + tuple(int(s) for s in substreams)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
