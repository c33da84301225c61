"""Deterministic random streams for Monte Carlo work.

Streams are derived from a 64-bit master seed and an integer key path,
e.g. ``substream(seed, trial, step)``.  Any unit of work can regenerate
its own stream in isolation, so results never depend on scheduling or
accumulation order.  The generator is counter-based (Philox) underneath.
"""

import numpy as np


def substream(seed, *key):
    """Return a Generator for the stream identified by (seed, *key)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
