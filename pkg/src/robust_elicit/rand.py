"""Deterministic, lineage-keyed random streams.

Every stream is seeded from a stable hash of ``(master_seed, scenario_id,
repetition, purpose_tag)``, so results never depend on the order in which
repetitions are scheduled.
"""
import hashlib
import math

import numpy as np


class RngStream:
    """A numpy ``Generator`` tagged with the lineage it was derived from."""

    __slots__ = ("lineage", "gen")

    def __init__(self, master_seed, scenario_id, repetition, purpose_tag):
        self.lineage = (int(master_seed), str(scenario_id), int(repetition), str(purpose_tag))
        self.gen = np.random.Generator(np.random.PCG64(_lineage_seed(self.lineage)))

    def spawn(self, tag):
        """Child stream whose purpose tag extends this one's."""
        master, scenario, rep, purpose = self.lineage
        return RngStream(master, scenario, rep, f"{purpose}/{tag}")

    def uniform(self, size=None):
        return self.gen.random(size)

    def __repr__(self):
        return "RngStream(master_seed=%d, scenario_id=%r, repetition=%d, purpose_tag=%r)" % self.lineage


def _lineage_seed(lineage):
    key = "\x1f".join(str(part) for part in lineage).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=16).digest(), "little")


def derive_stream(master_seed, scenario_id, repetition, purpose_tag):
    return RngStream(master_seed, scenario_id, repetition, purpose_tag)


def sample_normal(rng, mean=0.0, sd=1.0, size=None):
    if sd < 0:
        raise ValueError(f"sd must be >= 0, got {sd}")
    z = rng.gen.standard_normal(size)
    return mean + sd * z


def sample_cauchy(rng, location=0.0, scale=1.0, size=None):
    # inverse CDF: tan(pi * (u - 1/2))
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    u = rng.gen.random(size)
    return location + scale * np.tan(math.pi * (u - 0.5))


def sample_binomial(rng, n, prob, size=None):
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"prob must lie in [0, 1], got {prob}")
    out = rng.gen.binomial(n, prob, size)
    return int(out) if size is None else out


def sample_subset(rng, n, k):
    """k distinct indices from range(n), uniformly, returned sorted."""
    if k > n or k < 0:
        raise ValueError(f"cannot draw {k} of {n} items")
    if k == 0:
        return np.empty(0, dtype=np.intp)
    return np.sort(rng.gen.choice(n, size=k, replace=False))


def sample_permutation(rng, n):
    return rng.gen.permutation(n)
