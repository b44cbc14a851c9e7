import math

import numpy as np
from scipy.stats import rankdata

# Products like 0.95 * 100 land a hair above the integer; absorb that.
_EPS = 1e-9


def floor_count(x):
    return int(math.floor(x + _EPS))


def ceil_count(x):
    return int(math.ceil(x - _EPS))


def h_size(n, alpha):
    """Kept-subset size n - floor(alpha * n) for trimming estimators."""
    return n - floor_count(alpha * n)


def stable_smallest(values, h):
    """Indices of the h smallest values; ties resolved towards lower index."""
    return np.argsort(values, kind="stable")[:h]


def top_order(scores):
    """Indices ordered from most to least outlying.

    Higher score first; among equal scores the higher index comes first,
    which mirrors the trimming tie rule (ties dropped from the top index).
    """
    scores = np.asarray(scores, dtype=float)
    idx = np.arange(scores.size)
    return np.lexsort((-idx, -scores))


def ordinal_ranks(scores):
    """Ranks 1..K with 1 the highest score, ties broken by ``top_order``."""
    order = top_order(scores)
    ranks = np.empty(order.size, dtype=float)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def mid_ranks(scores):
    """Ranks with 1 the highest score; tied scores share their mean rank."""
    scores = np.asarray(scores, dtype=float)
    return rankdata(-scores, method="average").astype(float)
