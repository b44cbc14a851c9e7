"""Pointwise losses, test-loss aggregators, U-statistics and ranking errors.

Aggregators take a plain sequence of per-instance losses. ``+inf`` entries are
legal and propagate: the plain mean of a vector holding ``inf`` is ``inf``.
"""
import itertools
import math

import numpy as np

from . import kernels, rand
from ._util import ceil_count, floor_count

_PROB_CLAMP = 1e-12


def squared_loss(y, yhat):
    return (np.asarray(y, dtype=float) - yhat) ** 2


def deviance_loss(y, p_hat):
    p = np.clip(np.asarray(p_hat, dtype=float), _PROB_CLAMP, 1 - _PROB_CLAMP)
    y = np.asarray(y, dtype=float)
    return -2.0 * (y * np.log(p) + (1 - y) * np.log1p(-p))


def _values(losses):
    v = np.asarray(losses, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty loss vector")
    return v


def aggregate_mean(losses):
    return float(np.mean(_values(losses)))


def trim_count(m, alpha):
    """Number of largest losses dropped by ``aggregate_trimmed``: floor(m alpha)."""
    return floor_count(m * alpha)


def trimmed_index(losses, alpha):
    """Indices of the floor(m alpha) largest losses; among ties the higher
    index counts as larger."""
    v = _values(losses)
    k = trim_count(v.size, alpha)
    if k == 0:
        return np.empty(0, dtype=np.intp)
    return np.sort(np.argsort(v, kind="stable")[v.size - k:])


def aggregate_trimmed(losses, alpha):
    """Sum of the losses left after dropping the floor(m alpha) largest,
    divided by ceil((1 - alpha) m). The sum is correctly rounded (``fsum``),
    so the value does not depend on the order of the losses."""
    if not 0.0 <= alpha <= 0.5:
        raise ValueError(f"alpha must lie in [0, 0.5], got {alpha}")
    v = _values(losses)
    m = v.size
    keep = np.ones(m, dtype=bool)
    keep[trimmed_index(v, alpha)] = False
    return math.fsum(v[keep]) / ceil_count((1.0 - alpha) * m)


def aggregate_transformed(losses, transform="arctan"):
    if transform != "arctan":
        raise ValueError(f"unsupported transform {transform!r}")
    return float(np.mean(np.arctan(_values(losses))))


def aggregate_oracle(losses, flags):
    """Mean over unflagged (clean) entries, with the number of entries used."""
    v = _values(losses)
    flags = np.asarray(flags, dtype=bool).ravel()
    if flags.shape != v.shape:
        raise ValueError("flags must match the loss vector")
    clean = v[~flags]
    if clean.size == 0:
        raise ValueError("every entry is flagged; the clean set is empty")
    return float(np.mean(clean)), int(clean.size)


def aggregate_fold_trimmed_cv(fold_losses, alpha):
    """Average over folds of each fold's trimmed test loss."""
    per_fold = [aggregate_trimmed(fold, alpha) for fold in fold_losses]
    if not per_fold:
        raise ValueError("no folds")
    return float(np.mean(per_fold))


def pairwise_misranking_loss(y_i, y_j, yhat_i, yhat_j):
    return int((y_i - y_j) * (yhat_i - yhat_j) < 0)


def u_statistic(loss_k, y, yhat, k, *, max_exhaustive=10**6, n_samples=10**5, rng=None):
    """Average of the k-ary ``loss_k(y_1..y_k, yhat_1..yhat_k)`` over index
    subsets i_1 < ... < i_k.

    Exhaustive when C(m, k) <= ``max_exhaustive``; otherwise ``n_samples``
    subsets drawn uniformly with ``rng``. The pairwise misranking loss uses a
    compiled pair counter.
    """
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    m = y.size
    if yhat.size != m:
        raise ValueError("y and yhat differ in length")
    if not 1 <= k <= m:
        raise ValueError(f"k={k} must lie in [1, {m}]")
    total = math.comb(m, k)
    if k == 2 and loss_k is pairwise_misranking_loss:
        _, discordant, _ = kernels.pair_counts(np.ascontiguousarray(y), np.ascontiguousarray(yhat))
        return discordant / total
    if total <= max_exhaustive:
        subsets = itertools.combinations(range(m), k)
        count = total
    else:
        if rng is None:
            raise ValueError(f"C({m}, {k}) = {total} subsets exceed {max_exhaustive}; pass rng to subsample")
        subsets = (rand.sample_subset(rng, m, k) for _ in range(n_samples))
        count = n_samples
    vals = np.empty(count)
    for s, idx in enumerate(subsets):
        idx = list(idx)
        vals[s] = loss_k(*y[idx], *yhat[idx])
    return float(np.mean(vals))


def hard_ranking_error(truth, predicted):
    """Fraction of strictly ordered truth pairs that the prediction gets wrong.

    A reversed pair costs 1 and a predicted tie 0.5. Returns 0 when the truth
    has no strictly ordered pair.
    """
    truth = np.ascontiguousarray(truth, dtype=float)
    predicted = np.ascontiguousarray(predicted, dtype=float)
    if truth.shape != predicted.shape:
        raise ValueError("rankings differ in length")
    strict, discordant, tied = kernels.pair_counts(truth, predicted)
    if strict == 0:
        return 0.0
    return (discordant + 0.5 * tied) / strict


def weak_ranking_error(best_m, predicted, M):
    """(2/K) times the number of true outliers whose predicted rank exceeds M."""
    predicted = np.asarray(predicted, dtype=float)
    best_m = np.asarray(best_m, dtype=np.intp).ravel()
    K = predicted.size
    if best_m.size != M or M > K:
        raise ValueError(f"|Best_M| = {best_m.size} must equal M = {M} <= K = {K}")
    missed = int(np.sum(predicted[best_m] > M))
    return 2.0 * missed / K
