"""Consistency probes, constructive breakdown witnesses and empirical
breakdown points of elicitability."""
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import losses, rand


class BreakdownNotReached(RuntimeError):
    pass


@dataclass(frozen=True)
class ConsistencyProbe:
    """Compare the functional value ``t`` with a competitor ``x`` under ``loss``.

    ``loss(y, action)`` must accept an array of observations.
    """

    t: float
    x: float
    loss: object = losses.squared_loss

    def __post_init__(self):
        if self.t == self.x:
            raise ValueError("the competitor must differ from the functional value")


@dataclass(frozen=True)
class ProbeResult:
    risk_t: float
    risk_x: float
    t_wins: bool


def probe_consistency(probe, sample):
    sample = np.asarray(sample, dtype=float)
    risk_t = losses.aggregate_mean(probe.loss(sample, probe.t))
    risk_x = losses.aggregate_mean(probe.loss(sample, probe.x))
    return ProbeResult(risk_t, risk_x, bool(risk_t < risk_x))


def risk_path(probe, sample, m_grid):
    """Empirical risk of ``probe.t`` on the first m observations, for each m."""
    vals = np.asarray(probe.loss(np.asarray(sample, dtype=float), probe.t), dtype=float)
    csum = np.cumsum(vals)
    return np.array([csum[m - 1] / m for m in m_grid])


DEFAULT_M_GRID = tuple(int(c * 10**e) for e in range(2, 6) for c in (1, 2, 5)) + (10**6,)


def nonconvergence_signature(risks, m_grid, *, threshold=0.1, beyond=10**4):
    """True if the relative change between successive running risks exceeds
    ``threshold`` somewhere past ``beyond`` observations."""
    risks = np.asarray(risks, dtype=float)
    for k in range(1, len(m_grid)):
        if m_grid[k - 1] < beyond:
            continue
        prev = risks[k - 1]
        if prev == 0 or abs(risks[k] - prev) / abs(prev) > threshold:
            return True
    return False


def contaminated_location_sample(rng, m, mix=0.05):
    """N(0, 1) draws, each replaced by a standard Cauchy draw with probability ``mix``."""
    z = rand.sample_normal(rng, 0.0, 1.0, size=m)
    heavy = rng.uniform(m) < mix
    z[heavy] = rand.sample_cauchy(rng, 0.0, 1.0, size=int(heavy.sum()))
    return z


def _predict(model, X, n):
    if callable(model):
        return np.asarray(model(X), dtype=float)
    arr = np.asarray(model, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    return np.asarray(X, dtype=float) @ arr


def demonstrate_breakdown(n_test, gross, model_t, model_x, loss=losses.squared_loss, *,
                          aggregate=losses.aggregate_mean, test_X=None, test_y=None, rng=None):
    """Smallest number of crafted test instances that flips the comparison.

    Models are constants, coefficient vectors (used with ``test_X``) or
    callables. Without test data a clean N(0, 1) location sample is drawn, on
    which the constant models should be compared. Instance c is replaced by
    a response ``gross`` away from model_x's prediction on the side away from
    model_t, until model_t no longer strictly beats model_x.
    """
    if test_y is None:
        if rng is None:
            rng = rand.derive_stream(0, "breakdown", 0, "clean-test")
        test_y = rand.sample_normal(rng, 0.0, 1.0, size=n_test)
    test_y = np.asarray(test_y, dtype=float).copy()
    if test_y.size != n_test:
        raise ValueError(f"test set has {test_y.size} responses, expected {n_test}")
    pred_t = _predict(model_t, test_X, n_test)
    pred_x = _predict(model_x, test_X, n_test)
    if np.array_equal(pred_t, pred_x):
        raise ValueError("model_t and model_x make identical predictions")
    risk_t = aggregate(loss(test_y, pred_t))
    risk_x = aggregate(loss(test_y, pred_x))
    if not risk_t < risk_x:
        raise ValueError(f"model_t does not beat model_x on the clean test set ({risk_t:g} >= {risk_x:g})")
    for c in range(1, n_test + 1):
        i = c - 1
        direction = 1.0 if pred_x[i] >= pred_t[i] else -1.0
        test_y[i] = pred_x[i] + direction * gross
        risk_t = aggregate(loss(test_y, pred_t))
        risk_x = aggregate(loss(test_y, pred_x))
        if not risk_t < risk_x:
            return c
    raise BreakdownNotReached(
        f"comparison did not flip after replacing all {n_test} test instances (bounded loss?)")


@dataclass(frozen=True)
class BdpRecord:
    c: float
    k: int
    n_eval: int
    empirical_bdp: float


def empirical_bdp(c, n_test, k, batches=1):
    """c / c(n_test, k) with c(n_test, k) = batches * C(n_test, k) loss evaluations."""
    if not 0 < c <= 1:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    if not 1 <= k <= n_test:
        raise ValueError(f"k={k} must lie in [1, n_test={n_test}]")
    n_eval = int(batches) * math.comb(n_test, k)
    value = float(Fraction(c) / n_eval)
    return BdpRecord(float(c), int(k), n_eval, value)


def experiment_bdp(weak_errors):
    """Fraction of repetitions whose weak ranking error is non-zero."""
    errs = np.asarray(weak_errors, dtype=float)
    if errs.size == 0:
        raise ValueError("no repetitions")
    return float(np.mean(errs > 0))
