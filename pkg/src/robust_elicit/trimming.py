"""Instance and batch trimming: LOO scoring of training instances, test-set
trimming, and outlyingness rankings of cross-validation batches."""
import hashlib
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import estimators as est
from . import losses, rand
from ._util import ceil_count, mid_ranks, top_order

BATCH_METHODS = ("train_loss", "train_loss_trimmed", "test_loss", "test_loss_trimmed", "coef_deviation")
BATCH_TRIM_ALPHA = 0.5


class LooFoldError(RuntimeError):
    def __init__(self, fold, cause):
        super().__init__(f"leave-one-out fit failed on fold {fold}: {cause}")
        self.fold = fold


# ----------------------------------------------------------------------------
# estimator handles

@dataclass(frozen=True)
class Fitter:
    """An estimator bundled with its pointwise loss.

    ``fn(X, y, rng, n_starts=None, init_subsets=())`` returns a FitResult.
    Trimmed fitters reuse the full-data subset as a warm start for each
    leave-one-out refit and run only ``loo_starts`` extra random starts.
    """

    name: str
    fn: object
    loss: str = "squared"
    trimmed: bool = False
    kind: str = ""
    loo_starts: int = 10

    def fit(self, X, y, rng=None):
        return self.fn(X, y, rng)

    def fit_without(self, X, y, i, base, rng):
        keep = np.delete(np.arange(X.shape[0]), i)
        if self.trimmed and base is not None and base.subset is not None:
            sub = base.subset[base.subset != i]
            sub = sub - (sub > i)
            return self.fn(X[keep], y[keep], rng, n_starts=self.loo_starts, init_subsets=[sub])
        return self.fn(X[keep], y[keep], rng)

    def pointwise_loss(self, fit, X, y):
        if self.loss == "squared":
            return losses.squared_loss(y, fit.predict(X))
        return losses.deviance_loss(y, fit.predict_proba(X))


def _ols(X, y, rng, n_starts=None, init_subsets=()):
    return est.fit_ols(X, y)


def _lts(X, y, rng, n_starts=None, init_subsets=(), alpha=0.5, default_starts=500):
    return est.fit_lts(X, y, alpha, n_starts or default_starts, rng, init_subsets=init_subsets)


def _lasso(X, y, rng, n_starts=None, init_subsets=(), lam=0.0):
    return est.fit_lasso(X, y, lam, 1e-7, 5000)


def _slts(X, y, rng, n_starts=None, init_subsets=(), alpha=0.5, lam=0.0, default_starts=20):
    return est.fit_sparse_lts(X, y, alpha, lam, n_starts or default_starts, rng, tol=1e-7,
                              max_iter=5000, init_subsets=init_subsets)


def _logit(X, y, rng, n_starts=None, init_subsets=()):
    return est.fit_logistic(X, y, 1e-10, 50)


def _tlogit(X, y, rng, n_starts=None, init_subsets=(), alpha=0.5, default_starts=20):
    return est.fit_trimmed_logistic(X, y, alpha, n_starts or default_starts, rng, tol=1e-10,
                                    max_iter=50, init_subsets=init_subsets)


def _l1logit(X, y, rng, n_starts=None, init_subsets=(), lam=0.0):
    return est.fit_l1_logistic(X, y, lam, 1e-6, 50, inner_tol=1e-6, inner_max_iter=2000)


def _tl1logit(X, y, rng, n_starts=None, init_subsets=(), alpha=0.5, lam=0.0, default_starts=10):
    return est.fit_trimmed_l1_logistic(X, y, alpha, lam, n_starts or default_starts, rng,
                                       init_subsets=init_subsets)


def ols_fitter():
    return Fitter("ols", _ols, kind="ols")


def lts_fitter(alpha=0.5, n_starts=500, loo_starts=10):
    return Fitter("lts", partial(_lts, alpha=alpha, default_starts=n_starts), trimmed=True,
                  loo_starts=loo_starts)


def lasso_fitter(lam):
    return Fitter("lasso", partial(_lasso, lam=lam))


def slts_fitter(lam, alpha=0.5, n_starts=20, loo_starts=3):
    return Fitter("slts", partial(_slts, alpha=alpha, lam=lam, default_starts=n_starts), trimmed=True,
                  loo_starts=loo_starts)


def logit_fitter():
    return Fitter("logit", _logit, loss="deviance")


def trimmed_logit_fitter(alpha=0.5, n_starts=20, loo_starts=3):
    return Fitter("trimmed_logit", partial(_tlogit, alpha=alpha, default_starts=n_starts), loss="deviance",
                  trimmed=True, loo_starts=loo_starts)


def l1_logit_fitter(lam):
    return Fitter("l1_logit", partial(_l1logit, lam=lam), loss="deviance")


def trimmed_l1_logit_fitter(lam, alpha=0.5, n_starts=10, loo_starts=2):
    return Fitter("trimmed_l1_logit", partial(_tl1logit, alpha=alpha, lam=lam, default_starts=n_starts),
                  loss="deviance", trimmed=True, loo_starts=loo_starts)


# ----------------------------------------------------------------------------
# instance trimming

@dataclass(frozen=True, eq=False)
class TrimReport:
    kept: np.ndarray
    dropped: np.ndarray
    scores: np.ndarray
    base_model: object


def drop_count(count, alpha):
    return ceil_count(alpha * count)


def _report(scores, alpha, base_model):
    scores = np.asarray(scores, dtype=float)
    order = top_order(scores)
    k = drop_count(scores.size, alpha)
    dropped = np.sort(order[:k])
    kept = np.sort(order[k:])
    return TrimReport(kept, dropped, scores, base_model)


def ols_loo_residuals(X, y):
    """Leave-one-out residuals e_i / (1 - h_ii) with the hat-matrix diagonal."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    fit = est.fit_ols(X, y)
    Q, _ = np.linalg.qr(X)
    lev = np.einsum("ij,ij->i", Q, Q)
    return (y - X @ fit.beta_hat) / (1.0 - lev), lev, fit


def loo_scores(X, y, fitter, rng=None, *, fast=True):
    """Each instance's loss under the model fitted on all other instances.

    Returns ``(scores, base_fit)``; ``base_fit`` is the full-data fit.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if fast and fitter.kind == "ols":
        resid, lev, base = ols_loo_residuals(X, y)
        scores = resid * resid
        for i in np.flatnonzero(1.0 - lev < 1e-10):
            scores[i] = _loo_one(X, y, i, fitter, base, rng)
        return scores, base
    base = fitter.fit(X, y, None if rng is None else rng.spawn("loo-base"))
    scores = np.empty(n)
    for i in range(n):
        scores[i] = _loo_one(X, y, i, fitter, base, rng)
    return scores, base


def _loo_one(X, y, i, fitter, base, rng):
    try:
        fit = fitter.fit_without(X, y, i, base, None if rng is None else rng.spawn(f"loo-{i}"))
    except (est.EstimationError, ValueError, np.linalg.LinAlgError) as exc:
        raise LooFoldError(i, exc) from exc
    return float(fitter.pointwise_loss(fit, X[i:i + 1], y[i:i + 1])[0])


def loo_trim_training(X, y, alpha, fitter, rng=None, *, fast=True):
    """Drop the ceil(alpha n) training instances with the largest LOO losses."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < p + 1:
        raise ValueError(f"need n >= p + 1 for leave-one-out fits (n={n}, p={p})")
    if alpha == 0:
        # nothing to drop; skip the refits
        return TrimReport(np.arange(n), np.empty(0, dtype=np.intp), np.zeros(n), None)
    scores, base = loo_scores(X, y, fitter, rng, fast=fast)
    return _report(scores, alpha, base)


def trim_test_instances(test_X, test_y, model, alpha, loss="squared"):
    """Drop the ceil(alpha m) test instances with the largest losses under ``model``."""
    test_X = np.asarray(test_X, dtype=float)
    if loss == "squared":
        scores = losses.squared_loss(test_y, model.predict(test_X))
    else:
        scores = losses.deviance_loss(test_y, model.predict_proba(test_X))
    return _report(scores, alpha, model)


# ----------------------------------------------------------------------------
# batches

def make_batches(n, cv, rng, n_sub=None):
    """Randomized: ``cv.size`` uniform subsets of size ``n_sub``.
    K-fold: a random partition into ``cv.size`` folds whose sizes differ by at most one."""
    if cv.kind == "randomized":
        if n_sub is None or not 0 < n_sub <= n:
            raise ValueError(f"randomized batches need 0 < n_sub <= n (n_sub={n_sub}, n={n})")
        return [rand.sample_subset(rng, n, n_sub) for _ in range(cv.size)]
    if cv.size > n:
        raise ValueError(f"cannot split {n} instances into {cv.size} folds")
    perm = rand.sample_permutation(rng, n)
    return [np.sort(fold) for fold in np.array_split(perm, cv.size)]


def training_sets(batches, n, cv):
    """Index sets the batch models are trained on (fold complements for K-fold)."""
    if cv.kind == "randomized":
        return list(batches)
    return [np.setdiff1d(np.arange(n), fold) for fold in batches]


def true_batch_ranking(batches, contaminated):
    """Mid-ranks of the contaminated fraction, 1 = most contaminated."""
    flags = np.asarray(contaminated, dtype=bool)
    frac = np.array([flags[np.asarray(b)].mean() if len(b) else 0.0 for b in batches])
    return mid_ranks(frac)


def strategy_names():
    names = []
    for method in BATCH_METHODS[:-1]:
        for model in ("classical", "robust"):
            names.append(f"{method}:{model}")
    names.append("coef_deviation")
    return names


@dataclass(frozen=True, eq=False)
class BatchRanking:
    ranks: np.ndarray
    scores: np.ndarray
    failed: np.ndarray


def _ranking(scores, failed):
    scores = np.where(failed, np.inf, scores)
    return BatchRanking(mid_ranks(scores), scores, failed)


def score_batches(X, y, train_sets, fitters, test_X=None, test_y=None, rng=None, alpha=BATCH_TRIM_ALPHA):
    """Every batch-outlyingness score at once, from one classical and one
    robust fit per batch.

    Returns ``(scores, failed)``: a dict keyed by ``strategy_names()`` and a
    boolean mask of batches on which some fit failed (their scores are +inf).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    B = len(train_sets)
    scores = {name: np.full(B, np.nan) for name in strategy_names()}
    failed = np.zeros(B, dtype=bool)
    have_test = test_X is not None
    for b, idx in enumerate(train_sets):
        idx = np.asarray(idx)
        Xb, yb = X[idx], y[idx]
        fits = {}
        # streams keyed by batch content: identical batches get identical fits
        tag = hashlib.blake2b(np.ascontiguousarray(idx, dtype=np.int64).tobytes(), digest_size=8).hexdigest()
        try:
            for model, fitter in zip(("classical", "robust"), fitters):
                fits[model] = fitter.fit(Xb, yb, None if rng is None else rng.spawn(f"batch-{tag}-{model}"))
        except (est.EstimationError, ValueError, np.linalg.LinAlgError):
            failed[b] = True
            continue
        for model, fitter in zip(("classical", "robust"), fitters):
            ins = fitter.pointwise_loss(fits[model], Xb, yb)
            scores[f"train_loss:{model}"][b] = losses.aggregate_mean(ins)
            scores[f"train_loss_trimmed:{model}"][b] = losses.aggregate_trimmed(ins, alpha)
            if have_test:
                out = fitter.pointwise_loss(fits[model], test_X, test_y)
                scores[f"test_loss:{model}"][b] = losses.aggregate_mean(out)
                scores[f"test_loss_trimmed:{model}"][b] = losses.aggregate_trimmed(out, alpha)
        scores["coef_deviation"][b] = float(np.linalg.norm(fits["classical"].beta_hat - fits["robust"].beta_hat))
    for name in scores:
        scores[name][failed] = np.inf
    return scores, failed


def rank_batches(batches, X, y, method, fitters, test_X=None, test_y=None, *, model="classical",
                 cv=None, rng=None, alpha=BATCH_TRIM_ALPHA):
    """Outlyingness ranks of the batches (1 = highest score) by one method.

    ``batches`` are the index sets as returned by ``make_batches``; with a
    K-fold ``cv`` the models are trained on the fold complements. Without an
    external test set in K-fold mode each model is tested on its held-out fold.
    """
    if method not in BATCH_METHODS:
        raise ValueError(f"unknown batch-ranking method {method!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if cv is not None:
        train = training_sets(batches, n, cv)
    else:
        train = list(batches)
    key = method if method == "coef_deviation" else f"{method}:{model}"
    if test_X is None and method.startswith("test_loss"):
        if cv is None or cv.kind != "kfold":
            raise ValueError("test-loss ranking needs a test set (or K-fold batches)")
        vals = np.empty(len(batches))
        failed = np.zeros(len(batches), dtype=bool)
        for b, (fold, tr) in enumerate(zip(batches, train)):
            s, f = score_batches(X, y, [tr], fitters, X[fold], y[fold],
                                 None if rng is None else rng.spawn(f"fold-{b}"), alpha)
            vals[b] = s[key][0]
            failed[b] = f[0]
        return _ranking(vals, failed)
    scores, failed = score_batches(X, y, train, fitters, test_X, test_y, rng, alpha)
    return _ranking(scores[key], failed)
