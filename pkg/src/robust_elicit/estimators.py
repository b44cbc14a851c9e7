"""Classical and trimmed estimators for linear and logistic models.

All trimmed estimators share one concentration-step search (``_trimmed_search``):
fit on a working subset, recompute every instance's loss, keep the h smallest,
repeat until the subset is stable.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rand
from ._util import h_size, stable_smallest

DEFAULT_MAX_CSTEPS = 50
DEFAULT_N_STARTS = 500
_REFINE = 10
_RETRY_CAP = 100
_PROB_CLAMP = 1e-12
_MAX_HALVINGS = 30


class EstimationError(RuntimeError):
    """A fit could not be computed from the supplied data."""


class RankDeficientError(EstimationError):
    pass


@dataclass(frozen=True, eq=False)
class FitResult:
    beta_hat: np.ndarray
    intercept: float = 0.0
    objective: float = math.nan
    subset: np.ndarray | None = None
    iterations: int = 0
    converged: bool = True
    trace: tuple = ()
    info: dict = field(default_factory=dict)

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.beta_hat + self.intercept

    def predict_proba(self, X):
        return _expit(self.predict(X))


def _as_xy(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    return X, y


def _expit(eta):
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ----------------------------------------------------------------------------
# least squares

def _lstsq(X, y):
    """OLS coefficients, or None when X is rank deficient."""
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        return None
    return coef


def fit_ols(X, y):
    """Least squares without intercept, solved by SVD-based ``lstsq``."""
    X, y = _as_xy(X, y)
    n, p = X.shape
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < p:
        raise RankDeficientError(
            f"design matrix is rank deficient: {p - rank} of {p} columns are linearly dependent (n={n})")
    resid = y - X @ coef
    rss = float(resid @ resid)
    return FitResult(coef, 0.0, rss, None, 1, True, (rss,))


def squared_residuals(fit, X, y):
    r = np.asarray(y, dtype=float) - fit.predict(X)
    return r * r


# ----------------------------------------------------------------------------
# concentration-step search shared by LTS, sparse LTS and trimmed logistic

@dataclass
class _Run:
    params: object
    objective: float
    subset: np.ndarray
    steps: int
    converged: bool
    trace: list


def _concentrate(fit_subset, losses, h, *, subset=None, params=None, max_steps=DEFAULT_MAX_CSTEPS):
    if subset is not None:
        H = np.sort(np.asarray(subset))
    else:
        H = np.sort(stable_smallest(losses(params), h))
    res = fit_subset(H)
    if res is None:
        return None
    params, obj = res
    trace = [obj]
    steps = 0
    converged = False
    while steps < max_steps:
        H_new = np.sort(stable_smallest(losses(params), h))
        if np.array_equal(H_new, H):
            converged = True
            break
        res = fit_subset(H_new)
        steps += 1
        if res is None or not res[1] <= obj:
            # rounding-level increase or degenerate subset: keep the last fit
            converged = True
            break
        params, obj, H = res[0], res[1], H_new
        trace.append(obj)
    return _Run(params, obj, H, steps, converged, trace)


def _continue(run, fit_subset, losses, h, max_steps):
    more = _concentrate(fit_subset, losses, h, subset=run.subset, max_steps=max_steps)
    if more is None or more.objective > run.objective:
        return run
    return _Run(more.params, more.objective, more.subset, run.steps + more.steps,
                more.converged, run.trace + more.trace[1:])


def _trimmed_search(n, h, fit_subset, losses, *, start_size, start_fit, n_starts, rng,
                    init_subsets=(), max_csteps=DEFAULT_MAX_CSTEPS, enumerate_elemental=True):
    """Best concentrated run over a set of starts.

    Starting subsets: every h-subset when C(n, h) <= n_starts (exact mode);
    otherwise every elemental ``start_size``-subset when that count fits the
    budget; otherwise ``n_starts`` random ones. Non-exact modes run two C-steps
    per start and fully iterate only the best few.
    """
    runs = []
    if math.comb(n, h) <= n_starts:
        mode = "exhaustive"
        for H in itertools.combinations(range(n), h):
            run = _concentrate(fit_subset, losses, h, subset=np.array(H), max_steps=max_csteps)
            if run is not None:
                runs.append(run)
    else:
        def from_params(params, steps):
            return _concentrate(fit_subset, losses, h, params=params, max_steps=steps)

        short = []
        if enumerate_elemental and math.comb(n, start_size) <= n_starts:
            mode = "enumerated"
            for S in itertools.combinations(range(n), start_size):
                params = start_fit(np.array(S))
                if params is not None:
                    run = from_params(params, 2)
                    if run is not None:
                        short.append(run)
        else:
            mode = "random"
            if rng is None:
                raise ValueError("random starts need an RngStream")
            retries = 0
            while len(short) < n_starts:
                params = start_fit(rand.sample_subset(rng, n, start_size))
                run = None if params is None else from_params(params, 2)
                if run is None:
                    retries += 1
                    if retries > _RETRY_CAP + n_starts:
                        break
                    continue
                short.append(run)
        short.sort(key=lambda run: run.objective)
        for run in short[:_REFINE]:
            runs.append(_continue(run, fit_subset, losses, h, max_csteps))
    for S in init_subsets:
        res = fit_subset(np.sort(np.asarray(S)))
        if res is not None:
            run = _concentrate(fit_subset, losses, h, params=res[0], max_steps=max_csteps)
            if run is not None:
                runs.append(run)
    if not runs:
        raise EstimationError(f"every starting subset was degenerate (n={n}, h={h})")
    best = min(runs, key=lambda run: run.objective)
    return best, mode, len(runs)


def _check_alpha(alpha, n):
    if not 0.0 <= alpha <= 0.5:
        raise ValueError(f"alpha must lie in [0, 0.5], got {alpha}")
    return h_size(n, alpha)


def fit_lts(X, y, alpha=0.5, n_starts=DEFAULT_N_STARTS, rng=None, *, init_subsets=(),
            max_csteps=DEFAULT_MAX_CSTEPS):
    """Least trimmed squares: minimise the sum of the h = n - floor(alpha n)
    smallest squared residuals (FAST-LTS style C-steps)."""
    X, y = _as_xy(X, y)
    n, p = X.shape
    h = _check_alpha(alpha, n)
    if h < p:
        raise ValueError(f"h={h} is smaller than p={p}")
    if h == n:
        ols = fit_ols(X, y)
        return FitResult(ols.beta_hat, 0.0, ols.objective, np.arange(n), 0, True, ols.trace,
                         {"mode": "untrimmed", "h": h})

    def fit_subset(H):
        coef = _lstsq(X[H], y[H])
        if coef is None:
            return None
        r = y[H] - X[H] @ coef
        return coef, float(r @ r)

    def losses(coef):
        r = y - X @ coef
        return r * r

    def start_fit(S):
        return _lstsq(X[S], y[S])

    best, mode, used = _trimmed_search(n, h, fit_subset, losses, start_size=p, start_fit=start_fit,
                                       n_starts=n_starts, rng=rng, init_subsets=init_subsets,
                                       max_csteps=max_csteps)
    return FitResult(best.params, 0.0, best.objective, best.subset, best.steps, best.converged,
                     tuple(best.trace), {"mode": mode, "h": h, "starts": used})


# ----------------------------------------------------------------------------
# lasso

def _prepare_lasso(X, y, intercept, standardize, weights=None):
    n, p = X.shape
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
    if intercept:
        sw = w.sum()
        xm = (w @ X) / sw
        ym = float(w @ y) / sw
    else:
        xm = np.zeros(p)
        ym = 0.0
    Xc = X - xm
    if standardize:
        scale = np.sqrt((w @ (Xc * Xc)) / n)
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(p)
    Z = Xc / scale
    colsq = (w @ (Z * Z)) / n
    return Z, y - ym, xm, ym, scale, colsq, w


def lambda_max(X, y, *, intercept=False, standardize=True):
    """Smallest penalty at which the lasso solution is identically zero."""
    X, y = _as_xy(X, y)
    Z, yc, *_ = _prepare_lasso(X, y, intercept, standardize)
    return float(np.max(np.abs(Z.T @ yc)) / X.shape[0])


def fit_lasso(X, y, lam, tol=1e-8, max_iter=10000, *, intercept=False, standardize=True,
              beta0=None, weights=None):
    """Cyclic coordinate descent for (1/2n)|y - X b|^2 + lam |b|_1.

    The penalty acts on coefficients of the standardized columns (unit mean
    square, centred too when ``intercept``); ``beta_hat`` is reported on the
    original scale and ``objective`` on the standardized one.
    """
    X, y = _as_xy(X, y)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    n, p = X.shape
    Z, yc, xm, ym, scale, colsq, w = _prepare_lasso(X, y, intercept, standardize, weights)
    b = np.zeros(p) if beta0 is None else np.asarray(beta0, dtype=float) * scale
    b = np.ascontiguousarray(b)
    resid = np.ascontiguousarray(yc - Z @ b)
    sweeps, converged = kernels.weighted_cd(np.ascontiguousarray(Z.T), resid, b, w, colsq,
                                            float(lam), float(tol), int(max_iter))
    resid = yc - Z @ b
    beta = b / scale
    b0 = ym - float(xm @ beta) if intercept else 0.0
    obj = 0.5 * float(w @ (resid * resid)) / n + lam * float(np.abs(b).sum())
    return FitResult(beta, b0, obj, None, int(sweeps), bool(converged), (obj,),
                     {"lambda": float(lam), "scale": scale})


def fit_sparse_lts(X, y, alpha=0.5, lam=0.0, n_starts=DEFAULT_N_STARTS, rng=None, *, intercept=False,
                   tol=1e-10, max_iter=10000, init_subsets=(), max_csteps=DEFAULT_MAX_CSTEPS):
    """Sparse LTS: minimise (1/2h) sum_{i in H} r_i^2 + lam |beta|_1 over
    h-subsets H and coefficients beta (penalty on the original scale)."""
    X, y = _as_xy(X, y)
    n, p = X.shape
    h = _check_alpha(alpha, n)
    if h < 2:
        raise ValueError(f"h={h} must be at least 2")
    warm = {"beta": None}

    def lasso(S):
        fit = fit_lasso(X[S], y[S], lam, tol, max_iter, intercept=intercept, standardize=False,
                        beta0=warm["beta"])
        return fit

    def fit_subset(H):
        fit = lasso(H)
        if mode_random[0]:
            warm["beta"] = fit.beta_hat
        return (fit.beta_hat, fit.intercept), fit.objective

    def losses(params):
        r = y - X @ params[0] - params[1]
        return r * r

    def start_fit(S):
        fit = fit_lasso(X[S], y[S], lam, tol, max_iter, intercept=intercept, standardize=False)
        return fit.beta_hat, fit.intercept

    # warm starts only outside exact mode, so exhaustive runs stay reproducible
    mode_random = [math.comb(n, h) > n_starts]
    best, mode, used = _trimmed_search(n, h, fit_subset, losses, start_size=min(3, h),
                                       start_fit=start_fit, n_starts=n_starts, rng=rng,
                                       init_subsets=init_subsets, max_csteps=max_csteps,
                                       enumerate_elemental=False)
    beta, b0 = best.params
    return FitResult(beta, b0, best.objective, best.subset, best.steps, best.converged,
                     tuple(best.trace), {"mode": mode, "h": h, "starts": used, "lambda": float(lam)})


# ----------------------------------------------------------------------------
# logistic regression

def deviances(fit, X, y):
    """Per-instance binomial deviance -2[y log p + (1 - y) log(1 - p)]."""
    prob = np.clip(fit.predict_proba(X), _PROB_CLAMP, 1 - _PROB_CLAMP)
    y = np.asarray(y, dtype=float)
    return -2.0 * (y * np.log(prob) + (1 - y) * np.log1p(-prob))


def _check_binary(y):
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic responses must be 0 or 1")
    if y.min() == y.max():
        raise EstimationError(f"all responses equal {y[0]:g}; the likelihood carries no information")


def _loglik(eta, y):
    # sum y eta - log(1 + e^eta), evaluated stably
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def _irls(A, y, tol, max_iter, norm_cap, n_slopes):
    theta = np.zeros(A.shape[1])
    ll = _loglik(A @ theta, y)
    converged = False
    separated = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = A @ theta
        prob = _expit(eta)
        w = prob * (1 - prob)
        grad = A.T @ (y - prob)
        hess = (A * w[:, None]).T @ A
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        theta = theta + step
        ll_new = _loglik(A @ theta, y)
        slopes = theta[-n_slopes:] if n_slopes else theta[:0]
        if not np.all(np.isfinite(theta)) or np.linalg.norm(slopes) > norm_cap:
            separated = True
            ll = ll_new
            break
        small_step = np.max(np.abs(step)) <= 1e-6 * (1.0 + np.max(np.abs(theta)))
        if abs(ll_new - ll) < tol * (abs(ll_new) + 0.1) and small_step:
            ll = ll_new
            converged = True
            break
        ll = ll_new
    return theta, ll, it, converged and not separated, separated


def fit_logistic(X, y, tol=1e-12, max_iter=100, *, intercept=True, norm_cap=30.0):
    """Maximum likelihood logistic regression by IRLS (Newton steps).

    Iterates until the log-likelihood change falls below ``tol`` (relative)
    and the step is negligible. Quasi-separation shows up as a coefficient
    norm beyond ``norm_cap``; the fit is then returned with converged=False.
    """
    X, y = _as_xy(X, y)
    _check_binary(y)
    n, p = X.shape
    A = np.column_stack([np.ones(n), X]) if intercept else X
    theta, ll, it, converged, separated = _irls(A, y, tol, max_iter, norm_cap, p)
    b0, beta = (theta[0], theta[1:]) if intercept else (0.0, theta)
    info = {"loglik": ll, "norm_cap": norm_cap, "separated": separated}
    return FitResult(beta, float(b0), -2.0 * ll, None, it, converged, (-2.0 * ll,), info)


def logistic_gradient(fit, X, y):
    """Gradient of the log-likelihood at ``fit`` (intercept first)."""
    X, y = _as_xy(X, y)
    resid = y - fit.predict_proba(X)
    return np.concatenate([[resid.sum()], X.T @ resid])


def fit_trimmed_logistic(X, y, alpha=0.5, n_starts=DEFAULT_N_STARTS, rng=None, *, tol=1e-12,
                         max_iter=100, intercept=True, norm_cap=30.0, init_subsets=(),
                         max_csteps=DEFAULT_MAX_CSTEPS):
    """Trimmed maximum likelihood: minimise the summed deviance of the h best
    fitting instances, by C-steps on per-instance deviances."""
    X, y = _as_xy(X, y)
    _check_binary(y)
    n, p = X.shape
    h = _check_alpha(alpha, n)
    if h == n:
        fit = fit_logistic(X, y, tol, max_iter, intercept=intercept, norm_cap=norm_cap)
        return FitResult(fit.beta_hat, fit.intercept, fit.objective, np.arange(n), fit.iterations,
                         fit.converged, fit.trace, dict(fit.info, mode="untrimmed", h=h))

    def fit_subset(H):
        ys = y[H]
        if ys.min() == ys.max():
            return None
        fit = fit_logistic(X[H], ys, tol, max_iter, intercept=intercept, norm_cap=norm_cap)
        return fit, fit.objective

    def losses(fit):
        return deviances(fit, X, y)

    def start_fit(S):
        res = fit_subset(S)
        return None if res is None else res[0]

    best, mode, used = _trimmed_search(n, h, fit_subset, losses, start_size=h, start_fit=start_fit,
                                       n_starts=n_starts, rng=rng, init_subsets=init_subsets,
                                       max_csteps=max_csteps, enumerate_elemental=False)
    fit = best.params
    return FitResult(fit.beta_hat, fit.intercept, best.objective, best.subset, best.steps,
                     best.converged, tuple(best.trace),
                     {"mode": mode, "h": h, "starts": used, "inner_converged": fit.converged})


def fit_l1_logistic(X, y, lam, tol=1e-8, max_iter=100, *, intercept=True, standardize=True,
                    inner_tol=1e-9, inner_max_iter=10000, beta0=None, intercept0=None):
    """L1-penalised logistic regression, -loglik/n + lam |b|_1, by IRLS with a
    weighted coordinate-descent lasso inside each Newton step."""
    X, y = _as_xy(X, y)
    _check_binary(y)
    n, p = X.shape
    # fixed column scale so the penalty means the same thing at every Newton step
    if standardize:
        centred = X - X.mean(axis=0) if intercept else X
        scale = np.sqrt(np.mean(centred * centred, axis=0))
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(p)
    Xs = X / scale
    b = np.zeros(p) if beta0 is None else np.asarray(beta0, dtype=float) * scale
    b0 = 0.0
    if intercept:
        ybar = y.mean()
        b0 = math.log(ybar / (1 - ybar)) if intercept0 is None else float(intercept0)
    def penalised(coef, icpt):
        return -_loglik(Xs @ coef + icpt, y) / n + lam * float(np.abs(coef).sum())

    obj_old = penalised(b, b0)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = Xs @ b + b0
        prob = np.clip(_expit(eta), 1e-5, 1 - 1e-5)
        w = prob * (1 - prob)
        z = eta + (y - prob) / w
        inner = fit_lasso(Xs, z, lam, inner_tol, inner_max_iter, intercept=intercept,
                          standardize=False, beta0=b, weights=w)
        nb, nb0 = inner.beta_hat, inner.intercept
        obj = penalised(nb, nb0)
        # step halving: plain IRLS can overshoot on badly scaled columns
        for _ in range(_MAX_HALVINGS):
            if obj <= obj_old:
                break
            nb, nb0 = 0.5 * (b + nb), 0.5 * (b0 + nb0)
            obj = penalised(nb, nb0)
        b, b0 = nb, nb0
        if abs(obj_old - obj) < tol * (abs(obj) + 0.1):
            converged = True
            obj_old = obj
            break
        obj_old = obj
    beta = b / scale
    return FitResult(beta, float(b0), obj_old, None, it, converged, (obj_old,), {"lambda": float(lam)})


def fit_trimmed_l1_logistic(X, y, alpha=0.5, lam=0.0, n_starts=20, rng=None, *,
                            max_csteps=DEFAULT_MAX_CSTEPS, init_subsets=()):
    """C-step trimmed version of ``fit_l1_logistic`` (penalty on the original scale)."""
    X, y = _as_xy(X, y)
    _check_binary(y)
    n, p = X.shape
    h = _check_alpha(alpha, n)

    def fit_subset(H):
        ys = y[H]
        if ys.min() == ys.max():
            return None
        fit = fit_l1_logistic(X[H], ys, lam, standardize=False)
        return fit, fit.objective

    def losses(fit):
        return deviances(fit, X, y)

    def start_fit(S):
        res = fit_subset(S)
        return None if res is None else res[0]

    best, mode, used = _trimmed_search(n, h, fit_subset, losses, start_size=h, start_fit=start_fit,
                                       n_starts=n_starts, rng=rng, init_subsets=init_subsets,
                                       max_csteps=max_csteps, enumerate_elemental=False)
    fit = best.params
    return FitResult(fit.beta_hat, fit.intercept, best.objective, best.subset, best.steps,
                     best.converged, tuple(best.trace), {"mode": mode, "h": h, "lambda": float(lam)})


# ----------------------------------------------------------------------------
# penalty selection

SATURATION = 0.01  # share of null deviance below which a training fit counts as separating


def select_lambda(X, y, rng, *, task="regression", n_folds=5, n_lambda=20, ratio=1e-2,
                  intercept=False):
    """Penalty from a log-spaced grid minimising K-fold CV deviance
    (squared error for regression, binomial deviance for classification)."""
    X, y = _as_xy(X, y)
    n = X.shape[0]
    if task == "regression":
        top = lambda_max(X, y, intercept=intercept)
    else:
        ybar = y.mean()
        top = lambda_max(X, y - ybar, intercept=True)
    if top <= 0:
        return 0.0
    grid = top * np.logspace(0, math.log10(ratio), n_lambda)
    folds = np.array_split(rand.sample_permutation(rng, n), n_folds)
    err = np.zeros(n_lambda)
    for fold in folds:
        train = np.setdiff1d(np.arange(n), fold)
        Xt, yt = X[train], y[train]
        beta, b0 = None, None
        if task != "regression":
            pt = yt.mean()
            null_dev = -2.0 * yt.size * (pt * math.log(pt) + (1 - pt) * math.log(1 - pt)) if 0 < pt < 1 else 0.0
        for k, lam in enumerate(grid):
            if beta is not None and task != "regression" and \
                    float(deviances(fit, Xt, yt).sum()) < SATURATION * null_dev:
                # training fit is (nearly) separating: smaller penalties only overfit further
                err[k:] = math.inf
                break
            try:
                if task == "regression":
                    fit = fit_lasso(Xt, yt, lam, 1e-6, 2000, intercept=intercept, beta0=beta)
                    r = y[fold] - fit.predict(X[fold])
                    err[k] += float(r @ r)
                else:
                    fit = fit_l1_logistic(Xt, yt, lam, 1e-6, 50, beta0=beta, intercept0=b0, inner_tol=1e-6,
                                          inner_max_iter=2000)
                    err[k] += float(deviances(fit, X[fold], y[fold]).sum())
            except EstimationError:
                err[k] = math.inf
                continue
            beta, b0 = fit.beta_hat, fit.intercept
    return float(grid[int(np.argmin(err))])
