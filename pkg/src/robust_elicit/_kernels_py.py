"""Pure numpy versions of the compiled kernels in ``_core.pyx``."""
import numpy as np


def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def weighted_cd(Xt, resid, beta, w, colsq, lam, tol, max_iter):
    p, n = Xt.shape
    wX = Xt * w
    sweep = 0
    converged = False
    while sweep < max_iter:
        sweep += 1
        max_delta = 0.0
        for j in range(p):
            if colsq[j] <= 0.0:
                continue
            rho = float(wX[j] @ resid) / n + colsq[j] * beta[j]
            new = _soft(rho, lam) / colsq[j]
            delta = new - beta[j]
            if delta != 0.0:
                resid -= Xt[j] * delta
                beta[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            converged = True
            break
    return sweep, converged


def pair_counts(a, b, chunk=2048):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    strict = discordant = tied = 0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        da = a[start:stop, None] - a[None, :]
        db = b[start:stop, None] - b[None, :]
        # keep only j > i
        upper = np.arange(start, stop)[:, None] < np.arange(n)[None, :]
        ordered = upper & (da != 0)
        strict += int(ordered.sum())
        tied += int((ordered & (db == 0)).sum())
        discordant += int((ordered & (da * db < 0)).sum())
    return strict, discordant, tied
