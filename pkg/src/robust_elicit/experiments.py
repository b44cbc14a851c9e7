"""Simulation runners E0-E6 producing ``MetricRow`` records.

Each repetition draws all of its randomness from streams keyed by
``(master_seed, scenario key, repetition, purpose)``, so the emitted rows do
not depend on how repetitions are scheduled across worker processes.
"""
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from functools import partial

import numpy as np

from . import bdp, datagen, losses, rand, trimming
from . import estimators as est
from ._util import mid_ranks, ordinal_ranks
from .datagen import CVScheme

METRICS = (
    "hard_ranking_error",
    "weak_ranking_error_train",
    "weak_ranking_error_test",
    "empirical_bdp",
    "avg_test_loss",
    "flip_rate",
)
TASK_LABELS = ("regression", "classification")
CONTAM_LABELS = ("case_y", "cell_x", "none", "cauchy_mix")
AGGREGATE_REP = -1  # repetition value of rows summarising all repetitions

E0_SNRS = (5.0, 1.0, 0.2)
E0_NVAL_GRID = tuple(c * 10**e for e in (2, 3, 4) for c in range(1, 10)) + (10**5,)
E1_NTEST_GRID = (100, 200, 500, 1000, 2000, 5000, 10000)
E1_AGGREGATORS = ("mean", "oracle", "trimmed", "arctan")
E1_TRIM_ALPHA = 0.05


@dataclass(frozen=True, order=True)
class MetricRow:
    scenario_id: str
    task: str
    contam_scheme: str
    estimator: str
    strategy: str
    cv_scheme: str
    r: float
    r_val: float
    snr_or_mu: float
    repetition: int
    metric_name: str
    value: float

    def __post_init__(self):
        if self.metric_name not in METRICS:
            raise ValueError(f"unknown metric {self.metric_name!r}")
        if self.task not in TASK_LABELS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.contam_scheme not in CONTAM_LABELS:
            raise ValueError(f"unknown contamination label {self.contam_scheme!r}")


FIELD_NAMES = tuple(f.name for f in fields(MetricRow))


@dataclass(frozen=True)
class RunOptions:
    """Desk-scale knobs; ``None`` means the runner's default."""

    V: int | None = None
    r_grid: tuple | None = None
    r_val_grid: tuple | None = None
    cv_schemes: tuple | None = None
    lts_starts: int = 50
    loo_starts: int = 5
    lam: float | None = None
    workers: int = 1
    identify_train: bool = True
    n_grid: tuple | None = None


def worker_count(requested):
    cap = os.environ.get("ROBUST_ELICIT_THREADS")
    n = max(1, int(requested))
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _map_reps(fn, V, workers):
    workers = worker_count(workers)
    if workers == 1 or V == 1:
        return [fn(v) for v in range(V)]
    with ProcessPoolExecutor(max_workers=min(workers, V)) as pool:
        return list(pool.map(fn, range(V)))


def _scenario_key(cfg):
    return f"{cfg.name}|{cfg.task}|{cfg.contam_scheme}|{cfg.snr_or_mu:g}"


def _streams(cfg, master_seed, rep):
    key = _scenario_key(cfg)
    return lambda purpose: rand.derive_stream(master_seed, key, rep, purpose)


def _row(cfg, estimator, strategy, cv_label, r, r_val, rep, metric, value, scenario_id=None):
    return MetricRow(scenario_id or cfg.scenario_id, cfg.task, cfg.contam_scheme, estimator, strategy,
                     cv_label, float(r), float(r_val), cfg.snr_or_mu, int(rep), metric, float(value))


def _low_dim(cfg):
    return cfg.p < cfg.n_sub


def model_pair(cfg, lam, opts):
    """(classical, robust) fitters for a scenario and the estimator label."""
    if cfg.task == "regression":
        if _low_dim(cfg):
            pair = (trimming.ols_fitter(), trimming.lts_fitter(0.5, opts.lts_starts, opts.loo_starts))
        else:
            pair = (trimming.lasso_fitter(lam), trimming.slts_fitter(lam, 0.5, 10, min(opts.loo_starts, 3)))
    else:
        if _low_dim(cfg):
            pair = (trimming.logit_fitter(), trimming.trimmed_logit_fitter(0.5, 10, min(opts.loo_starts, 3)))
        else:
            pair = (trimming.l1_logit_fitter(lam), trimming.trimmed_l1_logit_fitter(lam, 0.5, 5, 2))
    return pair, f"{pair[0].name}/{pair[1].name}"


def _penalty(cfg, data, stream, opts):
    if _low_dim(cfg):
        return None
    if opts.lam is not None:
        return opts.lam
    return est.select_lambda(data.X, data.y, stream("lambda"), task=cfg.task)


def _base_data(cfg, stream, n_test=None):
    beta = datagen.draw_beta(cfg, stream("beta"))
    train = datagen.generate(cfg, stream("train"), cfg.n, beta)
    test = datagen.generate(cfg, stream("test"), n_test or cfg.n_test, beta)
    return beta, train, test


def _contaminate(cfg, data, r, stream, purpose):
    return datagen.inject_contamination(data, cfg.contam_scheme, r, cfg.gross_value, stream(f"{purpose}-{r:g}"))


def _sorted(rows):
    return sorted(rows)


# ----------------------------------------------------------------------------
# E0: test-loss fluctuation on clean data

E0_CONFIG = datagen.preset("reg-p20", name="e0-fluctuation")


def _e0_beta(master_seed, rep):
    return datagen.draw_beta(E0_CONFIG, rand.derive_stream(master_seed, E0_CONFIG.name, rep, "beta"))


def e0_noise_variance(master_seed, rep, snr):
    """sigma^2 = |beta|^2 / snr of the E0 design in repetition ``rep``; the
    risk of the true coefficients."""
    beta = _e0_beta(master_seed, rep)
    return float(beta @ beta) / snr


def _e0_rep(master_seed, snrs, n_val_grid, rep):
    cfg = E0_CONFIG
    rows = []
    beta = _e0_beta(master_seed, rep)
    n_max = max(n_val_grid)
    for snr in snrs:
        c = cfg.with_(snr=snr)
        stream = _streams(c, master_seed, rep)
        train = datagen.gen_regression(c, stream("train"), c.n, beta)
        test = datagen.gen_regression(c, stream("test"), n_max, beta)
        fit = est.fit_ols(train.X, train.y)
        csum = {
            "true": np.cumsum(losses.squared_loss(test.y, test.X @ beta)),
            "ols": np.cumsum(losses.squared_loss(test.y, fit.predict(test.X))),
        }
        for name, cs in csum.items():
            for m in n_val_grid:
                rows.append(MetricRow(cfg.name, "regression", "none", name, "mean", f"holdout-n{m}", 0.0, 0.0,
                                      float(snr), rep, "avg_test_loss", float(cs[m - 1] / m)))
    return rows


def run_E0_fluctuation(master_seed, opts=RunOptions()):
    """Average squared test loss of the true and OLS coefficients on growing
    clean test sets, for each training SNR."""
    V = opts.V or 50
    grid = tuple(sorted(opts.n_grid or E0_NVAL_GRID))
    rows = _map_reps(partial(_e0_rep, master_seed, E0_SNRS, grid), V, opts.workers)
    return _sorted(r for rep in rows for r in rep)


# ----------------------------------------------------------------------------
# E1: Cauchy-contaminated validation

def _e1_aggregates(loss, flags):
    return {
        "mean": losses.aggregate_mean(loss),
        "oracle": losses.aggregate_oracle(loss, flags)[0],
        "trimmed": losses.aggregate_trimmed(loss, E1_TRIM_ALPHA),
        "arctan": losses.aggregate_transformed(loss, "arctan"),
    }


def _e1_rep(master_seed, n_test_grid, lts_starts, rep):
    stream = lambda purpose: rand.derive_stream(master_seed, "e1-cauchy", rep, purpose)  # noqa: E731
    p, n, mix = 20, 250, 0.05
    beta = rand.sample_normal(stream("beta"), 1.0, 1.0, size=p)
    train = datagen.gen_cauchy_mixture_regression(n, p, mix, stream("train"), beta)
    test = datagen.gen_cauchy_mixture_regression(max(n_test_grid), p, mix, stream("test"), beta)
    models = {
        "true": test.X @ beta,
        "ols": est.fit_ols(train.X, train.y).predict(test.X),
        "lts": est.fit_lts(train.X, train.y, 0.5, lts_starts, stream("lts")).predict(test.X),
    }
    rows = []
    table = {}
    for m in n_test_grid:
        for name, pred in models.items():
            loss = losses.squared_loss(test.y[:m], pred[:m])
            flags = test.contaminated[:m]
            if flags.all():
                continue
            aggs = _e1_aggregates(loss, flags)
            for agg, value in aggs.items():
                table[(name, agg, m)] = value
                rows.append(MetricRow("e1-cauchy", "regression", "cauchy_mix", name, agg, f"holdout-n{m}",
                                      mix, mix, math.inf, rep, "avg_test_loss", value))
    return rows, table


def run_E1_cauchy(master_seed, opts=RunOptions()):
    """OLS and LTS against the true coefficients under a 5% Cauchy error
    mixture, scored by four test-loss aggregators; flip_rate rows give the
    share of repetitions in which the estimate beats the truth."""
    V = opts.V or 100
    grid = tuple(sorted(opts.n_grid or E1_NTEST_GRID))
    results = _map_reps(partial(_e1_rep, master_seed, grid, opts.lts_starts), V, opts.workers)
    rows = [r for rep_rows, _ in results for r in rep_rows]
    for name in ("ols", "lts"):
        for agg in E1_AGGREGATORS:
            for m in grid:
                wins = [t[(name, agg, m)] < t[("true", agg, m)] for _, t in results
                        if (name, agg, m) in t]
                if wins:
                    rows.append(MetricRow("e1-cauchy", "regression", "cauchy_mix", name, agg, f"holdout-n{m}",
                                          0.05, 0.05, math.inf, AGGREGATE_REP, "flip_rate", float(np.mean(wins))))
    return _sorted(rows)


# ----------------------------------------------------------------------------
# E2-E4: batch ranking

def _batch_rows(cfg, data, test_X, test_y, cv, fitters, est_label, r, r_val, rep, stream, prefix=""):
    n = data.n
    batches = trimming.make_batches(n, cv, stream(f"batches-{cv.label}-{r:g}"), cfg.n_sub)
    train_sets = trimming.training_sets(batches, n, cv)
    truth = trimming.true_batch_ranking(train_sets, data.contaminated)
    scores, _ = trimming.score_batches(data.X, data.y, train_sets, fitters, test_X, test_y,
                                       stream(f"fits-{cv.label}-{r:g}"))
    rows = []
    for strategy, s in scores.items():
        err = losses.hard_ranking_error(truth, mid_ranks(s))
        rows.append(_row(cfg, est_label, prefix + strategy, cv.label, r, r_val, rep, "hard_ranking_error", err))
    return rows


E2_CV = (CVScheme("randomized", 10), CVScheme("randomized", 100), CVScheme("kfold", 5), CVScheme("kfold", 10))


def _e2_rep(cfg, master_seed, opts, r_grid, cvs, rep):
    stream = _streams(cfg, master_seed, rep)
    _, clean, test = _base_data(cfg, stream)
    rows = []
    for r in r_grid:
        train = _contaminate(cfg, clean, r, stream, "contam-train")
        fitters, label = model_pair(cfg, _penalty(cfg, train, stream, opts), opts)
        for cv in cvs:
            rows += _batch_rows(cfg, train, test.X, test.y, cv, fitters, label, r, 0.0, rep, stream)
    return rows


def run_E2_batch_ranking_cleanTest(cfg, master_seed, opts=RunOptions()):
    """Hard ranking error of batch-outlyingness rankings against the true
    contamination ranking, with a clean external test set."""
    r_grid = tuple(opts.r_grid if opts.r_grid is not None else datagen.R_GRID)
    cvs = tuple(opts.cv_schemes or E2_CV)
    V = opts.V or cfg.V
    reps = _map_reps(partial(_e2_rep, cfg, master_seed, opts, r_grid, cvs), V, opts.workers)
    return _sorted(r for rep in reps for r in rep)


def _e3_rep(cfg, master_seed, opts, r_grid, cvs, rep):
    stream = _streams(cfg, master_seed, rep)
    _, clean, test = _base_data(cfg, stream)
    rows = []
    for r in r_grid:
        train = _contaminate(cfg, clean, r, stream, "contam-train")
        fitters, label = model_pair(cfg, _penalty(cfg, train, stream, opts), opts)
        for base_name, base in zip(("classical", "robust"), fitters):
            report = trimming.loo_trim_training(train.X, train.y, r, base, stream(f"loo-{r:g}-{base_name}"))
            kept = train.subset(report.kept)
            for cv in cvs:
                rows += _batch_rows(cfg, kept, test.X, test.y, cv, fitters, label, r, 0.0, rep, stream,
                                    prefix=f"loo-{base_name}>")
    return rows


def run_E3_batch_ranking_postLooTrim(cfg, master_seed, opts=RunOptions()):
    """As E2 on K-fold batches, after LOO trimming of the training data at
    rate alpha = r with a classical or robust base fitter."""
    r_grid = tuple(opts.r_grid if opts.r_grid is not None else datagen.R_GRID)
    cvs = tuple(cv for cv in (opts.cv_schemes or E2_CV) if cv.kind == "kfold")
    if not cvs:
        raise ValueError("E3 runs K-fold schemes only")
    V = opts.V or cfg.V
    reps = _map_reps(partial(_e3_rep, cfg, master_seed, opts, r_grid, cvs), V, opts.workers)
    return _sorted(r for rep in reps for r in rep)


def _e4_rep(cfg, master_seed, opts, r_grid, r_val_grid, cvs, rep):
    stream = _streams(cfg, master_seed, rep)
    _, clean, clean_test = _base_data(cfg, stream)
    rows = []
    for r in r_grid:
        train = _contaminate(cfg, clean, r, stream, "contam-train")
        fitters, label = model_pair(cfg, _penalty(cfg, train, stream, opts), opts)
        full = [f.fit(train.X, train.y, stream(f"full-{r:g}-{name}"))
                for name, f in zip(("classical", "robust"), fitters)]
        for r_val in r_val_grid:
            test = _contaminate(cfg, clean_test, r_val, stream, "contam-test")
            for cleaner, model, fitter in zip(("classical", "robust"), full, fitters):
                report = trimming.trim_test_instances(test.X, test.y, model, r_val, fitter.loss)
                kept = test.subset(report.kept)
                for cv in cvs:
                    rows += _batch_rows(cfg, train, kept.X, kept.y, cv, fitters, label, r, r_val, rep, stream,
                                        prefix=f"testclean-{cleaner}>")
    return rows


def run_E4_batch_ranking_contamTest(cfg, master_seed, opts=RunOptions()):
    """Randomized-CV batch ranking against a contaminated test set that was
    first trimmed at rate r_val by a model trained on all training data."""
    r_grid = tuple(opts.r_grid if opts.r_grid is not None else datagen.R_GRID_CONTAM_TEST)
    r_val_grid = tuple(opts.r_val_grid if opts.r_val_grid is not None else datagen.R_GRID_CONTAM_TEST)
    cvs = tuple(cv for cv in (opts.cv_schemes or E2_CV) if cv.kind == "randomized")
    if not cvs:
        raise ValueError("E4 runs randomized schemes only")
    V = opts.V or cfg.V
    reps = _map_reps(partial(_e4_rep, cfg, master_seed, opts, r_grid, r_val_grid, cvs), V, opts.workers)
    return _sorted(r for rep in reps for r in rep)


# ----------------------------------------------------------------------------
# E5-E6: instance identification

def _weak_error(scores, flags):
    """Weak ranking error of a score vector and the realized outlier count M."""
    flags = np.asarray(flags, dtype=bool)
    M = int(flags.sum())
    if M == 0:
        return None, 0
    return losses.weak_ranking_error(np.flatnonzero(flags), ordinal_ranks(scores), M), M


def _test_scores(fitter, model, test):
    return fitter.pointwise_loss(model, test.X, test.y)


def _instance_rep(cfg, master_seed, opts, r_grid, r_val_grid, post_trim, rep):
    stream = _streams(cfg, master_seed, rep)
    _, clean, clean_test = _base_data(cfg, stream)
    rows = []
    bdp_inputs = []
    for r in r_grid:
        train = _contaminate(cfg, clean, r, stream, "contam-train")
        fitters, _ = model_pair(cfg, _penalty(cfg, train, stream, opts), opts)
        names = ("classical", "robust")
        train_err = {}
        kept = {}
        for name, fitter in zip(names, fitters):
            need_loo = opts.identify_train or (post_trim and r > 0)
            if need_loo and r > 0:
                scores, _ = trimming.loo_scores(train.X, train.y, fitter, stream(f"loo-{r:g}-{name}"))
                train_err[name] = _weak_error(scores, train.contaminated)[0] if opts.identify_train else None
                if post_trim:
                    k = trimming.drop_count(train.n, r)
                    kept[name] = np.sort(trimming.top_order(scores)[k:])
            else:
                train_err[name] = None
                kept[name] = np.arange(train.n)
        # test-scoring models
        if post_trim:
            strategies = [(f"trim-{tb}>score-{sc}", tb, sc) for tb in names for sc in names]
        else:
            strategies = [(f"pretrim-{sc}", sc, sc) for sc in names]
        by_name = dict(zip(names, fitters))
        models = {}
        for label, tb, sc in strategies:
            idx = kept[tb] if post_trim else np.arange(train.n)
            data = train.subset(idx)
            models[label] = by_name[sc].fit(data.X, data.y, stream(f"full-{r:g}-{sc}-{len(idx)}"))
        for r_val in r_val_grid:
            test = _contaminate(cfg, clean_test, r_val, stream, "contam-test")
            for label, tb, sc in strategies:
                fitter = by_name[sc]
                est_name = fitter.name
                err, M = _weak_error(_test_scores(fitter, models[label], test), test.contaminated)
                bdp_inputs.append(((r, r_val, label, est_name), 0.0 if err is None else err))
                if err is not None:
                    rows.append(_row(cfg, est_name, label, "none", r, r_val, rep, "weak_ranking_error_test", err))
                terr = train_err[tb]
                if terr is not None:
                    rows.append(_row(cfg, by_name[tb].name, label, "none", r, r_val, rep,
                                     "weak_ranking_error_train", terr))
    return rows, bdp_inputs


def _instance_run(cfg, master_seed, opts, post_trim):
    r_grid = tuple(opts.r_grid if opts.r_grid is not None else datagen.R_GRID)
    r_val_grid = tuple(opts.r_val_grid if opts.r_val_grid is not None else datagen.R_GRID_CONTAM_TEST)
    V = opts.V or cfg.V
    reps = _map_reps(partial(_instance_rep, cfg, master_seed, opts, r_grid, r_val_grid, post_trim), V, opts.workers)
    rows = [r for rep_rows, _ in reps for r in rep_rows]
    collected = {}
    for _, inputs in reps:
        for key, value in inputs:
            collected.setdefault(key, []).append(value)
    for (r, r_val, label, est_name), errs in collected.items():
        rows.append(_row(cfg, est_name, label, "none", r, r_val, AGGREGATE_REP, "empirical_bdp",
                         bdp.experiment_bdp(errs)))
    return _sorted(rows)


def run_E5_instance_id_preTrim(cfg, master_seed, opts=RunOptions()):
    """Weak ranking errors for identifying contaminated training instances
    (LOO scores) and test instances (full-training-data model), plus the
    empirical BDP over repetitions."""
    return _instance_run(cfg, master_seed, opts, post_trim=False)


def run_E6_instance_id_postTrim(cfg, master_seed, opts=RunOptions()):
    """As E5, but test instances are scored by a model refitted on the
    LOO-trimmed training data (trim base x scorer strategy grid)."""
    return _instance_run(cfg, master_seed, opts, post_trim=True)


RUNNERS = {
    "E0": run_E0_fluctuation,
    "E1": run_E1_cauchy,
    "E2": run_E2_batch_ranking_cleanTest,
    "E3": run_E3_batch_ranking_postLooTrim,
    "E4": run_E4_batch_ranking_contamTest,
    "E5": run_E5_instance_id_preTrim,
    "E6": run_E6_instance_id_postTrim,
}
NEEDS_SCENARIO = {"E2", "E3", "E4", "E5", "E6"}


def run(name, cfg=None, master_seed=0, opts=RunOptions()):
    try:
        runner = RUNNERS[name]
    except KeyError:
        raise KeyError(f"unknown runner {name!r}; choose from {', '.join(RUNNERS)}") from None
    if name in NEEDS_SCENARIO:
        if cfg is None:
            raise ValueError(f"{name} needs a scenario")
        return runner(cfg, master_seed, opts)
    return runner(master_seed, opts)
