import math

import pytest

from robust_elicit import datagen, experiments as ex
from robust_elicit.datagen import CVScheme

SMALL = datagen.preset("reg-p20", p=5, s0=5, n=60, n_test=40, n_sub=30, name="small")
SMALL_CLS = datagen.preset("cls-p20", p=10, s0=5, n=60, n_test=40, n_sub=30, name="small-cls")
K5, B10 = CVScheme("kfold", 5), CVScheme("randomized", 10)
FAST = dict(lts_starts=10, loo_starts=1)


def _opts(**kw):
    return ex.RunOptions(**{**FAST, **kw})


def _strip(rows, prefix_len=None):
    out = []
    for r in rows:
        strategy = r.strategy.split(">", 1)[1] if ">" in r.strategy else r.strategy
        out.append((strategy, r.cv_scheme, r.r, r.repetition, r.metric_name, r.value))
    return sorted(out)


def test_metric_row_validation():
    with pytest.raises(ValueError):
        ex.MetricRow("s", "regression", "case_y", "e", "st", "cv", 0, 0, 1, 0, "bogus", 0.0)
    with pytest.raises(ValueError):
        ex.MetricRow("s", "ranking", "case_y", "e", "st", "cv", 0, 0, 1, 0, "flip_rate", 0.0)


def test_e0_rows_and_grid():
    rows = ex.run("E0", None, 3, ex.RunOptions(V=2))
    assert len(rows) == 3 * 2 * len(ex.E0_NVAL_GRID) * 2
    assert len(ex.E0_NVAL_GRID) == 28 and ex.E0_NVAL_GRID[0] == 100 and ex.E0_NVAL_GRID[-1] == 10**5
    assert {r.snr_or_mu for r in rows} == {5.0, 1.0, 0.2}


def test_e0_noise_variance_matches_true_loss():
    rows = ex.run("E0", None, 3, ex.RunOptions(V=1, n_grid=(10**5,)))
    val = next(r.value for r in rows if r.estimator == "true" and r.snr_or_mu == 5.0)
    assert val == pytest.approx(ex.e0_noise_variance(3, 0, 5.0), rel=0.03)


def test_e1_rows():
    rows = ex.run("E1", None, 3, ex.RunOptions(V=3, n_grid=(100, 1000), lts_starts=10))
    loss_rows = [r for r in rows if r.metric_name == "avg_test_loss"]
    flips = [r for r in rows if r.metric_name == "flip_rate"]
    assert len(loss_rows) == 3 * 2 * 3 * 4
    assert len(flips) == 2 * 4 * 2 and all(r.repetition == ex.AGGREGATE_REP for r in flips)
    assert all(0.0 <= r.value <= 1.0 for r in flips)


def test_e2_row_count_and_zero_rate():
    rows = ex.run("E2", SMALL, 1, _opts(V=2, r_grid=(0.0, 0.25), cv_schemes=(K5, B10)))
    assert len(rows) == 2 * 2 * 9 * 2
    assert all(r.value == 0.0 for r in rows if r.r == 0.0)
    assert all(0.0 <= r.value <= 1.0 for r in rows)


def test_e3_zero_trim_equals_e2_kfold():
    opts = _opts(V=2, r_grid=(0.0,), cv_schemes=(K5,))
    e2 = ex.run("E2", SMALL.with_(contam_scheme="case_y"), 4, opts)
    e3 = ex.run("E3", SMALL, 4, opts)
    assert len(e3) == 2 * len(e2)
    for base in ("classical", "robust"):
        part = [r for r in e3 if r.strategy.startswith(f"loo-{base}>")]
        assert _strip(part) == _strip(e2)


def test_e3_rejects_randomized_only():
    with pytest.raises(ValueError, match="K-fold"):
        ex.run("E3", SMALL, 1, _opts(V=1, cv_schemes=(B10,)))


def test_e4_zero_test_rate_equals_e2_randomized():
    e2 = ex.run("E2", SMALL, 5, _opts(V=2, r_grid=(0.25,), cv_schemes=(B10,)))
    e4 = ex.run("E4", SMALL, 5, _opts(V=2, r_grid=(0.25,), r_val_grid=(0.0,), cv_schemes=(B10,)))
    for cleaner in ("classical", "robust"):
        part = [r for r in e4 if r.strategy.startswith(f"testclean-{cleaner}>")]
        assert _strip(part) == _strip(e2)


def test_e4_grid_has_nine_cells():
    rows = ex.run("E4", SMALL, 5, _opts(V=1, cv_schemes=(B10,)))
    cells = {(r.r, r.r_val) for r in rows}
    assert len(cells) == 9
    assert len(rows) == 9 * 2 * 9


def test_e5_row_counts():
    r_grid, rv_grid = (0.0, 0.25), (0.1, 0.5)
    rows = ex.run("E5", SMALL, 6, _opts(V=2, r_grid=r_grid, r_val_grid=rv_grid))
    by = {}
    for r in rows:
        by.setdefault(r.metric_name, []).append(r)
    assert len(by["weak_ranking_error_test"]) == 2 * 2 * 2 * 2
    assert len(by["weak_ranking_error_train"]) == 1 * 2 * 2 * 2  # r = 0 has no outliers to find
    assert len(by["empirical_bdp"]) == 2 * 2 * 2
    assert all(r.repetition == ex.AGGREGATE_REP for r in by["empirical_bdp"])


def test_e6_zero_trim_equals_e5():
    opts = _opts(V=2, r_grid=(0.0,), r_val_grid=(0.25,))
    e5 = {(r.strategy.split("-")[1], r.repetition, r.metric_name): r.value
          for r in ex.run("E5", SMALL, 7, opts) if r.metric_name == "weak_ranking_error_test"}
    e6 = [r for r in ex.run("E6", SMALL, 7, opts) if r.metric_name == "weak_ranking_error_test"]
    assert {r.strategy for r in e6} == {f"trim-{a}>score-{b}" for a in ("classical", "robust")
                                        for b in ("classical", "robust")}
    for r in e6:
        assert r.value == e5[(r.strategy.split("score-")[1], r.repetition, r.metric_name)]


def test_e6_smoke_full_grid():
    rows = ex.run("E6", SMALL, 8, _opts(V=3))
    assert {r.r for r in rows} == set(datagen.R_GRID)
    assert all(0.0 <= r.value <= 2.0 for r in rows)


@pytest.mark.parametrize("name", ["E2", "E5"])
def test_classification_runs(name):
    rows = ex.run(name, SMALL_CLS, 2, _opts(V=1, r_grid=(0.15,), r_val_grid=(0.25,), cv_schemes=(K5,)))
    assert rows and all(r.task == "classification" and r.snr_or_mu == 3.0 for r in rows)


def test_high_dimensional_uses_sparse_pair():
    cfg = datagen.preset("reg-p250", p=60, s0=5, n=40, n_test=20, n_sub=20)
    rows = ex.run("E2", cfg, 2, _opts(V=1, r_grid=(0.25,), cv_schemes=(K5,)))
    assert {r.estimator for r in rows} == {"lasso/slts"}


def test_determinism_and_workers():
    opts = _opts(V=3, r_grid=(0.25,), cv_schemes=(K5,))
    a = ex.run("E2", SMALL, 11, opts)
    b = ex.run("E2", SMALL, 11, opts)
    c = ex.run("E2", SMALL, 11, ex.RunOptions(**{**opts.__dict__, "workers": 2}))
    assert a == b == c
    d = ex.run("E2", SMALL, 12, opts)
    assert a != d


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("ROBUST_ELICIT_THREADS", "2")
    assert ex.worker_count(8) == 2
    monkeypatch.delenv("ROBUST_ELICIT_THREADS")
    assert ex.worker_count(8) == 8 and ex.worker_count(0) == 1


def test_run_dispatch_errors():
    with pytest.raises(KeyError):
        ex.run("E9")
    with pytest.raises(ValueError):
        ex.run("E2")


def test_rows_sorted():
    rows = ex.run("E1", None, 1, ex.RunOptions(V=2, n_grid=(100,), lts_starts=5))
    assert rows == sorted(rows)
    assert all(math.isinf(r.snr_or_mu) for r in rows)
