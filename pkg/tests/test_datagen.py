import math

import numpy as np
import pytest

from robust_elicit import datagen, rand
from robust_elicit.datagen import CVScheme


def test_presets_follow_table_rows():
    c = datagen.preset("reg-p20")
    assert (c.p, c.n, c.n_test, c.n_sub, c.s0) == (20, 250, 100, 125, 20)
    h = datagen.preset("cls-p500")
    assert (h.p, h.n, h.n_test, h.n_sub, h.s0, h.V) == (500, 100, 50, 50, 15, 20)
    assert h.snr_or_mu == 3.0
    assert datagen.preset("reg-p250", snr=2.0).snr_or_mu == 2.0
    with pytest.raises(KeyError):
        datagen.preset("nope")


@pytest.mark.parametrize("bad", [dict(s0=30), dict(n_sub=300), dict(r=1.0), dict(r_val=-0.1),
                                 dict(contam_scheme="x"), dict(task="ranking"), dict(snr=0.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        datagen.preset("reg-p20", **bad)


def test_cv_scheme_labels_roundtrip():
    for cv in (CVScheme("randomized", 10), CVScheme("kfold", 5)):
        assert CVScheme.parse(cv.label) == cv
    with pytest.raises(ValueError):
        CVScheme.parse("loo")
    with pytest.raises(ValueError):
        CVScheme("kfold", 0)


def test_beta_support_size(stream):
    c = datagen.preset("reg-p250")
    beta = datagen.draw_beta(c, stream("b"))
    assert np.count_nonzero(beta) == 15


def test_regression_noise_level(stream):
    c = datagen.preset("reg-p20", snr=2.0)
    d = datagen.gen_regression(c, stream("r"), 40_000)
    assert d.sigma == pytest.approx(math.sqrt(d.beta_true @ d.beta_true / 2.0))
    resid = d.y - d.X @ d.beta_true
    assert np.var(resid) == pytest.approx(d.sigma ** 2, rel=0.03)
    assert abs(d.X.mean() - 2.0) < 0.01


def test_noiseless_regression(stream):
    c = datagen.preset("reg-p20", snr=None)
    d = datagen.gen_regression(c, stream("r"), 50)
    assert d.sigma == 0.0
    assert np.allclose(d.y, d.X @ d.beta_true)
    assert c.snr_or_mu == math.inf


def test_classification_labels(stream):
    c = datagen.preset("cls-p20")
    d = datagen.gen_classification(c, stream("c"), 2000)
    assert set(np.unique(d.y)) == {0.0, 1.0}
    assert 0.3 < d.y.mean() < 0.7  # centred logits


def test_case_y_contamination_copy_and_flags(stream):
    c = datagen.preset("reg-p20")
    d = datagen.generate(c, stream("d"), 400)
    y0 = d.y.copy()
    out = datagen.inject_contamination(d, "case_y", 0.25, 50.0, stream("k"))
    assert np.array_equal(d.y, y0) and not d.contaminated.any()
    assert np.all(out.y[out.contaminated] == 50.0)
    assert np.array_equal(out.y[~out.contaminated], y0[~out.contaminated])
    assert 60 < out.contaminated.sum() < 140


def test_cell_x_contamination_counts(stream):
    c = datagen.preset("reg-p20", contam_scheme="cell_x")
    d = datagen.generate(c, stream("d"), 100)
    out = datagen.inject_contamination(d, "cell_x", 0.15, 50.0, stream("k"))
    assert out.contaminated.sum() == 15
    changed = (out.X != d.X).sum(axis=1)
    assert np.all(changed[out.contaminated] == 2)
    assert np.all(changed[~out.contaminated] == 0)


def test_zero_rate_is_identity(stream):
    d = datagen.generate(datagen.preset("reg-p20"), stream("d"), 30)
    out = datagen.inject_contamination(d, "case_y", 0.0, 50.0, stream("k"))
    assert np.array_equal(out.y, d.y) and not out.contaminated.any()


def test_cell_x_needs_enough_columns(stream):
    d = datagen.generate(datagen.preset("reg-p20"), stream("d"), 30).subset(np.arange(30))
    small = datagen.Dataset(d.X[:, :5], d.y, d.contaminated, None)
    with pytest.raises(ValueError, match="floor"):
        datagen.inject_contamination(small, "cell_x", 0.1, 50.0, stream("k"))


def test_cauchy_mixture_flags(stream):
    d = datagen.gen_cauchy_mixture_regression(20_000, 3, 0.05, stream("m"))
    assert abs(d.contaminated.mean() - 0.05) < 0.006
    resid = d.y - d.X @ d.beta_true
    assert np.std(resid[~d.contaminated]) == pytest.approx(1.0, rel=0.03)


def test_csv_roundtrip(tmp_path, stream):
    c = datagen.preset("reg-p20")
    d = datagen.inject_contamination(datagen.generate(c, stream("d"), 25), "case_y", 0.3, 50.0, stream("k"))
    path = tmp_path / "d.csv"
    datagen.write_dataset_csv(d, path)
    back = datagen.read_dataset_csv(path)
    assert np.array_equal(back.X, d.X) and np.array_equal(back.y, d.y)
    assert np.array_equal(back.contaminated, d.contaminated)
    assert open(path).readline().strip().split(",")[-3:] == ["x20", "y", "contaminated"]


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        datagen.read_dataset_csv(path)
