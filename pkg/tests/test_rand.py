import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_elicit import rand


def test_same_lineage_same_draws():
    a = rand.derive_stream(7, "s", 3, "train").uniform(10)
    b = rand.derive_stream(7, "s", 3, "train").uniform(10)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("other", [(8, "s", 3, "train"), (7, "t", 3, "train"), (7, "s", 4, "train"),
                                   (7, "s", 3, "test")])
def test_any_lineage_change_changes_draws(other):
    a = rand.derive_stream(7, "s", 3, "train").uniform(5)
    b = rand.derive_stream(*other).uniform(5)
    assert not np.array_equal(a, b)


def test_spawn_is_keyed_and_independent_of_parent_use():
    s1 = rand.derive_stream(1, "s", 0, "x")
    s2 = rand.derive_stream(1, "s", 0, "x")
    s2.uniform(100)
    assert np.array_equal(s1.spawn("c").uniform(4), s2.spawn("c").uniform(4))
    assert s1.spawn("c").lineage != s1.spawn("d").lineage


def test_cauchy_and_normal_argument_checks(stream):
    with pytest.raises(ValueError):
        rand.sample_normal(stream(), 0.0, -1.0, 3)
    with pytest.raises(ValueError):
        rand.sample_cauchy(stream(), 0.0, 0.0, 3)


def test_cauchy_median_and_quartiles(stream):
    z = rand.sample_cauchy(stream("c"), 2.0, 3.0, size=200_000)
    q1, med, q3 = np.quantile(z, [0.25, 0.5, 0.75])
    assert abs(med - 2.0) < 0.05
    assert abs((q3 - q1) / 2 - 3.0) < 0.08


def test_binomial_scalar_and_mean(stream):
    v = rand.sample_binomial(stream("b"), 10, 0.3)
    assert isinstance(v, int) and 0 <= v <= 10
    draws = rand.sample_binomial(stream("b2"), 50, 0.2, size=20_000)
    assert abs(draws.mean() - 10.0) < 0.1


@given(n=st.integers(1, 60), data=st.data())
@settings(max_examples=60, deadline=None)
def test_subset_sorted_distinct_in_range(n, data):
    k = data.draw(st.integers(0, n))
    idx = rand.sample_subset(rand.derive_stream(0, "h", n, str(k)), n, k)
    assert len(idx) == k
    assert np.all(np.diff(idx) > 0)
    assert k == 0 or (idx.min() >= 0 and idx.max() < n)


def test_subset_rejects_k_above_n(stream):
    with pytest.raises(ValueError):
        rand.sample_subset(stream(), 3, 4)


def test_permutation_is_permutation(stream):
    perm = rand.sample_permutation(stream("p"), 37)
    assert sorted(perm.tolist()) == list(range(37))
