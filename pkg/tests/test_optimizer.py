import numpy as np
import pytest

from metricf.errors import ConfigError, NumericError
from metricf.optimizer import AdagradState, adagrad_update, sum_by_row


def test_zero_gradient_is_identity():
    p = np.array([0.3, -1.0])
    st = AdagradState.like(p)
    adagrad_update(p, np.zeros(2), st)
    assert p.tolist() == [0.3, -1.0]
    assert st.accum.tolist() == [0.0, 0.0]


def test_one_step():
    p = np.zeros(1)
    adagrad_update(p, np.ones(1), AdagradState.like(p, eta=0.05, eps=1e-8))
    assert p[0] == pytest.approx(-0.05 / (1 + 1e-8), rel=1e-15)


def test_second_step_smaller():
    p = np.zeros(1)
    st = AdagradState.like(p, eta=0.05, eps=1e-8)
    adagrad_update(p, np.ones(1), st)
    first = -p[0]
    adagrad_update(p, np.ones(1), st)
    second = -p[0] - first
    assert second == pytest.approx(0.05 / (np.sqrt(2) + 1e-8), rel=1e-12)
    assert second < first


def test_step_bounds_and_monotone_accum():
    rng = np.random.default_rng(0)
    p = np.zeros(5)
    st = AdagradState.like(p, eta=0.1, eps=1e-8)
    prev_acc = st.accum.copy()
    prev_step = np.full(5, np.inf)
    g = rng.normal(size=5)
    for _ in range(20):
        before = p.copy()
        adagrad_update(p, g, st)
        step = np.abs(p - before)
        assert np.all(st.accum >= prev_acc)
        assert np.all(step <= st.eta / st.eps * np.abs(g))
        assert np.all(step <= prev_step + 1e-15)
        prev_acc, prev_step = st.accum.copy(), step


def test_sparse_rows_only_touch_those_rows():
    P = np.ones((4, 2))
    st = AdagradState.like(P)
    adagrad_update(P, np.ones((2, 2)), st, rows=np.array([1, 3]))
    assert P[0].tolist() == [1.0, 1.0] and P[2].tolist() == [1.0, 1.0]
    assert np.all(P[[1, 3]] < 1.0)
    assert st.accum[[0, 2]].sum() == 0.0


def test_nonfinite_gradient_names_param():
    p = np.zeros(2)
    with pytest.raises(NumericError, match="Q"):
        adagrad_update(p, np.array([np.nan, 0.0]), AdagradState.like(p, name="Q"))


def test_state_validation():
    with pytest.raises(ConfigError):
        AdagradState(np.zeros(1), eta=0.0)


def test_sum_by_row():
    rows = np.array([3, 1, 3, 0])
    vals = np.array([[1.0], [2.0], [4.0], [8.0]])
    uniq, summed = sum_by_row(rows, vals)
    assert uniq.tolist() == [0, 1, 3]
    assert summed.ravel().tolist() == [8.0, 2.0, 5.0]
