import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgpcm.em import EmConfig
from rgpcm.family import Structure
from rgpcm.selection import ari, bic, classification_table, contingency, select_best, sweep


def pair_counting_ari(a, b):
    """Adjusted Rand index computed pair by pair."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    both = sum(a[i] == a[j] and b[i] == b[j] for i, j in pairs)
    in_a = sum(a[i] == a[j] for i, j in pairs)
    in_b = sum(b[i] == b[j] for i, j in pairs)
    total = len(pairs)
    expected = in_a * in_b / total if total else 0.0
    top = 0.5 * (in_a + in_b)
    if top == expected:
        return 1.0
    return (both - expected) / (top - expected)


def test_bic_examples():
    assert bic(0.0, 1, 1) == 0.0
    assert bic(-100.0, 10, 200) == pytest.approx(200 + 10 * math.log(200))
    assert bic(-100.0, 10, 200) == pytest.approx(252.983, abs=1e-3)
    with pytest.raises(ValueError):
        bic(0.0, 1, 0)


def test_ari_examples():
    assert ari([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert ari([0, 0, 1, 1], [5, 5, 2, 2]) == 1.0
    assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    assert pair_counting_ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)


def _set_partitions(n):
    """Restricted growth strings: every partition of n labelled points once."""
    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for k in range(top + 2):
            yield from rec(prefix + [k], max(top, k))
    yield from rec([], -1)


def test_ari_exhaustive_small():
    for n in range(1, 6):
        parts = list(_set_partitions(n))
        for a in parts:
            for b in parts:
                assert ari(a, b) == pytest.approx(pair_counting_ari(a, b), abs=1e-12)


@given(st.integers(6, 8), st.data())
def test_ari_random_small_partitions(n, data):
    a = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    b = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    assert ari(a, b) == pytest.approx(pair_counting_ari(a, b), abs=1e-12)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=60), st.permutations(range(6)))
def test_ari_identity_and_relabelling(a, perm):
    assert ari(a, a) == 1.0
    relabelled = [perm[v] for v in a]
    assert ari(a, relabelled) == 1.0


def test_contingency_length_mismatch():
    with pytest.raises(ValueError):
        contingency([0, 1], [0])


def test_classification_tables():
    np.testing.assert_array_equal(classification_table([0, 0, 1], [0, 0, 1]), [[2, 0], [0, 1]])
    t = classification_table([0, 1, 2, 2], [0, 0, 0, 0], 3, 2)
    np.testing.assert_array_equal(t, [[1, 0], [1, 0], [2, 0]])


class _Rep:
    def __init__(self, bic, usable=True):
        self.bic, self.usable = bic, usable


def test_select_best_prefers_lower_bic_and_skips_unusable():
    reports = {("EE", 1): _Rep(10.0), ("EE", 2): _Rep(5.0, usable=False), ("VV", 1): _Rep(8.0)}
    assert select_best(reports) == ("VV", 1)
    assert select_best({("EE", 1): _Rep(1.0, usable=False)}) is None


def test_penalty_picks_fewer_parameters():
    ll, n = -50.0, 100
    assert bic(ll, 3, n) < bic(ll, 4, n)


def test_single_cell_sweep():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    res = sweep(x, ["EE"], [1])
    assert res.best == (Structure.EE, 1)
    assert res.bic_table(["EE"], [1])[0][0] == res.best_report.bic


def test_sweep_reports_impossible_cells_as_na():
    x = np.random.default_rng(1).normal(size=(4, 2))
    res = sweep(x, ["EI"], [1, 6], config=EmConfig())
    rep = res.reports[(Structure.EI, 6)]
    assert rep.degenerate and rep.reason
    assert res.bic_table(["EI"], [1, 6])[1] == [None]
