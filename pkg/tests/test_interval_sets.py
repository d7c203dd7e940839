import numpy as np
import pytest

from horizon_calc.grid_paths import make_grid
from horizon_calc.interval_sets import (
    INF,
    FundamentalSequence,
    IntervalTypeSet,
    StoppingTime,
    intersect_sets,
    intersect_stop,
    is_inner_stopping_time,
    make_interval_set,
    membership,
    predictable_from_fs,
)

G = make_grid(1.0, 8)


def one(k, open_):
    return make_interval_set(G, [k], [open_])


def test_full_set_when_debut_infinite():
    for flag in (True, False):
        s = make_interval_set(G, [INF], [flag])
        assert s.mask.all()
        assert s.debut.index[0] == INF


def test_open_and_closed_sections():
    assert list(np.flatnonzero(one(3, True).mask[0])) == [0, 1, 2]
    assert list(np.flatnonzero(one(3, False).mask[0])) == [0, 1, 2, 3]


def test_open_section_at_zero_is_rejected_with_scenarios():
    with pytest.raises(ValueError, match=r"\[1\]"):
        make_interval_set(G, [2, 0, 0], [True, True, False])


def test_debut_round_trip():
    k = np.array([0, 3, INF, 8])
    s = make_interval_set(G, k, [False, True, True, True])
    assert np.array_equal(s.debut.index, k)


def test_membership():
    assert membership(one(3, False), 0, 3)
    assert not membership(one(3, True), 0, 3)
    assert membership(one(1, True), 0, 0)
    with pytest.raises(IndexError):
        membership(one(3, True), 0, 9)
    with pytest.raises(IndexError):
        membership(one(3, True), 1, 0)


def test_membership_is_down_set():
    rng = np.random.default_rng(0)
    k = rng.integers(1, 9, size=50)
    s = make_interval_set(G, k, rng.random(50) < 0.5)
    m = s.mask.astype(int)
    assert np.all(np.diff(m, axis=1) <= 0)
    assert m[:, 0].all()


def test_predictable_from_fs():
    s = predictable_from_fs(G, [StoppingTime([5]), StoppingTime([5])])
    assert list(np.flatnonzero(s.mask[0])) == list(range(6))
    s = predictable_from_fs(G, [StoppingTime([min(n, 8)]) for n in range(1, 12)])
    assert s.mask.all()
    assert s.kind == "predictable"
    with pytest.raises(ValueError):
        predictable_from_fs(G, [])
    with pytest.raises(ValueError):
        FundamentalSequence((StoppingTime([3]), StoppingTime([2])))


def test_intersect_stop():
    s = one(5, True)
    assert intersect_stop(s, StoppingTime([INF])).same_sections(s)
    r = intersect_stop(s, StoppingTime([3]))
    assert list(np.flatnonzero(r.mask[0])) == [0, 1, 2, 3] and not r.open_flag[0]
    r = intersect_stop(one(3, False), StoppingTime([5]))
    assert list(np.flatnonzero(r.mask[0])) == [0, 1, 2, 3]


def test_intersect_stop_composes():
    rng = np.random.default_rng(2)
    for _ in range(20):
        k = rng.integers(1, 9, size=30)
        s = make_interval_set(G, k, rng.random(30) < 0.5)
        S = StoppingTime(rng.integers(0, 9, size=30))
        T = StoppingTime(rng.integers(0, 9, size=30))
        assert intersect_stop(intersect_stop(s, S), T).same_sections(intersect_stop(s, S & T))


def test_intersect_sets_takes_smaller_section():
    a = make_interval_set(G, [3, 6], [True, False])
    b = make_interval_set(G, [4, 2], [False, True])
    c = intersect_sets(a, b)
    assert list(c.last_member) == [2, 1]


def test_is_inner_stopping_time():
    assert is_inner_stopping_time(one(3, True), StoppingTime([0]))
    assert not is_inner_stopping_time(one(3, True), StoppingTime([3]))
    assert is_inner_stopping_time(one(3, True), StoppingTime([2]))
    assert is_inner_stopping_time(one(3, False), StoppingTime([3]))
    assert is_inner_stopping_time(one(INF, True), StoppingTime([INF]))
    assert not is_inner_stopping_time(one(5, False), StoppingTime([INF]))


def test_kind_metadata_is_checked():
    with pytest.raises(ValueError):
        IntervalTypeSet(G, StoppingTime([2]), [False], kind="weird")


def test_debut_beyond_grid_is_rejected():
    with pytest.raises(ValueError):
        make_interval_set(G, [9], [False])
