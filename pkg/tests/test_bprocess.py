import numpy as np
import pytest

from horizon_calc.bprocess import (
    BProcess,
    CoupledSequence,
    Decomposition,
    InvalidFCSError,
    NotInnerTimeError,
    OutsideSetError,
    bjump,
    bsummation,
    from_path,
    glue,
    merge_fcs_times,
    restrict,
    stop,
    stop_minus,
    validate_fcs,
)
from horizon_calc.grid_paths import SamplePath, make_grid
from horizon_calc.interval_sets import INF, IntervalTypeSet, StoppingTime, intersect_sets, make_interval_set

G = make_grid(1.0, 6)


def setup(k=4, open_=True, values=None):
    dom = make_interval_set(G, [k], [open_])
    v = np.arange(7.0)[None, :] ** 2 if values is None else np.atleast_2d(values)
    return dom, SamplePath(G, v)


def test_one_level_fcs_is_valid_and_glues_to_restriction():
    dom, p = setup()
    cs = CoupledSequence(G, (StoppingTime([4]),), (p,))
    assert validate_fcs(dom, cs).ok
    X = glue(dom, cs)
    assert np.array_equal(X.filled()[0, :4], p.values[0, :4])
    assert np.isnan(X.values[0, 4:]).all()


def test_disagreeing_levels_reported_at_offending_node():
    dom, p = setup()
    bad = p.values.copy()
    bad[0, 2] += 1
    cs = CoupledSequence(G, (StoppingTime([3]), StoppingTime([4])), (SamplePath(G, bad), p))
    rep = validate_fcs(dom, cs)
    assert not rep.ok
    assert [(v.kind, v.scenario, v.node, v.k, v.l) for v in rep.violations] == [("consistency", 0, 2, 1, 2)]
    with pytest.raises(InvalidFCSError) as ei:
        glue(dom, cs)
    assert ei.value.report is not None


def test_levels_differing_outside_set_are_fine():
    dom, p = setup(k=3, open_=True)
    other = p.values.copy()
    other[0, 3:] = -99.0
    cs = CoupledSequence(G, (StoppingTime([3]), StoppingTime([3])), (SamplePath(G, other), p))
    assert validate_fcs(dom, cs).ok


def test_exhaustion_and_debut_violations():
    dom, p = setup(k=4, open_=False)
    rep = validate_fcs(dom, CoupledSequence(G, (StoppingTime([2]),), (p,)))
    assert [v.kind for v in rep.violations] == ["exhaustion"]
    rep = validate_fcs(dom, CoupledSequence(G, (StoppingTime([5]),), (p,)))
    assert [v.kind for v in rep.violations] == ["debut"]


def test_glue_reextracts_levels():
    rng = np.random.default_rng(0)
    dom = make_interval_set(G, [INF], [False])
    x = rng.normal(size=(1, 7))
    l1 = x.copy()
    l1[0, 3:] = 100.0
    cs = CoupledSequence(G, (StoppingTime([2]), StoppingTime([INF])), (SamplePath(G, l1), SamplePath(G, x)))
    X = glue(dom, cs)
    assert np.array_equal(X.filled()[0, :3], l1[0, :3])
    assert np.array_equal(X.filled(), x)


def test_value_outside_set_is_an_error():
    dom, p = setup()
    X = from_path(p, dom)
    assert X.value(0, 3) == 9.0
    with pytest.raises(OutsideSetError):
        X.value(0, 4)


def test_restrict():
    dom, p = setup(k=INF)
    X = from_path(p, dom)
    assert np.array_equal(restrict(X, dom).filled(), X.filled())
    b1 = make_interval_set(G, [5], [True])
    b2 = make_interval_set(G, [3], [False])
    lhs = restrict(restrict(X, b1), intersect_sets(b1, b2))
    rhs = restrict(X, intersect_sets(b1, b2))
    assert np.array_equal(lhs.filled(), rhs.filled())
    assert np.array_equal(bjump(restrict(X, b2)).filled(), restrict(bjump(X), b2).filled())
    with pytest.raises(ValueError):
        restrict(restrict(X, b2), b1)


def test_stop():
    dom, p = setup(k=4, open_=False)
    X = from_path(p, dom)
    assert np.array_equal(stop(X, StoppingTime([4])).filled(), X.filled())
    Y = stop(X, StoppingTime([2]))
    assert list(Y.filled()[0, :5]) == [0, 1, 4, 4, 4]
    assert list(bjump(Y).filled()[0, :5]) == [0, 1, 3, 0, 0]
    with pytest.raises(NotInnerTimeError):
        stop(from_path(p, make_interval_set(G, [4], [True])), StoppingTime([4]))


def test_stop_commutes():
    dom, p = setup(k=INF)
    X = from_path(p, dom)
    T, S = StoppingTime([4]), StoppingTime([2])
    a = stop(stop(X, T), S).filled()
    assert np.array_equal(a, stop(X, T & S).filled())
    assert np.array_equal(a, stop(stop(X, S), T).filled())


def test_stop_minus():
    g = make_grid(1.0, 3)
    p = SamplePath(g, [[0.0, 0.0, 5.0, 5.0]])
    assert list(stop_minus(p, StoppingTime([2])).values[0]) == [0, 0, 0, 0]
    assert list(stop_minus(p, StoppingTime([0])).values[0]) == [0, 0, 0, 0]
    assert list(stop_minus(p, StoppingTime([INF])).values[0]) == [0, 0, 5, 5]
    # no jump at the stopping node: same as ordinary stopping
    q = SamplePath(g, [[1.0, 2.0, 2.0, 3.0]])
    dom = IntervalTypeSet.full(g, 1)
    assert np.array_equal(stop_minus(q, StoppingTime([2])).values, stop(from_path(q, dom), StoppingTime([2])).filled())


def test_bjump():
    dom, p = setup(k=INF)
    X = from_path(p, dom)
    c = from_path(SamplePath(G, np.full((1, 7), 2.0)), dom)
    assert not bjump(c).filled().any()
    assert np.allclose(bjump(2 * X + 3 * c).filled(), 2 * bjump(X).filled() + 3 * bjump(c).filled())
    ind = from_path(SamplePath(G, [[0, 0, 0, 1, 1, 1, 1.0]]), dom)
    assert list(np.flatnonzero(bjump(ind).filled()[0])) == [3]


def test_bsummation():
    dom, p = setup(k=INF)
    X = from_path(p, dom)
    assert not bsummation(X * 0).filled().any()
    s = bsummation(bjump(X)).filled()
    assert np.array_equal(s, X.filled() - X.filled()[:, :1])
    tau = StoppingTime([3])
    cut = BProcess(dom, np.where(np.arange(7) <= 3, X.filled(), 0.0))
    assert np.array_equal(bsummation(cut).filled(), stop(bsummation(X), tau).filled())


def test_merge_fcs_times():
    dom, p = setup(k=INF)
    c1 = CoupledSequence(G, (StoppingTime([2]), StoppingTime([INF])), (p, p))
    c2 = CoupledSequence(G, (StoppingTime([3]), StoppingTime([INF])), (p, p))
    a, b = merge_fcs_times(dom, c1, c2)
    assert [t.index[0] for t in a.times] == [2, INF]
    assert all(np.array_equal(s.index, t.index) for s, t in zip(a.times, b.times))
    assert validate_fcs(dom, a).ok and validate_fcs(dom, b).ok
    assert np.array_equal(glue(dom, a).filled(), glue(dom, c1).filled())
    same, _ = merge_fcs_times(dom, c1, c1)
    assert [t.index[0] for t in same.times] == [2, INF]


def test_decomposition_must_add_up():
    dom, p = setup(k=INF)
    inc = np.diff(p.values, axis=1, prepend=p.values[:, :1])
    Decomposition(0.0, inc, 0.0, 0.0)
    with pytest.raises(ValueError):
        from_path(p, dom, Decomposition(0.0, inc * 2, 0.0, 0.0))
    with pytest.raises(ValueError):
        Decomposition(0.0, np.ones((1, 7)), 0.0, 0.0)


def test_arithmetic_keeps_domain():
    dom, p = setup(k=3, open_=False)
    X = from_path(p, dom)
    Y = X + 2 * X - X
    assert np.allclose(Y.filled(), 2 * X.filled())
    assert np.isnan(Y.values[0, 4:]).all()
    Z = X.minus_initial()
    assert Z.x0[0] == 0
    with pytest.raises(ValueError):
        X + from_path(p, make_interval_set(G, [2], [False]))
